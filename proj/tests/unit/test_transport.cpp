#include "ivmqr/error.hpp"
#include "ivmqr/model.hpp"
#include "ivmqr/transport.hpp"

#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <random>

using namespace ivmqr;

namespace {

ConvexPotential sample_smooth_max()
{
  Mat a(3, 2);
  a << 1.0, 0.5, -0.3, 1.2, 0.8, -0.7;
  Vec b(3);
  b << 0.1, -0.2, 0.05;
  return ConvexPotential::smooth_max(ReferenceDomain::cube(2), a, b, 0.2, 0.05);
}

Vec point(double a, double b)
{
  Vec u(2);
  u << a, b;
  return u;
}

} // namespace

TEST_CASE("quadratic potential has affine gradient")
{
  Mat A(2, 2);
  A << 2.0, 0.5, 0.5, 1.0;
  Vec b(2);
  b << 0.1, -0.3;
  const auto phi = ConvexPotential::quadratic(ReferenceDomain::cube(2), A, b, 0.7);
  const Vec u = point(0.3, 0.6);
  CHECK(phi.value(u) == doctest::Approx(0.5 * u.dot(A * u) + b.dot(u) + 0.7));
  CHECK((phi.gradient(u) - (A * u + b)).norm() < 1e-14);
  CHECK((phi.hessian(u) - A).norm() < 1e-14);
  CHECK(phi.affine_gradient());
}

TEST_CASE("smooth-max derivatives agree with central differences")
{
  const auto phi = sample_smooth_max();
  const double h = 1e-5;
  for (const Vec& u : { point(0.2, 0.3), point(0.7, 0.9), point(0.5, 0.05) }) {
    Vec fd(2);
    Mat hfd(2, 2);
    std::vector<Mat> tfd(2);
    for (int i = 0; i < 2; ++i) {
      Vec e = Vec::Zero(2);
      e(i) = h;
      fd(i) = (phi.value(u + e) - phi.value(u - e)) / (2 * h);
      hfd.col(i) = (phi.gradient(u + e) - phi.gradient(u - e)) / (2 * h);
      tfd[i] = (phi.hessian(u + e) - phi.hessian(u - e)) / (2 * h);
    }
    CHECK((phi.gradient(u) - fd).norm() < 1e-8);
    CHECK((phi.hessian(u) - hfd).norm() < 1e-7);
    const auto T = phi.third_derivative(u);
    for (int l = 0; l < 2; ++l)
      CHECK((T[l] - tfd[l]).norm() < 1e-5);
    Eigen::SelfAdjointEigenSolver<Mat> es(phi.hessian(u));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("class membership reports exact eigenvalues of an affine map")
{
  Mat A(2, 2);
  A << 1.0, 0.0, 0.0, 0.5;
  const QuantileMap q(ConvexPotential::quadratic(ReferenceDomain::cube(2), A, Vec::Zero(2)));
  const auto g = build_grid(q.domain(), 10);
  const ClassReport in = check_class_membership(q, g, 0.4, 2.0);
  CHECK(in.pass);
  CHECK(in.min_eigenvalue == doctest::Approx(0.5));
  CHECK(in.max_eigenvalue == doctest::Approx(1.0));
  CHECK_FALSE(check_class_membership(q, g, 0.6, 2.0).pass);
}

TEST_CASE("evaluation outside U is rejected")
{
  const QuantileMap q(ConvexPotential::quadratic(ReferenceDomain::cube(2), Mat::Identity(2, 2), Vec::Zero(2)));
  CHECK_THROWS_AS(eval_map(q, point(1.5, 0.5)), Error);
  CHECK(jacobian(q, point(1.0, 0.5)).boundary_warning);
  CHECK_FALSE(jacobian(q, point(0.5, 0.5)).boundary_warning);
}

TEST_CASE("gradient maps are cyclically monotone, reflections are not")
{
  const QuantileMap q(sample_smooth_max());
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<std::vector<Vec>> cycles;
  for (int k = 0; k < 200; ++k) {
    std::vector<Vec> c;
    for (int j = 0; j < 4; ++j)
      c.push_back(point(unif(rng), unif(rng)));
    c.push_back(c.front());
    cycles.push_back(c);
  }
  const CycleReport good = cyclical_monotonicity_check(q, cycles);
  CHECK(good.monotone);
  CHECK(good.strict);

  struct Reflect : VectorMap
  {
    ReferenceDomain U = ReferenceDomain::cube(2);
    const ReferenceDomain& domain() const override { return U; }
    Vec value(const Vec& u) const override { return -u; }
    Mat jacobian(const Vec&) const override { return -Mat::Identity(2, 2); }
  } r;
  CHECK_FALSE(cyclical_monotonicity_check(r, cycles).monotone);
}

TEST_CASE("Legendre inversion round-trips the logit map")
{
  Vec m(2);
  m << 0.0, 0.5;
  const QuantileMap q(logit_potential(m));
  for (const Vec& u : { point(0.1, 0.2), point(0.9, 0.4), point(0.0, 1.0) }) {
    const Vec y = q.value(u);
    const Vec back = legendre_invert(q, y);
    CHECK((q.value(back) - y).norm() < 1e-8);
    CHECK((back - u).norm() < 1e-6);
  }
  // a point far outside q(U) has no preimage
  CHECK_FALSE(try_legendre_invert(q, point(5.0, 5.0)).has_value());
}

TEST_CASE("bijectivity probe on an invertible map")
{
  const QuantileMap q(sample_smooth_max());
  const BijectivityReport r = bijectivity_probe(q, build_grid(q.domain(), 12));
  CHECK(r.pass);
  CHECK(r.failed_inversions == 0);
  CHECK(r.max_round_trip < 1e-6);
}
