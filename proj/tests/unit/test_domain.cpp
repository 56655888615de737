#include "ivmqr/domain.hpp"
#include "ivmqr/error.hpp"

#include "doctest.h"

#include <cmath>

using namespace ivmqr;

TEST_CASE("cube membership, projection and boundary distance")
{
  const auto U = ReferenceDomain::cube(2);
  CHECK(U.contains(Vec::Constant(2, 0.5)));
  CHECK_FALSE(U.contains(Vec::Constant(2, 1.1)));
  Vec u(2);
  u << 0.2, 0.7;
  CHECK(U.boundary_distance(u) == doctest::Approx(0.2));
  u << 1.5, -0.5;
  const Vec pu = U.project(u);
  CHECK(pu(0) == 1.0);
  CHECK(pu(1) == 0.0);
  CHECK(U.volume() == 1.0);
  CHECK(U.diameter() == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("ball projection and volume")
{
  const auto B = ReferenceDomain::ball(2);
  Vec u(2);
  u << 3.0, 4.0;
  const Vec pu = B.project(u);
  CHECK(pu(0) == doctest::Approx(0.6));
  CHECK(pu(1) == doctest::Approx(0.8));
  CHECK(B.volume() == doctest::Approx(M_PI));
  u << 0.6, 0.0;
  CHECK(B.boundary_distance(u) == doctest::Approx(0.4));
}

TEST_CASE("grid weights sum to the volume")
{
  CHECK(build_grid(ReferenceDomain::cube(2), 17).total_weight() == doctest::Approx(1.0));
  CHECK(build_grid(ReferenceDomain::ball(2), 40).total_weight() == doctest::Approx(M_PI).epsilon(1e-3));
  CHECK_THROWS_AS(build_grid(ReferenceDomain::cube(2), 0), Error);
}

TEST_CASE("uniform cube draws have the right moments")
{
  const int n = 20000;
  const Mat s = sample_mu(ReferenceMeasure::uniform_cube(2), n, 3);
  const double sd = std::sqrt(1.0 / 12.0 / n);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(s.row(i).mean() - 0.5) < 5 * sd);
  CHECK(s.minCoeff() >= 0.0);
  CHECK(s.maxCoeff() <= 1.0);
}

TEST_CASE("spherical uniform radius is uniform on [0,1]")
{
  const int n = 20000;
  const Mat s = sample_mu(ReferenceMeasure::spherical_uniform(2), n, 4);
  const Vec r = s.colwise().norm();
  CHECK(std::abs(r.mean() - 0.5) < 5 * std::sqrt(1.0 / 12.0 / n));
  int inner = 0;
  for (int i = 0; i < n; ++i)
    inner += r(i) < 0.5;
  // uniform radius puts half the mass inside r = 1/2, not a quarter
  CHECK(std::abs(inner / double(n) - 0.5) < 0.02);
}

TEST_CASE("sampling is reproducible and streams differ")
{
  const auto mu = ReferenceMeasure::uniform_cube(2);
  CHECK(sample_mu(mu, 100, 9) == sample_mu(mu, 100, 9));
  CHECK(sample_mu(mu, 100, 9) != sample_mu(mu, 100, 10));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("measure of a quadrant")
{
  const auto mu = ReferenceMeasure::uniform_cube(2);
  const auto g = build_grid(mu.domain(), 40);
  const double m = measure_of_set(mu, [](const Vec& u) { return u(0) < 0.5 && u(1) < 0.5; }, g);
  CHECK(m == doctest::Approx(0.25));
}
