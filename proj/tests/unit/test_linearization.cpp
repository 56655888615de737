#include "ivmqr/error.hpp"
#include "ivmqr/identification.hpp"
#include "ivmqr/linearization.hpp"

#include "doctest.h"

#include <cmath>

using namespace ivmqr;

namespace {

struct Setup
{
  StructuralModel model;
  FieldSet fields;
  std::vector<const VectorMap*> maps;
  std::shared_ptr<const QuadratureGrid> grid;

  explicit Setup(StructuralModel m, int res = 30)
    : model(std::move(m))
    , fields(exact_fields(model))
    , maps(map_pointers(model.maps))
    , grid(std::make_shared<const QuadratureGrid>(build_grid(model.domain(), res)))
  {}
};

} // namespace

TEST_CASE("phi at the truth is mu")
{
  Setup s(example1_default(0.9));
  const auto mu = reference_measure_on(s.model.measure, s.grid);
  for (int z = 0; z < 2; ++z) {
    CHECK(tv_norm(phi(s.maps, z, s.fields, s.grid) - mu) < 1e-12);
    CHECK(tv_norm(phi(s.maps, z, s.fields, s.grid, PhiMode::cell) - mu) < 1e-9);
  }
  CHECK(mu.total_mass() == doctest::Approx(1.0));
}

TEST_CASE("tv norm is the weighted l1 norm")
{
  auto g = std::make_shared<const QuadratureGrid>(build_grid(ReferenceDomain::cube(1), 4));
  Vec rho(4);
  rho << 1.0, -2.0, 0.0, 3.0;
  CHECK(tv_norm(SignedGridMeasure(g, rho)) == doctest::Approx(6.0 / 4.0));
  CHECK(tv_norm(2.0 * SignedGridMeasure(g, rho)) == doctest::Approx(3.0));
}

TEST_CASE("pinned directions vanish on the boundary and are normalized")
{
  Setup s(example1_default(0.9));
  const TangentSample ts = sample_tangent(s.maps, {}, 3, 3);
  REQUIRE(ts.directions.size() == 3);
  const Mat lattice = tangent_lattice(s.model.domain());
  for (const auto& h : ts.directions) {
    CHECK(sup_norm(h, lattice) == doctest::Approx(1.0));
    for (int d = 0; d < 2; ++d)
      for (double t : { 0.0, 0.3, 0.7, 1.0 }) {
        Vec u(2);
        u << t, 0.0;
        CHECK(h.value(d, u).norm() < 1e-12);
        u << 1.0, t;
        CHECK(h.value(d, u).norm() < 1e-12);
      }
  }
}

TEST_CASE("phi prime matches finite differences at first order")
{
  Setup s(example2_default(0.9), 24);
  const TangentSample ts = sample_tangent(s.maps, { 10.0, 0.05, 1.0 }, 9, 2);
  REQUIRE_FALSE(ts.directions.empty());
  for (const auto& h : ts.directions) {
    const auto base = phi(s.maps, 0, s.fields, s.grid);
    const auto deriv = phi_prime(s.maps, h, 0, s.fields, s.grid);
    auto gap = [&](double eps) {
      const auto pm = perturb(s.maps, h, eps);
      return tv_norm((1.0 / eps) * (phi(pointers(pm), 0, s.fields, s.grid) - base) - deriv);
    };
    CHECK(gap(1e-2) / gap(1e-3) >= 5.0);
  }
}

TEST_CASE("divergence form agrees with the Piola form")
{
  Setup s(example1_default(0.9), 30);
  const TangentSample ts = sample_tangent(s.maps, {}, 4, 1);
  REQUIRE(ts.directions.size() == 1);
  const auto d = phi_prime(s.maps, ts.directions[0], 1, s.fields, s.grid);
  const Vec div = divergence_form_density(s.maps, ts.directions[0], 1, s.fields, *s.grid, 1e-4);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < div.size(); ++i)
    if (std::isfinite(div(i)))
      worst = std::max(worst, std::abs(div(i) - d.density(i)));
  CHECK(worst < 1e-5 * (1.0 + d.density.cwiseAbs().maxCoeff()));
}

TEST_CASE("Piola identity")
{
  const StructuralModel m = example1_default(0.9);
  const auto g = build_grid(m.domain(), 20);
  CHECK(piola_residual(m.maps[1], g, 1e-3) == 0.0);
  const StructuralModel m2 = example2_default(0.9);
  const double r1 = piola_residual(m2.maps[0], g, 1e-2);
  const double r2 = piola_residual(m2.maps[0], g, 5e-3);
  CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("the swap direction is invisible at compliance one half")
{
  Setup s(example1_default(0.5));
  const TangentDirection h = swap_direction(s.maps, s.fields);
  for (int z = 0; z < 2; ++z)
    CHECK(tv_norm(phi_prime(s.maps, h, z, s.fields, s.grid)) < 1e-10);
  Setup t(example1_default(0.9));
  const TangentDirection ht = swap_direction(t.maps, t.fields);
  // built to cancel at z = 0, so only the other instrument sees it
  CHECK(tv_norm(phi_prime(t.maps, ht, 0, t.fields, t.grid)) < 1e-10);
  CHECK(tv_norm(phi_prime(t.maps, ht, 1, t.fields, t.grid)) > 1e-2);
}

TEST_CASE("full rank probe rejects an empty direction list")
{
  Setup s(example1_default(0.9), 10);
  CHECK_THROWS_AS(full_rank_probe(s.maps, s.fields, s.grid, {}), Error);
}

TEST_CASE("conormal check on affine maps")
{
  const StructuralModel m = example1_default(0.9);
  for (const auto& q : m.maps)
    CHECK(conormal_check(q).pass);
}
