#include "ivmqr/error.hpp"
#include "ivmqr/solver.hpp"

#include "doctest.h"

#include <cmath>

using namespace ivmqr;

TEST_CASE("affine family round trip")
{
  const StructuralModel m = example1_default(0.9);
  const AffineFamily fam(m.domain());
  for (const auto& q : m.maps) {
    const auto theta = fam.encode(q);
    REQUIRE(theta.has_value());
    CHECK(theta->size() == fam.size());
    const auto back = fam.make(*theta);
    CHECK(map_distance({ back.get() }, { &q }, 20) < 1e-12);
  }
}

TEST_CASE("logit family round trip")
{
  const StructuralModel m = example2_default(0.9);
  const LogitFamily fam(2);
  const auto theta = fam.encode(m.maps[1]);
  REQUIRE(theta.has_value());
  CHECK(map_distance({ fam.make(*theta).get() }, { &m.maps[1] }, 20) < 1e-10);
  CHECK_FALSE(fam.encode(example1_default(0.9).maps[1]).has_value());
}

TEST_CASE("map distance is the sup norm")
{
  const auto U = ReferenceDomain::cube(2);
  const QuantileMap a(ConvexPotential::quadratic(U, Mat::Identity(2, 2), Vec::Zero(2)));
  Vec shift(2);
  shift << 0.1, -0.05;
  const QuantileMap b(ConvexPotential::quadratic(U, Mat::Identity(2, 2), shift));
  CHECK(map_distance({ &a }, { &b }) == doctest::Approx(std::hypot(0.1, 0.05)));
}

TEST_CASE("parameter hash")
{
  Vec t(2);
  t << 1.0, 2.0;
  CHECK(parameter_hash({ t }) == parameter_hash({ t }));
  Vec s = t;
  s(1) = std::nextafter(2.0, 3.0);
  CHECK(parameter_hash({ t }) != parameter_hash({ s }));
}

TEST_CASE("fit recovers example 1 from a perturbed start")
{
  const StructuralModel m = example1_default(0.9);
  FitProblem pb;
  pb.fields = exact_fields(m);
  pb.measure = m.measure;
  pb.grid = std::make_shared<const QuadratureGrid>(build_grid(m.domain(), 20));
  pb.family = make_family("affine", m.domain());
  pb.truth = map_pointers(m.maps);
  double dist = 0.0;
  pb.theta0 = perturbed_start(*pb.family, m.maps, *pb.grid, 0.05, 3, pb.lambda_lo, pb.lambda_hi, &dist);
  CHECK(dist == doctest::Approx(0.05).epsilon(1e-3));
  FitOptions fo;
  fo.tolerance = 1e-8;
  const FitResult r = fit(pb, fo);
  CHECK(r.converged);
  REQUIRE(r.map_distance.has_value());
  CHECK(*r.map_distance < 1e-4);
  CHECK(r.log.front().residuals.sum() > r.log.back().residuals.sum());
}

TEST_CASE("fit rejects a start outside the eigenvalue box")
{
  const StructuralModel m = example1_default(0.9);
  FitProblem pb;
  pb.fields = exact_fields(m);
  pb.measure = m.measure;
  pb.grid = std::make_shared<const QuadratureGrid>(build_grid(m.domain(), 10));
  pb.family = make_family("affine", m.domain());
  for (const auto& q : m.maps)
    pb.theta0.push_back(*pb.family->encode(q));
  pb.lambda_lo = 0.9;
  CHECK_THROWS_AS(fit(pb), Error);
}
