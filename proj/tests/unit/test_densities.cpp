#include "ivmqr/densities.hpp"
#include "ivmqr/error.hpp"

#include "doctest.h"

#include <cmath>

using namespace ivmqr;

namespace {

Vec point(double a, double b)
{
  Vec u(2);
  u << a, b;
  return u;
}

} // namespace

TEST_CASE("exact density of example 1 by change of variables")
{
  const StructuralModel m = example1_default(0.9);
  const FieldSet fs = exact_fields(m);
  // q_1^{-1}(y) = diag(1,2) y, so f_{1,z}(y) = P(D=1|Z=z) * det diag(1,2)
  CHECK(fs.at(1, 1).value(point(0.4, 0.2)) == doctest::Approx(0.9 * 2.0));
  CHECK(fs.at(1, 0).value(point(0.4, 0.2)) == doctest::Approx(0.1 * 2.0));
  CHECK(fs.at(0, 0).value(point(0.4, 0.7)) == doctest::Approx(0.9));
  // outside q_1(U) = [0,1] x [0,1/2]
  CHECK(fs.at(1, 1).value(point(0.4, 0.7)) == 0.0);
  CHECK(fs.all_exact());
}

TEST_CASE("exact densities integrate to the shares")
{
  const StructuralModel m = example2_default(0.9);
  const FieldSet fs = exact_fields(m);
  for (int d = 0; d < 2; ++d)
    for (int z = 0; z < 2; ++z) {
      const double s = m.share(d, z);
      CHECK(fs.at(d, z).share() == doctest::Approx(s));
      const auto& f = fs.at(d, z);
      CHECK(f.cell_mass(f.support_lower(), f.support_upper()) == doctest::Approx(s).epsilon(1e-3));
    }
}

TEST_CASE("midpoint integration of an exact field")
{
  const StructuralModel m = example1_default(0.9);
  const FieldSet fs = exact_fields(m);
  CHECK(integrate_field(fs.at(1, 0), 200) == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("affine cell masses are exact")
{
  const StructuralModel m = example1_default(0.9);
  const FieldSet fs = exact_fields(m);
  // mass of [0,0.5]x[0,0.25] under f_{1,1}: 0.9 * area * 2
  CHECK(fs.at(1, 1).cell_mass(point(0, 0), point(0.5, 0.25)) == doctest::Approx(0.9 * 0.125 * 2.0));
}

TEST_CASE("kernel estimate approaches the exact density in the interior")
{
  const StructuralModel m = example1_default(0.9);
  const ObservedSample s = simulate(m, 100000, 21);
  const FieldSet est = estimated_fields(s, 2, 0.1);
  const FieldSet ex = exact_fields(m);
  for (const Vec& y : { point(0.5, 0.5), point(0.3, 0.6) })
    CHECK(est.at(0, 0).value(y) == doctest::Approx(ex.at(0, 0).value(y)).epsilon(0.05));
  // reflection keeps the boundary unbiased for a flat density
  CHECK(est.at(0, 0).value(point(0.02, 0.5)) == doctest::Approx(0.9).epsilon(0.08));
  CHECK(est.at(0, 0).share() == doctest::Approx(0.9).epsilon(0.01));
  CHECK(integrate_field(est.at(0, 0), 100) == doctest::Approx(est.at(0, 0).share()).epsilon(1e-2));
  CHECK_THROWS_AS(estimate_density(s, 0, 0, -1.0), Error);
}

TEST_CASE("kernel gradient agrees with central differences")
{
  const StructuralModel m = example2_default(0.9);
  const ObservedSample s = simulate(m, 20000, 22);
  const auto f = estimate_density(s, 0, 1);
  const Vec y = 0.5 * (f->support_lower() + f->support_upper());
  const double h = 1e-6;
  Vec fd(2);
  for (int i = 0; i < 2; ++i) {
    Vec e = Vec::Zero(2);
    e(i) = h;
    fd(i) = (f->value(y + e) - f->value(y - e)) / (2 * h);
  }
  CHECK((f->gradient(y) - fd).norm() < 1e-3 * (1 + fd.norm()));
}

TEST_CASE("constant density")
{
  const ConstantDensity c(0, 0, Vec::Zero(2), Vec::Ones(2), 0.3);
  CHECK(c.value(point(0.5, 0.5)) == 0.3);
  CHECK(c.value(point(1.5, 0.5)) == 0.0);
  CHECK(c.cell_mass(point(0.5, 0.5), point(2.0, 2.0)) == doctest::Approx(0.3 * 0.25));
  CHECK(c.share() == doctest::Approx(0.3));
}

TEST_CASE("identified support of example 1")
{
  const StructuralModel m = example1_default(0.9);
  const FieldSet fs = exact_fields(m);
  const SupportSet s1 = identify_support(fs.f[1]);
  CHECK(s1.cell_lower(0) == doctest::Approx(0.0));
  CHECK(s1.cell_upper(0) == doctest::Approx(1.0));
  CHECK(s1.cell_upper(1) == doctest::Approx(0.5));
  CHECK(s1.contains(point(0.5, 0.25)));
  CHECK_FALSE(s1.contains(point(0.5, 0.75)));
}
