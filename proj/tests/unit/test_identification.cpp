#include "ivmqr/error.hpp"
#include "ivmqr/identification.hpp"
#include "ivmqr/linearization.hpp"

#include "doctest.h"

#include <cmath>

using namespace ivmqr;

namespace {

FieldSet constant_fields(double c)
{
  const double s[2][2] = { { c, 1 - c }, { 1 - c, c } };
  FieldSet fs;
  fs.f.assign(2, std::vector<FieldPtr>(2));
  for (int d = 0; d < 2; ++d)
    for (int z = 0; z < 2; ++z)
      fs.f[d][z] = std::make_shared<ConstantDensity>(d, z, Vec::Zero(2), Vec::Ones(2), s[d][z]);
  return fs;
}

} // namespace

TEST_CASE("pointwise condition values")
{
  // 4 * 0.9 * 0.9 - 2^3 (0.1 + 0.1)^2
  CHECK(condition12_value(0.9, 0.1, 0.1, 0.9, 2.0, 2) == doctest::Approx(3.24 - 0.32));
  // 4 * 0.7 * 0.7 - 4^3 (0.3 + 0.3)^2
  CHECK(condition12_value(0.7, 0.3, 0.3, 0.7, 4.0, 2) == doctest::Approx(-21.08));
  CHECK(mlr_value(0.9, 0.1, 0.2, 0.8) == doctest::Approx(0.8 * 0.9 - 0.2 * 0.1));
  // symmetric part [[1, 0.5], [0.5, 1]] has eigenvalues 0.5 and 1.5
  CHECK(pd_value_p1(1.0, 0.2, 0.8, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("correlation condition on constant fields")
{
  const PairGrid g = build_pair_grid(constant_fields(0.7), 10);
  const ConditionReport r = check_condition_12(g, 0.5, 2.0, 2);
  CHECK_FALSE(r.pass);
  CHECK(r.margin == doctest::Approx(-21.08));
  CHECK(check_condition_12(build_pair_grid(constant_fields(0.9), 10), 1.0, 2.0, 2).pass);
}

TEST_CASE("0.7 compliance example 1 violates the correlation condition")
{
  const StructuralModel m = example1_model(Mat::Identity(2, 2), Mat::Identity(2, 2), Vec::Zero(2), Vec::Zero(2), 0.7);
  const ConditionReport r = check_condition_12(build_pair_grid(exact_fields(m), 20), 0.5, 2.0, 2);
  CHECK(r.margin == doctest::Approx(-21.08));
  CHECK(r.provenance == "exact");
}

TEST_CASE("pd matrix check needs p = 1")
{
  CHECK_THROWS_AS(check_pd_matrix_p1(build_pair_grid(constant_fields(0.9), 5)), Error);
}

TEST_CASE("quadratic form blocks for identity maps")
{
  const StructuralModel m = example1_model(Mat::Identity(2, 2), Mat::Identity(2, 2), Vec::Zero(2), Vec::Zero(2), 0.8);
  const FieldSet fs = constant_fields(0.8);
  const auto maps = map_pointers(m.maps);
  Vec u(2);
  u << 0.4, 0.6;
  const Mat B = assemble_quadratic_form(maps, fs, u);
  REQUIRE(B.rows() == 4);
  CHECK(B(0, 0) == doctest::Approx(0.8));
  CHECK(B(0, 2) == doctest::Approx(0.2));
  CHECK(B(0, 1) == doctest::Approx(0.0));
  // symmetric part [[a, b], [b, a]] (x) I has smallest eigenvalue a - b
  const QuadraticFormResult r = quadratic_form_min(maps, fs, u, 64, 1);
  CHECK(r.exact_min == doctest::Approx(0.8 - 0.2));
  CHECK(r.sampled_min >= r.exact_min - 1e-12);
}

TEST_CASE("cofactor of a 2x2 matrix")
{
  Mat M(2, 2);
  M << 2.0, 1.0, 0.5, 3.0;
  const Mat C = cofactor(M);
  CHECK(C(0, 0) == doctest::Approx(3.0));
  CHECK(C(0, 1) == doctest::Approx(-1.0));
  CHECK(C(1, 0) == doctest::Approx(-0.5));
  CHECK(C(1, 1) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cofactor(Mat::Zero(2, 2)), Error);
}

TEST_CASE("general condition validates b")
{
  const StructuralModel m = example1_default(0.9);
  const FieldSet fs = exact_fields(m);
  const auto g = build_grid(m.domain(), 10);
  CHECK_THROWS_AS(check_general_condition(Mat::Identity(3, 3), fs, map_pointers(m.maps), g), Error);
  CHECK(check_general_condition(Mat::Identity(2, 2), fs, map_pointers(m.maps), g).pass);
}
