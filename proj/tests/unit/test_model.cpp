#include "ivmqr/model.hpp"
#include "ivmqr/parallel.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace ivmqr;

TEST_CASE("compliance rule")
{
  const auto r = TreatmentRule::compliance(0.9);
  CHECK(r(0, 0.5) == 0);
  CHECK(r(1, 0.5) == 1);
  CHECK(r(0, 0.95) == 1);
  CHECK(r(1, 0.95) == 0);
  const auto p = TreatmentRule::perfect(3);
  CHECK(p(2, 0.3) == 2);
}

TEST_CASE("example 1 maps and shares")
{
  const StructuralModel m = example1_default(0.9);
  Vec u(2);
  u << 1.0, 1.0;
  const Vec y = m.maps[1].value(u);
  CHECK(y(0) == doctest::Approx(1.0));
  CHECK(y(1) == doctest::Approx(0.5));
  CHECK(m.share(1, 1) == doctest::Approx(0.9));
  CHECK(m.share(0, 1) == doctest::Approx(0.1));
  CHECK(m.share(0, 0) == doctest::Approx(0.9));
  CHECK(m.constant_shares());
  CHECK(m.tractable());
}

TEST_CASE("logit potential gradient is the share vector")
{
  Vec mean(2);
  mean << 0.2, -0.4;
  const auto phi = logit_potential(mean);
  Vec u(2);
  u << 0.3, 0.8;
  const double e0 = std::exp(u(0) + mean(0)), e1 = std::exp(u(1) + mean(1));
  const Vec g = phi.gradient(u);
  CHECK(g(0) == doctest::Approx(e0 / (1 + e0 + e1)));
  CHECK(g(1) == doctest::Approx(e1 / (1 + e0 + e1)));
}

TEST_CASE("simulation is reproducible and independent of thread count")
{
  const StructuralModel m = example1_default(0.9);
  set_max_threads(1);
  const ObservedSample a = simulate(m, 10000, 42);
  set_max_threads(4);
  const ObservedSample b = simulate(m, 10000, 42);
  set_max_threads(0);
  CHECK(a.y == b.y);
  CHECK(a.d == b.d);
  CHECK(a.z == b.z);
  const ObservedSample c = simulate(m, 10000, 43);
  CHECK(a.y != c.y);
}

TEST_CASE("simulated compliance frequency")
{
  const StructuralModel m = example1_default(0.9);
  const int n = 40000;
  const ObservedSample s = simulate(m, n, 5, true);
  REQUIRE(s.has_latent());
  int agree = 0;
  for (int i = 0; i < n; ++i)
    agree += s.d[i] == s.z[i];
  CHECK(std::abs(agree / double(n) - 0.9) < 5 * std::sqrt(0.09 / n));
  // Y = q_D(U_D)
  for (int i = 0; i < 50; ++i)
    CHECK((m.maps[s.d[i]].value(s.u->col(i)) - s.y.col(i)).norm() < 1e-12);
}

TEST_CASE("test set masses")
{
  const auto mu = ReferenceMeasure::uniform_cube(2);
  TestSet box;
  box.lower = Vec::Zero(2);
  box.upper = Vec::Constant(2, 0.5);
  CHECK(test_set_mass(mu, box) == doctest::Approx(0.25));
  TestSet cut;
  cut.kind = TestSet::Kind::half_space;
  cut.normal = Vec::Ones(2);
  cut.offset = 1.0;
  CHECK(test_set_mass(mu, cut) == doctest::Approx(0.5));
  cut.offset = 0.5;
  CHECK(test_set_mass(mu, cut) == doctest::Approx(0.125));
}

TEST_CASE("implication holds on example 1 for the lower-left quadrant")
{
  const StructuralModel m = example1_default(0.9);
  TestSet box;
  box.lower = Vec::Zero(2);
  box.upper = Vec::Constant(2, 0.5);
  const ImplicationReport r = verify_implication(m, simulate(m, 100000, 1), { box });
  CHECK(r.failed_inversions == 0);
  // 3 sigma at mass 1/4 with n = 10^5
  CHECK(r.max_deviation <= 3 * std::sqrt(0.25 * 0.75 / 100000) + 1e-4);
}

TEST_CASE("sample csv round trip")
{
  const StructuralModel m = example1_default(0.9);
  const ObservedSample s = simulate(m, 200, 8);
  const auto path = (std::filesystem::temp_directory_path() / "ivmqr_sample_rt.csv").string();
  write_sample_csv(path, s);
  const ObservedSample t = read_sample_csv(path);
  std::remove(path.c_str());
  CHECK(t.d == s.d);
  CHECK(t.z == s.z);
  CHECK((t.y - s.y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rank similarity demo")
{
  const StructuralModel same = rank_violation_model(QuantileMap(
    ConvexPotential::quadratic(ReferenceDomain::cube(2), Mat::Identity(2, 2), Vec::Zero(2))));
  CHECK_FALSE(rank_violation_demo(same, 20000, 3).violation);
  const StructuralModel diff = rank_violation_model(regularized_diagonal_map());
  CHECK(rank_violation_demo(diff, 20000, 3).violation);
}
