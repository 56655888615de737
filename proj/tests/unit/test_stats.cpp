#include "ivmqr/assignment.hpp"
#include "ivmqr/geometry.hpp"
#include "ivmqr/stats.hpp"

#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>

using namespace ivmqr;

TEST_CASE("chi-square and normal quantiles match tables")
{
  CHECK(stats::chi_square_quantile(1, 0.05) == doctest::Approx(3.841458820694124).epsilon(1e-9));
  CHECK(stats::chi_square_quantile(2, 0.05) == doctest::Approx(5.991464547107979).epsilon(1e-9));
  CHECK(stats::chi_square_quantile(15, 0.001) == doctest::Approx(37.69729821835383).epsilon(1e-9));
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
}

TEST_CASE("chi-square goodness of fit")
{
  const auto ok = stats::chi_square_gof({ 25, 25, 25, 25 }, { 25, 25, 25, 25 }, 0.01);
  CHECK(ok.statistic == 0.0);
  CHECK_FALSE(ok.reject);
  const auto bad = stats::chi_square_gof({ 50, 10, 20, 20 }, { 25, 25, 25, 25 }, 0.01);
  // (25^2 + 15^2 + 5^2 + 5^2) / 25
  CHECK(bad.statistic == doctest::Approx(36.0));
  CHECK(bad.dof == 3);
  CHECK(bad.reject);
}

TEST_CASE("two-sample Kolmogorov-Smirnov")
{
  CHECK(stats::ks_statistic({ 1, 2, 3 }, { 4, 5, 6 }) == 1.0);
  CHECK(stats::ks_statistic({ 1, 2, 3, 4 }, { 1, 2, 3, 4 }) == 0.0);
  CHECK(stats::ks_statistic({ 1, 3 }, { 2, 4 }) == doctest::Approx(0.5));
  // c(0.05) = sqrt(-log(0.025) / 2)
  const double c = std::sqrt(-std::log(0.025) / 2.0);
  CHECK(stats::ks_critical(100, 100, 0.05) == doctest::Approx(c * std::sqrt(2.0 / 100)).epsilon(1e-6));
}

TEST_CASE("pearson correlation of an affine relation")
{
  std::vector<double> x{ 1, 2, 3, 5, 8 }, y;
  for (double v : x)
    y.push_back(-2 * v + 1);
  CHECK(stats::pearson_correlation(x, y) == doctest::Approx(-1.0));
}

TEST_CASE("polygon clipping areas")
{
  using namespace geometry;
  const Polygon sq{ { 0, 0 }, { 1, 0 }, { 1, 1 }, { 0, 1 } };
  CHECK(area(sq) == doctest::Approx(1.0));
  CHECK(area(clip_halfplane(sq, { 1, 1 }, 1.0)) == doctest::Approx(0.5));
  CHECK(area(clip_box(sq, { 0.25, 0.25 }, { 2, 0.5 })) == doctest::Approx(0.75 * 0.25));
  const Polygon hull = convex_hull({ { 0, 0 }, { 2, 0 }, { 0, 2 }, { 0.5, 0.5 } });
  CHECK(area(hull) == doctest::Approx(2.0));
  CHECK(hull_contains(hull, { 0.5, 0.5 }));
  CHECK_FALSE(hull_contains(hull, { 1.5, 1.5 }));
}

TEST_CASE("assignment agrees with brute force")
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6;
    Mat c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        c(i, j) = unif(rng);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0;
      for (int i = 0; i < n; ++i)
        s += c(i, perm[i]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = solve_assignment(c);
    double s = 0;
    for (int i = 0; i < n; ++i)
      s += c(i, a[i]);
    CHECK(s == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("one-dimensional transport is the sorted matching")
{
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unif(0, 1);
  const int n = 50;
  Mat u(1, n), y(1, n);
  for (int i = 0; i < n; ++i) {
    u(0, i) = unif(rng);
    y(0, i) = 3 * unif(rng) - 1;
  }
  const auto plan = brenier_from_samples(u, y);
  REQUIRE(plan.exact);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (u(0, i) < u(0, j))
        CHECK(y(0, plan.permutation[i]) <= y(0, plan.permutation[j]));
}

TEST_CASE("sinkhorn coupling has uniform marginals")
{
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0, 1);
  const int n = 30;
  Mat c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      c(i, j) = unif(rng);
  const Mat P = sinkhorn_coupling(c, 0.05, 2000);
  CHECK((P.rowwise().sum().array() - 1.0 / n).abs().maxCoeff() < 1e-9);
  CHECK((P.colwise().sum().array() - 1.0 / n).abs().maxCoeff() < 1e-9);
  CHECK(P.minCoeff() >= 0.0);
}
