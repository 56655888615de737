#include "ivmqr/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ivmqr::stats {

double chi_square_quantile(int dof, double upper_tail)
{
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(boost::math::complement(dist, upper_tail));
}

ChiSquareResult chi_square_gof(const std::vector<double>& observed,
                               const std::vector<double>& expected,
                               double level,
                               double min_expected)
{
  if (observed.size() != expected.size())
    throw std::invalid_argument("chi_square_gof: size mismatch");
  ChiSquareResult res;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] < min_expected) {
      pooled_obs += observed[i];
      pooled_exp += expected[i];
      continue;
    }
    const double diff = observed[i] - expected[i];
    res.statistic += diff * diff / expected[i];
    ++res.cells_used;
  }
  if (pooled_exp >= min_expected) {
    const double diff = pooled_obs - pooled_exp;
    res.statistic += diff * diff / pooled_exp;
    ++res.cells_used;
  } else if (pooled_obs > 0 && pooled_exp <= 0) {
    // mass observed where none is expected
    res.statistic = std::numeric_limits<double>::infinity();
  }
  res.dof = std::max(1, res.cells_used - 1);
  res.critical = chi_square_quantile(res.dof, level);
  boost::math::chi_squared dist(res.dof);
  res.p_value = std::isfinite(res.statistic)
                  ? boost::math::cdf(boost::math::complement(dist, res.statistic))
                  : 0.0;
  res.reject = res.statistic > res.critical;
  return res;
}

ChiSquareResult chi_square_independence(const std::vector<double>& table,
                                        int rows,
                                        int cols,
                                        double level)
{
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      row_sum[i] += table[i * cols + j];
      col_sum[j] += table[i * cols + j];
      total += table[i * cols + j];
    }
  ChiSquareResult res;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double e = row_sum[i] * col_sum[j] / total;
      if (e <= 0)
        continue;
      const double diff = table[i * cols + j] - e;
      res.statistic += diff * diff / e;
    }
  res.cells_used = rows * cols;
  res.dof = (rows - 1) * (cols - 1);
  res.critical = chi_square_quantile(res.dof, level);
  boost::math::chi_squared dist(res.dof);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  res.reject = res.statistic > res.critical;
  return res;
}

double ks_statistic(std::vector<double> a, std::vector<double> b)
{
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x)
      ++i;
    while (j < b.size() && b[j] <= x)
      ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double ks_critical(int n_a, int n_b, double alpha)
{
  const double c = std::sqrt(-0.5 * std::log(0.5 * alpha));
  return c * std::sqrt((static_cast<double>(n_a) + n_b) /
                       (static_cast<double>(n_a) * n_b));
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y)
{
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0)
    return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double normal_quantile(double p)
{
  return boost::math::quantile(boost::math::normal(), p);
}

} // namespace ivmqr::stats
