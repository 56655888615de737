#pragma once

#include <vector>

namespace ivmqr::stats {

struct ChiSquareResult
{
  double statistic = 0.0;
  int dof = 0;
  double critical = 0.0; // upper quantile at the requested level
  double p_value = 1.0;
  bool reject = false;
  int cells_used = 0;
};

// Pearson goodness-of-fit. Cells whose expected count is below min_expected
// are pooled into one residual cell.
ChiSquareResult chi_square_gof(const std::vector<double>& observed,
                               const std::vector<double>& expected,
                               double level,
                               double min_expected = 5.0);

// Pearson test of independence on an r x c contingency table (row-major).
ChiSquareResult chi_square_independence(const std::vector<double>& table,
                                        int rows,
                                        int cols,
                                        double level);

double chi_square_quantile(int dof, double upper_tail);

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// Asymptotic two-sample critical value at significance level alpha.
double ks_critical(int n_a, int n_b, double alpha);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

double normal_quantile(double p);

} // namespace ivmqr::stats
