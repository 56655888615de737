#pragma once

#include "ivmqr/domain.hpp"

#include <string>
#include <vector>

namespace ivmqr {

//! Coupling between two equal-size point clouds under quadratic cost.
struct DiscreteTransportPlan
{
  Mat source; // p x n
  Mat target; // p x n
  // Exact plans: permutation[i] is the target matched to source i.
  std::vector<int> permutation;
  // Entropic plans: dense n x n coupling, marginals 1/n. Empty when exact.
  Mat coupling;
  double cost = 0.0; // sum over pairs of |u_i - y_j|^2 times n * weight
  bool exact = true;
  double epsilon = 0.0; // entropic regularization, 0 for exact plans

  int size() const { return static_cast<int>(source.cols()); }
  // Largest marginal deviation from 1/n.
  double marginal_error() const;
};

// Minimum-cost perfect matching of a square cost matrix (shortest
// augmenting paths, O(n^3)). Returns the column assigned to each row.
std::vector<int> solve_assignment(const Mat& cost);

// Exact for n <= exact_limit, entropic above.
DiscreteTransportPlan brenier_from_samples(const Mat& source,
                                           const Mat& target,
                                           int exact_limit = 2000);

// Log-domain Sinkhorn on uniform marginals, rounded to exact marginals.
Mat sinkhorn_coupling(const Mat& cost, double epsilon, int max_iter, double tol = 1e-9);

// source index, target index, weight, cost contribution
void write_plan_csv(const std::string& path, const DiscreteTransportPlan& plan);

} // namespace ivmqr
