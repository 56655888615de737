#include "ivmqr/assignment.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/parallel.hpp"

#include <cstdio>
#include <fstream>
#include <limits>

namespace ivmqr {

namespace {

Mat squared_distances(const Mat& a, const Mat& b)
{
  const Eigen::Index n = a.cols();
  Mat c(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (Eigen::Index j = 0; j < n; ++j)
      c(static_cast<Eigen::Index>(i), j) = (a.col(i) - b.col(j)).squaredNorm();
  });
  return c;
}

double log_sum_exp(const Eigen::Ref<const Vec>& v)
{
  const double m = v.maxCoeff();
  if (!std::isfinite(m))
    return m;
  return m + std::log((v.array() - m).exp().sum());
}

} // namespace

double DiscreteTransportPlan::marginal_error() const
{
  const int n = size();
  if (n == 0)
    return 0.0;
  if (exact) {
    std::vector<int> hits(n, 0);
    for (int j : permutation)
      ++hits[j];
    double worst = 0.0;
    for (int h : hits)
      worst = std::max(worst, std::abs(h - 1.0) / n);
    return worst;
  }
  const double w = 1.0 / n;
  const double rows = (coupling.rowwise().sum().array() - w).abs().maxCoeff();
  const double cols = (coupling.colwise().sum().array() - w).abs().maxCoeff();
  return std::max(rows, cols);
}

std::vector<int> solve_assignment(const Mat& cost)
{
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n)
    throw Error(ErrorKind::size_mismatch, "assignment needs a square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials and matching, column 0 is a sentinel
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j])
          continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(n);
  for (int j = 1; j <= n; ++j)
    out[match[j] - 1] = j - 1;
  return out;
}

Mat sinkhorn_coupling(const Mat& cost, double epsilon, int max_iter, double tol)
{
  const Eigen::Index n = cost.rows();
  const double loga = -std::log(static_cast<double>(n));
  Vec f = Vec::Zero(n), g = Vec::Zero(n);
  const Mat kern = -cost / epsilon;
  for (int it = 0; it < max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i)
      f(i) = epsilon * (loga - log_sum_exp((kern.row(i).transpose() + g / epsilon)));
    for (Eigen::Index j = 0; j < n; ++j)
      g(j) = epsilon * (loga - log_sum_exp((kern.col(j) + f / epsilon)));
    // columns are exact after the g update; check rows
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lr = log_sum_exp(kern.row(i).transpose() + (f(i) + g.array()).matrix() / epsilon);
      err = std::max(err, std::abs(std::exp(lr) - std::exp(loga)));
    }
    if (err < tol)
      break;
  }
  Mat P(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      P(i, j) = std::exp(kern(i, j) + (f(i) + g(j)) / epsilon);
  // rounding onto the exact marginals (Altschuler, Weed and Rigollet)
  const double w = 1.0 / static_cast<double>(n);
  Vec r = P.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i) > w)
      P.row(i) *= w / r(i);
  Vec c = P.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < n; ++j)
    if (c(j) > w)
      P.col(j) *= w / c(j);
  Vec er = (Vec::Constant(n, w) - P.rowwise().sum());
  Vec ec = (Vec::Constant(n, w) - P.colwise().sum().transpose());
  const double mass = er.sum();
  if (mass > 0)
    P += er * ec.transpose() / mass;
  return P;
}

DiscreteTransportPlan brenier_from_samples(const Mat& source, const Mat& target, int exact_limit)
{
  if (source.cols() != target.cols() || source.rows() != target.rows())
    throw Error(ErrorKind::size_mismatch, "source and target clouds differ in size");
  if (source.cols() < 1)
    throw Error(ErrorKind::size_mismatch, "transport needs at least one point");
  DiscreteTransportPlan plan;
  plan.source = source;
  plan.target = target;
  const Mat cost = squared_distances(source, target);
  const int n = static_cast<int>(source.cols());
  if (n <= exact_limit) {
    plan.permutation = solve_assignment(cost);
    plan.exact = true;
    for (int i = 0; i < n; ++i)
      plan.cost += cost(i, plan.permutation[i]);
    return plan;
  }
  plan.exact = false;
  plan.epsilon = 0.01 * cost.mean();
  plan.coupling = sinkhorn_coupling(cost, plan.epsilon, 10000);
  plan.cost = n * (plan.coupling.array() * cost.array()).sum();
  return plan;
}

void write_plan_csv(const std::string& path, const DiscreteTransportPlan& plan)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot write " + path);
  out.precision(17);
  out << "source,target,weight,cost\n";
  const int n = plan.size();
  if (plan.exact) {
    for (int i = 0; i < n; ++i) {
      const int j = plan.permutation[i];
      const double c = (plan.source.col(i) - plan.target.col(j)).squaredNorm();
      out << i << ',' << j << ',' << 1.0 / n << ',' << c / n << '\n';
    }
    return;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = plan.coupling(i, j);
      if (w <= 0)
        continue;
      const double c = (plan.source.col(i) - plan.target.col(j)).squaredNorm();
      out << i << ',' << j << ',' << w << ',' << w * c << '\n';
    }
}

} // namespace ivmqr
