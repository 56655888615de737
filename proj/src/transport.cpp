#include "ivmqr/transport.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>

namespace ivmqr {

namespace {

constexpr double kGradTol = 1e-10;
constexpr double kResidualTol = 1e-8;
constexpr int kMaxIter = 500;

// Boundary samples used for the image box of a nonlinear map.
std::vector<Vec> boundary_samples(const ReferenceDomain& dom)
{
  const int p = dom.dim();
  std::vector<Vec> pts;
  if (p == 1) {
    pts.push_back(dom.lower());
    pts.push_back(dom.upper());
    return pts;
  }
  if (dom.kind() == DomainKind::unit_ball) {
    const int n = 4096;
    for (int i = 0; i < n; ++i) {
      const double t = 2.0 * M_PI * i / n;
      Vec u(2);
      u << std::cos(t), std::sin(t);
      pts.push_back(u);
    }
    return pts;
  }
  // cube faces: a lattice on each face
  const int res = p == 2 ? 1024 : 24;
  Mat lat = sup_lattice(ReferenceDomain::cube(p - 1), res);
  for (int axis = 0; axis < p; ++axis) {
    for (double side : { 0.0, 1.0 }) {
      for (int j = 0; j < lat.cols(); ++j) {
        Vec u(p);
        int k = 0;
        for (int i = 0; i < p; ++i)
          u(i) = i == axis ? side : lat(k++, j);
        pts.push_back(u);
      }
    }
  }
  return pts;
}

std::vector<Vec> vertices(const ReferenceDomain& dom)
{
  const int p = dom.dim();
  std::vector<Vec> pts;
  if (dom.kind() == DomainKind::unit_cube) {
    for (int mask = 0; mask < (1 << p); ++mask) {
      Vec u(p);
      for (int i = 0; i < p; ++i)
        u(i) = (mask >> i) & 1;
      pts.push_back(u);
    }
  }
  return pts;
}

// Damped Newton for q(u) = y; `project` keeps iterates in U.
std::optional<Vec> newton_solve(const QuantileMap& map,
                                const Vec& y,
                                Vec u,
                                bool project)
{
  const ReferenceDomain& dom = map.domain();
  auto place = [&](const Vec& v) { return project ? dom.project(v) : v; };
  u = place(u);
  Vec r = y - map.value(u);
  double rn = r.norm();
  int stalled = 0;
  for (int it = 0; it < kMaxIter && rn > kGradTol; ++it) {
    const double before = rn;
    Mat H = map.jacobian(u);
    const double reg = 1e-14 * (1.0 + H.trace());
    Vec dir = (H + reg * Mat::Identity(H.rows(), H.cols())).ldlt().solve(r);
    bool moved = false;
    for (const Vec& d : { dir, Vec(r) }) {
      double t = 1.0;
      for (int k = 0; k < 60; ++k, t *= 0.5) {
        Vec cand = place(u + t * d);
        Vec rc = y - map.value(cand);
        if (rc.norm() < rn) {
          u = cand;
          r = rc;
          rn = rc.norm();
          moved = true;
          break;
        }
      }
      if (moved)
        break;
    }
    if (!moved)
      break;
    // points outside q(U) end up creeping along the boundary
    stalled = rn > (1.0 - 1e-3) * before ? stalled + 1 : 0;
    if (stalled >= 8 && rn > kResidualTol)
      break;
  }
  if (!(rn <= kResidualTol))
    return std::nullopt;
  return u;
}

} // namespace

QuantileMap::QuantileMap(ConvexPotential potential)
  : potential_(std::move(potential))
{
  const ReferenceDomain& dom = domain();
  const int p = dom.dim();
  lower_ = Vec::Constant(p, std::numeric_limits<double>::infinity());
  upper_ = -lower_;
  const bool exact = potential_.affine_gradient() && dom.kind() == DomainKind::unit_cube;
  const std::vector<Vec> pts = exact ? vertices(dom) : boundary_samples(dom);
  for (const Vec& u : pts) {
    Vec y = value(u);
    lower_ = lower_.cwiseMin(y);
    upper_ = upper_.cwiseMax(y);
  }
  if (potential_.affine_gradient() && dom.kind() == DomainKind::unit_ball) {
    // image of the ball under u -> Au + b is an ellipsoid
    const Mat& A = potential_.quadratic_part()->A;
    const Vec c = value(Vec::Zero(p));
    for (int i = 0; i < p; ++i) {
      const double half = A.row(i).norm();
      lower_(i) = c(i) - half;
      upper_(i) = c(i) + half;
    }
  } else if (!exact) {
    const Vec pad = 1e-4 * (upper_ - lower_).array() + 1e-9;
    lower_ -= pad;
    upper_ += pad;
  }
}

bool QuantileMap::in_image_box(const Vec& y) const
{
  for (int i = 0; i < y.size(); ++i)
    if (y(i) < lower_(i) - 1e-12 || y(i) > upper_(i) + 1e-12)
      return false;
  return true;
}

std::optional<Vec> QuantileMap::inverse_extended(const Vec& y, const Vec* hint) const
{
  if (y.size() != dim())
    throw Error(ErrorKind::size_mismatch, "point has wrong dimension");
  if (potential_.affine_gradient()) {
    const QuadraticPart& q = *potential_.quadratic_part();
    Eigen::FullPivLU<Mat> lu(q.A);
    if (!lu.isInvertible())
      return std::nullopt;
    return Vec(lu.solve(y - q.b));
  }
  return newton_solve(*this, y, hint ? *hint : domain().center(), false);
}

Vec eval_map(const VectorMap& map, const Vec& u)
{
  if (u.size() != map.dim())
    throw Error(ErrorKind::size_mismatch, "point has wrong dimension");
  if (!map.domain().contains(u))
    throw Error(ErrorKind::domain_violation, "point lies outside U");
  return map.value(u);
}

JacobianEval jacobian(const VectorMap& map, const Vec& u)
{
  if (u.size() != map.dim())
    throw Error(ErrorKind::size_mismatch, "point has wrong dimension");
  if (!map.domain().contains(u))
    throw Error(ErrorKind::domain_violation, "point lies outside U");
  JacobianEval out;
  out.value = map.jacobian(u);
  out.boundary_warning = !map.domain().interior(u);
  return out;
}

ClassReport check_class_membership(const VectorMap& map,
                                   const QuadratureGrid& grid,
                                   double lower_bound,
                                   double upper_bound)
{
  if (!(lower_bound > 0 && lower_bound < upper_bound))
    throw Error(ErrorKind::invalid_model, "eigenvalue bounds must satisfy 0 < lo < hi");
  const int n = grid.size();
  std::vector<double> mins(n), maxs(n), asym(n);
  parallel_for(n, [&](std::size_t i) {
    Mat J = map.jacobian(grid.node(static_cast<int>(i)));
    asym[i] = (J - J.transpose()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (J + J.transpose()), Eigen::EigenvaluesOnly);
    mins[i] = eig.eigenvalues().minCoeff();
    maxs[i] = eig.eigenvalues().maxCoeff();
  });
  ClassReport rep;
  rep.min_eigenvalue = std::numeric_limits<double>::infinity();
  rep.max_eigenvalue = -rep.min_eigenvalue;
  for (int i = 0; i < n; ++i) {
    if (mins[i] < rep.min_eigenvalue) {
      rep.min_eigenvalue = mins[i];
      rep.worst_node = i;
    }
    rep.max_eigenvalue = std::max(rep.max_eigenvalue, maxs[i]);
    rep.max_asymmetry = std::max(rep.max_asymmetry, asym[i]);
  }
  rep.pass = rep.min_eigenvalue > lower_bound && rep.max_eigenvalue < upper_bound &&
             rep.max_asymmetry < 1e-9;
  return rep;
}

CycleReport cyclical_monotonicity_check(const VectorMap& map,
                                        const std::vector<std::vector<Vec>>& cycles)
{
  const ReferenceDomain& dom = map.domain();
  for (const auto& cyc : cycles) {
    if (cyc.size() < 2)
      throw Error(ErrorKind::invalid_cycle, "cycle needs at least two points");
    if (cyc.front().size() != dom.dim() || cyc.back().size() != dom.dim() ||
        (cyc.front() - cyc.back()).cwiseAbs().maxCoeff() > 1e-15)
      throw Error(ErrorKind::invalid_cycle, "cycle must end where it starts");
    for (const Vec& u : cyc)
      if (u.size() != dom.dim() || !dom.interior(u))
        throw Error(ErrorKind::invalid_cycle, "cycle points must lie in the interior of U");
  }
  const std::size_t n = cycles.size();
  std::vector<double> sums(n);
  std::vector<char> degenerate(n);
  parallel_for(n, [&](std::size_t c) {
    const auto& cyc = cycles[c];
    double s = 0.0;
    bool same = true;
    Vec prev = map.value(cyc[0]);
    for (std::size_t i = 1; i < cyc.size(); ++i) {
      Vec cur = map.value(cyc[i]);
      s += cyc[i].dot(cur - prev);
      prev = cur;
      same = same && cyc[i] == cyc[0];
    }
    sums[c] = s;
    degenerate[c] = same;
  });
  CycleReport rep;
  rep.cycles = static_cast<int>(n);
  rep.min_sum = std::numeric_limits<double>::infinity();
  rep.min_nondegenerate_sum = rep.min_sum;
  for (std::size_t c = 0; c < n; ++c) {
    rep.min_sum = std::min(rep.min_sum, sums[c]);
    if (!degenerate[c]) {
      ++rep.nondegenerate;
      rep.min_nondegenerate_sum = std::min(rep.min_nondegenerate_sum, sums[c]);
    }
  }
  rep.monotone = rep.min_sum >= 0;
  rep.strict = rep.nondegenerate == 0 || rep.min_nondegenerate_sum > 0;
  if (n == 0)
    rep.min_sum = rep.min_nondegenerate_sum = 0.0;
  return rep;
}

std::optional<Vec> try_legendre_invert(const QuantileMap& map, const Vec& y, const Vec* hint)
{
  const ReferenceDomain& dom = map.domain();
  if (y.size() != dom.dim())
    throw Error(ErrorKind::size_mismatch, "point has wrong dimension");
  if (!map.in_image_box(y))
    return std::nullopt;
  const ConvexPotential& phi = map.potential();
  if (phi.affine_gradient()) {
    const QuadraticPart& q = *phi.quadratic_part();
    Eigen::FullPivLU<Mat> lu(q.A);
    if (lu.isInvertible()) {
      Vec u = lu.solve(y - q.b);
      if (!dom.contains(u, 1e-10))
        return std::nullopt;
      u = dom.project(u);
      if ((map.value(u) - y).norm() <= kResidualTol)
        return u;
      return std::nullopt;
    }
  }
  Vec start = hint ? *hint : dom.center();
  return newton_solve(map, y, start, true);
}

Vec legendre_invert(const QuantileMap& map, const Vec& y, const Vec* hint)
{
  auto u = try_legendre_invert(map, y, hint);
  if (!u)
    throw Error(ErrorKind::no_preimage, "point is not in the image of U");
  return *u;
}

BijectivityReport bijectivity_probe(const QuantileMap& map, const QuadratureGrid& grid)
{
  const ReferenceDomain& dom = map.domain();
  std::vector<int> idx;
  for (int i = 0; i < grid.size(); ++i)
    if (dom.interior(grid.node(i)))
      idx.push_back(i);
  const std::size_t n = idx.size();
  std::vector<Vec> images(n);
  std::vector<double> err(n);
  parallel_for(n, [&](std::size_t k) {
    const Vec u = grid.node(idx[k]);
    images[k] = map.value(u);
    auto back = try_legendre_invert(map, images[k]);
    err[k] = back ? (*back - u).norm() : std::numeric_limits<double>::infinity();
  });
  BijectivityReport rep;
  rep.nodes = static_cast<int>(n);
  for (std::size_t k = 0; k < n; ++k) {
    rep.max_round_trip = std::max(rep.max_round_trip, err[k]);
    if (!std::isfinite(err[k]))
      ++rep.failed_inversions;
  }
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  parallel_for(n, [&](std::size_t a) {
    for (std::size_t b = 0; b < n; ++b)
      if (b != a)
        nearest[a] = std::min(nearest[a], (images[a] - images[b]).norm());
  });
  rep.min_image_distance =
    n > 1 ? *std::min_element(nearest.begin(), nearest.end()) : 0.0;
  rep.injective = n <= 1 || rep.min_image_distance > 1e-12;
  rep.pass = rep.injective && rep.max_round_trip <= 1e-7;
  return rep;
}

} // namespace ivmqr
