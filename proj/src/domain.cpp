#include "ivmqr/domain.hpp"

#include "ivmqr/error.hpp"

#include <fstream>
#include <iomanip>
#include <random>

namespace ivmqr {

ReferenceDomain::ReferenceDomain(DomainKind kind, int dim)
  : kind_(kind)
  , dim_(dim)
{
  if (dim < 1)
    throw Error(ErrorKind::dimension_error, "domain dimension must be positive");
}

std::string ReferenceDomain::name() const
{
  return kind_ == DomainKind::unit_cube ? "unit-cube" : "unit-ball";
}

bool ReferenceDomain::contains(const Vec& u, double tol) const
{
  if (u.size() != dim_)
    return false;
  if (kind_ == DomainKind::unit_cube)
    return (u.array() >= -tol).all() && (u.array() <= 1.0 + tol).all();
  return u.norm() <= 1.0 + tol;
}

double ReferenceDomain::boundary_distance(const Vec& u) const
{
  if (kind_ == DomainKind::unit_cube)
    return std::min(u.minCoeff(), (1.0 - u.array()).minCoeff());
  return 1.0 - u.norm();
}

bool ReferenceDomain::interior(const Vec& u, double margin) const
{
  return u.size() == dim_ && boundary_distance(u) > margin;
}

Vec ReferenceDomain::project(const Vec& u) const
{
  if (kind_ == DomainKind::unit_cube)
    return u.cwiseMax(0.0).cwiseMin(1.0);
  const double r = u.norm();
  return r > 1.0 ? Vec(u / r) : u;
}

Vec ReferenceDomain::outward_normal(const Vec& u) const
{
  Vec n = Vec::Zero(dim_);
  if (kind_ == DomainKind::unit_ball) {
    const double r = u.norm();
    if (r > 0)
      n = u / r;
    return n;
  }
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  double sign = -1.0;
  for (int i = 0; i < dim_; ++i) {
    if (u(i) < best_gap) {
      best_gap = u(i);
      best = i;
      sign = -1.0;
    }
    if (1.0 - u(i) < best_gap) {
      best_gap = 1.0 - u(i);
      best = i;
      sign = 1.0;
    }
  }
  n(best) = sign;
  return n;
}

double ReferenceDomain::volume() const
{
  if (kind_ == DomainKind::unit_cube)
    return 1.0;
  return std::pow(M_PI, 0.5 * dim_) / std::tgamma(0.5 * dim_ + 1.0);
}

double ReferenceDomain::diameter() const
{
  return kind_ == DomainKind::unit_cube ? std::sqrt(static_cast<double>(dim_)) : 2.0;
}

Vec ReferenceDomain::center() const
{
  return kind_ == DomainKind::unit_cube ? Vec::Constant(dim_, 0.5) : Vec::Zero(dim_);
}

Vec ReferenceDomain::lower() const
{
  return kind_ == DomainKind::unit_cube ? Vec::Zero(dim_) : Vec::Constant(dim_, -1.0);
}

Vec ReferenceDomain::upper() const
{
  return Vec::Constant(dim_, 1.0);
}

ReferenceMeasure::ReferenceMeasure(ReferenceDomain domain)
  : domain_(domain)
{}

std::string ReferenceMeasure::name() const
{
  return domain_.kind() == DomainKind::unit_cube ? "uniform" : "spherical-uniform";
}

bool ReferenceMeasure::flat() const
{
  return domain_.kind() == DomainKind::unit_cube || domain_.dim() == 1;
}

namespace {
double sphere_area(int p)
{
  return 2.0 * std::pow(M_PI, 0.5 * p) / std::tgamma(0.5 * p);
}
} // namespace

double ReferenceMeasure::density(const Vec& u) const
{
  if (!domain_.contains(u))
    return 0.0;
  if (domain_.kind() == DomainKind::unit_cube)
    return 1.0;
  const int p = domain_.dim();
  if (p == 1)
    return 0.5;
  const double r = std::max(u.norm(), 1e-300);
  return 1.0 / (sphere_area(p) * std::pow(r, p - 1));
}

Vec ReferenceMeasure::density_gradient(const Vec& u) const
{
  const int p = domain_.dim();
  if (flat())
    return Vec::Zero(p);
  const double r = std::max(u.norm(), 1e-300);
  // d/du r^{1-p} = (1-p) r^{-p-1} u
  return (1.0 - p) / (sphere_area(p) * std::pow(r, p + 1)) * u;
}

QuadratureGrid build_box_grid(const Vec& lower, const Vec& upper, int resolution)
{
  if (resolution < 2)
    throw Error(ErrorKind::invalid_resolution, "resolution must be at least 2");
  const int p = static_cast<int>(lower.size());
  QuadratureGrid grid;
  grid.resolution = resolution;
  grid.lower = lower;
  grid.upper = upper;
  grid.cell_width = (upper - lower) / resolution;
  long total = 1;
  for (int i = 0; i < p; ++i)
    total *= resolution;
  grid.nodes.resize(p, total);
  grid.weights = Vec::Constant(total, grid.cell_width.prod());
  std::vector<int> idx(p, 0);
  for (long k = 0; k < total; ++k) {
    // axis 0 varies slowest so that row-major listing matches (i, j) order
    long rem = k;
    for (int i = p - 1; i >= 0; --i) {
      idx[i] = static_cast<int>(rem % resolution);
      rem /= resolution;
    }
    for (int i = 0; i < p; ++i)
      grid.nodes(i, k) = lower(i) + (idx[i] + 0.5) * grid.cell_width(i);
  }
  return grid;
}

QuadratureGrid build_grid(const ReferenceDomain& domain, int resolution)
{
  if (resolution < 2)
    throw Error(ErrorKind::invalid_resolution, "resolution must be at least 2");
  const int p = domain.dim();
  if (domain.kind() == DomainKind::unit_cube)
    return build_box_grid(Vec::Zero(p), Vec::Ones(p), resolution);
  if (p == 1)
    return build_box_grid(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), resolution);
  if (p > 2)
    throw Error(ErrorKind::dimension_error, "ball grids are only available for p <= 2");

  // Polar cells [r_i, r_{i+1}] x [t_j, t_{j+1}] tile the disc exactly; the
  // weight is the exact annular-sector area.
  const int radial = resolution;
  const int angular = 4 * resolution;
  QuadratureGrid grid;
  grid.resolution = resolution;
  grid.lower = Vec::Constant(2, -1.0);
  grid.upper = Vec::Constant(2, 1.0);
  grid.nodes.resize(2, radial * angular);
  grid.weights.resize(radial * angular);
  const double dr = 1.0 / radial;
  const double dt = 2.0 * M_PI / angular;
  int k = 0;
  for (int i = 0; i < radial; ++i) {
    const double r0 = i * dr, r1 = (i + 1) * dr, rm = 0.5 * (r0 + r1);
    for (int j = 0; j < angular; ++j, ++k) {
      const double t = (j + 0.5) * dt;
      grid.nodes(0, k) = rm * std::cos(t);
      grid.nodes(1, k) = rm * std::sin(t);
      grid.weights(k) = 0.5 * (r1 * r1 - r0 * r0) * dt;
    }
  }
  return grid;
}

Mat sup_lattice(const ReferenceDomain& domain, int resolution)
{
  const int p = domain.dim();
  if (domain.kind() == DomainKind::unit_ball && p == 2) {
    const int radial = resolution;
    const int angular = 4 * resolution;
    Mat pts(2, radial * angular + 1);
    pts.col(0).setZero();
    int k = 1;
    for (int i = 1; i <= radial; ++i)
      for (int j = 0; j < angular; ++j, ++k) {
        const double r = static_cast<double>(i) / radial;
        const double t = 2.0 * M_PI * j / angular;
        pts(0, k) = r * std::cos(t);
        pts(1, k) = r * std::sin(t);
      }
    return pts;
  }
  const Vec lo = domain.lower(), hi = domain.upper();
  const int n1 = resolution + 1;
  long total = 1;
  for (int i = 0; i < p; ++i)
    total *= n1;
  Mat pts(p, total);
  for (long k = 0; k < total; ++k) {
    long rem = k;
    for (int i = p - 1; i >= 0; --i) {
      const int idx = static_cast<int>(rem % n1);
      rem /= n1;
      pts(i, k) = lo(i) + (hi(i) - lo(i)) * idx / resolution;
    }
  }
  return pts;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Mat sample_mu(const ReferenceMeasure& measure, int n, std::uint64_t seed)
{
  if (n < 1)
    throw Error(ErrorKind::size_mismatch, "sample size must be at least 1");
  std::mt19937_64 rng(seed);
  Mat out(measure.dim(), n);
  for (int i = 0; i < n; ++i)
    out.col(i) = measure.draw(rng);
  return out;
}

double measure_of_set(const ReferenceMeasure& measure,
                      const std::function<bool(const Vec&)>& indicator,
                      const QuadratureGrid& grid)
{
  double total = 0.0;
  for (int k = 0; k < grid.size(); ++k) {
    const Vec u = grid.node(k);
    if (indicator(u))
      total += grid.weights(k) * measure.density(u);
  }
  return total;
}

void write_grid_csv(const std::string& path, const QuadratureGrid& grid)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot open " + path);
  out << std::setprecision(17);
  for (int i = 0; i < grid.dim(); ++i)
    out << "u" << (i + 1) << ",";
  out << "weight\n";
  for (int k = 0; k < grid.size(); ++k) {
    for (int i = 0; i < grid.dim(); ++i)
      out << grid.nodes(i, k) << ",";
    out << grid.weights(k) << "\n";
  }
}

void write_points_csv(const std::string& path, const Mat& points)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot open " + path);
  out << std::setprecision(17);
  for (int i = 0; i < points.rows(); ++i)
    out << "u" << (i + 1) << ",";
  out << "weight\n";
  const double w = 1.0 / static_cast<double>(points.cols());
  for (int k = 0; k < points.cols(); ++k) {
    for (int i = 0; i < points.rows(); ++i)
      out << points(i, k) << ",";
    out << w << "\n";
  }
}

} // namespace ivmqr
