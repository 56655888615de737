#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace ivmqr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class DomainKind
{
  unit_cube,
  unit_ball
};

//! Compact convex reference domain U: [0,1]^p or the closed unit ball.
class ReferenceDomain
{
public:
  ReferenceDomain(DomainKind kind, int dim);

  static ReferenceDomain cube(int dim) { return { DomainKind::unit_cube, dim }; }
  static ReferenceDomain ball(int dim) { return { DomainKind::unit_ball, dim }; }

  DomainKind kind() const { return kind_; }
  int dim() const { return dim_; }
  std::string name() const;

  bool contains(const Vec& u, double tol = 1e-12) const;
  // True when u lies at distance > margin from the boundary.
  bool interior(const Vec& u, double margin = 0.0) const;
  double boundary_distance(const Vec& u) const;
  // Euclidean projection onto U.
  Vec project(const Vec& u) const;
  // Outward unit normal at a boundary point (one face's normal at corners).
  Vec outward_normal(const Vec& u) const;

  double volume() const;
  double diameter() const;
  Vec center() const;
  Vec lower() const; // bounding box
  Vec upper() const;

  bool operator==(const ReferenceDomain&) const = default;

private:
  DomainKind kind_;
  int dim_;
};

//! Reference probability measure mu with support U.
//!
//! On the cube this is the uniform law. On the ball it is the spherical
//! uniform law: uniform radius in [0,1] times an independent uniform
//! direction, with Lebesgue density 1 / (|S^{p-1}| r^{p-1}).
class ReferenceMeasure
{
public:
  explicit ReferenceMeasure(ReferenceDomain domain);

  static ReferenceMeasure uniform_cube(int dim)
  {
    return ReferenceMeasure(ReferenceDomain::cube(dim));
  }
  static ReferenceMeasure spherical_uniform(int dim)
  {
    return ReferenceMeasure(ReferenceDomain::ball(dim));
  }

  const ReferenceDomain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  std::string name() const;

  double density(const Vec& u) const;
  Vec density_gradient(const Vec& u) const;
  // True when the density is constant on U.
  bool flat() const;

  // One draw from mu using the supplied engine.
  template<class Engine>
  Vec draw(Engine& rng) const;

  bool operator==(const ReferenceMeasure&) const = default;

private:
  ReferenceDomain domain_;
};

//! Quadrature nodes with nonnegative weights (Lebesgue cell volumes).
struct QuadratureGrid
{
  Mat nodes;          // p x N
  Vec weights;        // N
  int resolution = 0; // nodes per axis
  // Tensor grids carry axis-aligned cells of a common width around each
  // node; polar grids leave this empty.
  Vec cell_width;
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(nodes.rows()); }
  int size() const { return static_cast<int>(nodes.cols()); }
  Vec node(int i) const { return nodes.col(i); }
  bool tensor() const { return cell_width.size() > 0; }
  double total_weight() const { return weights.sum(); }
};

// Midpoint tensor grid on the cube, product polar grid on the disc.
QuadratureGrid build_grid(const ReferenceDomain& domain, int resolution);

// Midpoint tensor grid on an arbitrary axis-aligned box.
QuadratureGrid build_box_grid(const Vec& lower, const Vec& upper, int resolution);

// Lattice including boundary points, used for sup-norm evaluation.
Mat sup_lattice(const ReferenceDomain& domain, int resolution);

// n i.i.d. draws from mu as columns of a p x n matrix.
Mat sample_mu(const ReferenceMeasure& measure, int n, std::uint64_t seed);

// Quadrature approximation of mu(B).
double measure_of_set(const ReferenceMeasure& measure,
                      const std::function<bool(const Vec&)>& indicator,
                      const QuadratureGrid& grid);

// Independent stream seed derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// CSV with one row per node: coordinates then weight.
void write_grid_csv(const std::string& path, const QuadratureGrid& grid);
void write_points_csv(const std::string& path, const Mat& points);

template<class Engine>
Vec ReferenceMeasure::draw(Engine& rng) const
{
  const int p = dim();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec u(p);
  if (domain_.kind() == DomainKind::unit_cube) {
    for (int i = 0; i < p; ++i)
      u(i) = unif(rng);
    return u;
  }
  const double r = unif(rng);
  if (p == 1) {
    u(0) = unif(rng) < 0.5 ? -r : r;
  } else if (p == 2) {
    const double theta = 2.0 * M_PI * unif(rng);
    u << r * std::cos(theta), r * std::sin(theta);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < p; ++i)
      u(i) = normal(rng);
    u *= r / u.norm();
  }
  return u;
}

} // namespace ivmqr
