#pragma once

#include "ivmqr/domain.hpp"
#include "ivmqr/potential.hpp"

#include <optional>
#include <vector>

namespace ivmqr {

//! Map U -> R^p with a Jacobian. Quantile maps and their perturbations
//! share this interface.
class VectorMap
{
public:
  virtual ~VectorMap() = default;
  virtual const ReferenceDomain& domain() const = 0;
  int dim() const { return domain().dim(); }
  // No domain check; callers that need one use eval_map.
  virtual Vec value(const Vec& u) const = 0;
  virtual Mat jacobian(const Vec& u) const = 0;
};

//! q = grad phi for a certified-convex potential phi.
class QuantileMap : public VectorMap
{
public:
  explicit QuantileMap(ConvexPotential potential);

  const ConvexPotential& potential() const { return potential_; }
  const ReferenceDomain& domain() const override { return potential_.domain(); }
  Vec value(const Vec& u) const override { return potential_.gradient(u); }
  Mat jacobian(const Vec& u) const override { return potential_.hessian(u); }

  // Axis-aligned box containing q(U).
  const Vec& image_lower() const { return lower_; }
  const Vec& image_upper() const { return upper_; }
  bool in_image_box(const Vec& y) const;

  // Solves q(u) = y over all of R^p (no support constraint). Returns
  // nothing when Newton fails to converge.
  std::optional<Vec> inverse_extended(const Vec& y, const Vec* hint = nullptr) const;

private:
  ConvexPotential potential_;
  Vec lower_;
  Vec upper_;
};

// q(u); throws domain-violation when u is outside U.
Vec eval_map(const VectorMap& map, const Vec& u);

struct JacobianEval
{
  Mat value;
  // Set for boundary points, where only one-sided derivatives exist.
  bool boundary_warning = false;
};

JacobianEval jacobian(const VectorMap& map, const Vec& u);

struct ClassReport
{
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double max_asymmetry = 0.0;
  int worst_node = -1;
  bool pass = false;
};

// Eigenvalues of the symmetric part of Dq at every node, against (lo, hi).
ClassReport check_class_membership(const VectorMap& map,
                                   const QuadratureGrid& grid,
                                   double lower_bound,
                                   double upper_bound);

struct CycleReport
{
  double min_sum = 0.0;
  // Smallest sum over cycles whose points are not all equal.
  double min_nondegenerate_sum = 0.0;
  int cycles = 0;
  int nondegenerate = 0;
  bool monotone = false; // all sums >= 0
  bool strict = false;   // all non-degenerate sums > 0
};

// Each cycle lists u^1..u^{k+1} with u^{k+1} = u^1.
CycleReport cyclical_monotonicity_check(const VectorMap& map,
                                        const std::vector<std::vector<Vec>>& cycles);

// u in U with |q(u) - y| <= 1e-8, by maximizing u'y - phi(u) over U.
Vec legendre_invert(const QuantileMap& map, const Vec& y, const Vec* hint = nullptr);
std::optional<Vec> try_legendre_invert(const QuantileMap& map,
                                       const Vec& y,
                                       const Vec* hint = nullptr);

struct BijectivityReport
{
  double max_round_trip = 0.0;
  double min_image_distance = 0.0;
  int nodes = 0;
  int failed_inversions = 0;
  bool injective = false;
  bool pass = false;
};

BijectivityReport bijectivity_probe(const QuantileMap& map, const QuadratureGrid& grid);

} // namespace ivmqr
