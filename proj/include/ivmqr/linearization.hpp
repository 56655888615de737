#pragma once

#include "ivmqr/densities.hpp"
#include "ivmqr/domain.hpp"
#include "ivmqr/transport.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ivmqr {

//! Signed measure on U stored as a density at quadrature nodes.
struct SignedGridMeasure
{
  std::shared_ptr<const QuadratureGrid> grid;
  Vec density;

  SignedGridMeasure() = default;
  SignedGridMeasure(std::shared_ptr<const QuadratureGrid> g, Vec rho)
    : grid(std::move(g))
    , density(std::move(rho))
  {}

  double total_mass() const { return grid->weights.dot(density); }
};

SignedGridMeasure operator-(const SignedGridMeasure& a, const SignedGridMeasure& b);
SignedGridMeasure operator*(double s, const SignedGridMeasure& a);

// Weighted l1 norm of the node densities.
double tv_norm(const SignedGridMeasure& m);

// mu as a grid measure.
SignedGridMeasure reference_measure_on(const ReferenceMeasure& mu,
                                       std::shared_ptr<const QuadratureGrid> grid);

// det(M) M^{-1}; errors: singular-matrix.
Mat cofactor(const Mat& M);

enum class PhiMode
{
  node, // sum_d f_{d,z}(q_d(u)) det Dq_d(u) at each node
  cell  // mass of the linearized image of each cell, divided by its volume
};

// phi_z(q). maps[d] is q_d.
SignedGridMeasure phi(const std::vector<const VectorMap*>& maps,
                      int z,
                      const FieldSet& fields,
                      std::shared_ptr<const QuadratureGrid> grid,
                      PhiMode mode = PhiMode::node);

// Cell mode needs exact fields of one model with flat mu on the cube,
// p <= 2, and a tensor grid.
bool cell_mode_supported(const FieldSet& fields, const QuadratureGrid& grid);

// max over interior nodes and columns j of |sum_i d_i cof(Dq)_{ij}|.
double piola_residual(const VectorMap& map, const QuadratureGrid& grid, double step);

//! h = grad w for a scalar w; value and Jacobian are analytic.
class GradientField
{
public:
  virtual ~GradientField() = default;
  virtual int dim() const = 0;
  virtual Vec value(const Vec& u) const = 0;
  virtual Mat jacobian(const Vec& u) const = 0;
  virtual std::string describe() const = 0;
};

//! 1/2 u'Bu + g'u + smax_plus(u) - smax_minus(u), B symmetric (indefinite).
struct ScalarPotential
{
  Mat B;
  Vec g;
  std::optional<ConvexPotential> plus;
  std::optional<ConvexPotential> minus;

  double value(const Vec& u) const;
  Vec gradient(const Vec& u) const;
  Mat hessian(const Vec& u) const;
};

//! grad(chi psi) with chi vanishing to second order on the boundary, so
//! q + s h keeps the boundary values (and image) of q.
class PinnedField : public GradientField
{
public:
  PinnedField(ReferenceDomain domain, ScalarPotential psi);
  int dim() const override { return domain_.dim(); }
  Vec value(const Vec& u) const override;
  Mat jacobian(const Vec& u) const override;
  std::string describe() const override;
  const ScalarPotential& psi() const { return psi_; }

private:
  void cutoff(const Vec& u, double& chi, Vec& grad, Mat& hess) const;

  ReferenceDomain domain_;
  ScalarPotential psi_;
};

//! weight * (sin(pi u_axis)) e_axis = grad(-weight cos(pi u_axis) / pi).
class SineField : public GradientField
{
public:
  SineField(int dim, int axis, double weight);
  int dim() const override { return dim_; }
  Vec value(const Vec& u) const override;
  Mat jacobian(const Vec& u) const override;
  std::string describe() const override;

private:
  int dim_;
  int axis_;
  double weight_;
};

//! One gradient field per treatment with a common scale multiplier.
struct TangentDirection
{
  std::vector<std::shared_ptr<const GradientField>> fields;
  double scale = 1.0;
  double alpha = 0.0; // admissible step found by the sampler

  int treatments() const { return static_cast<int>(fields.size()); }
  Vec value(int d, const Vec& u) const { return scale * fields[d]->value(u); }
  Mat jacobian(int d, const Vec& u) const { return scale * fields[d]->jacobian(u); }
};

// Sup-norm lattice shared by normalization and derivative bounds.
Mat tangent_lattice(const ReferenceDomain& domain);

// max_d sup_u |h_d(u)| on the lattice, using the given scale.
double sup_norm(const TangentDirection& h, const Mat& lattice);
// max_d sup_u |Dh_d(u)|_2.
double derivative_bound(const TangentDirection& h, const Mat& lattice);
// Resets scale so that the sup norm is 1; independent of the previous scale.
void normalize(TangentDirection& h, const Mat& lattice);

//! q + s h_d as a map.
class PerturbedMap : public VectorMap
{
public:
  PerturbedMap(const VectorMap& base, const TangentDirection& h, int d, double s)
    : base_(base)
    , h_(h)
    , d_(d)
    , s_(s)
  {}
  const ReferenceDomain& domain() const override { return base_.domain(); }
  Vec value(const Vec& u) const override { return base_.value(u) + s_ * h_.value(d_, u); }
  Mat jacobian(const Vec& u) const override
  {
    return base_.jacobian(u) + s_ * h_.jacobian(d_, u);
  }

private:
  const VectorMap& base_;
  const TangentDirection& h_;
  int d_;
  double s_;
};

std::vector<PerturbedMap> perturb(const std::vector<const VectorMap*>& maps,
                                  const TangentDirection& h,
                                  double s);
std::vector<const VectorMap*> pointers(const std::vector<PerturbedMap>& maps);

// Piola-expanded derivative of phi_z at maps along h.
SignedGridMeasure phi_prime(const std::vector<const VectorMap*>& maps,
                            const TangentDirection& h,
                            int z,
                            const FieldSet& fields,
                            std::shared_ptr<const QuadratureGrid> grid);

// sum_d div[f_{d,z}(q_d) cof(Dq_d) h_d] by central differences at nodes
// farther than `step` from the boundary; other nodes carry NaN.
Vec divergence_form_density(const std::vector<const VectorMap*>& maps,
                            const TangentDirection& h,
                            int z,
                            const FieldSet& fields,
                            const QuadratureGrid& grid,
                            double step);

struct TangentOptions
{
  double K = 10.0;
  double lambda_lo = 0.25;
  double lambda_hi = 4.0;
  double alpha_max = 0.1;
  int max_attempts = 0; // 0 means 20 * count
  int membership_resolution = 21;
};

struct TangentSample
{
  std::vector<TangentDirection> directions;
  int attempts = 0;
  int rejected_derivative = 0;
  int rejected_alpha = 0;
  bool exhausted = false;
};

// Random pinned directions: psi is a random indefinite quadratic plus a
// difference of two random smooth-max potentials.
TangentSample sample_tangent(const std::vector<const VectorMap*>& q_star,
                             const TangentOptions& opts,
                             std::uint64_t seed,
                             int count);

// Largest step in (0, alpha_max] (bisection) keeping q + alpha h inside the
// eigenvalue box on the grid; 0 when none is found.
double admissible_alpha(const std::vector<const VectorMap*>& q_star,
                        const TangentDirection& h,
                        const QuadratureGrid& grid,
                        double lambda_lo,
                        double lambda_hi,
                        double alpha_max);

// h_0 = w_0 (sin pi u_1) e_1, h_1 = -w_1 (sin pi u_1) e_1 with
// pi_0 (A_0)_{11} w_0 = pi_1 (A_1)_{11} w_1, A_d = Dq_d^{-1} at the centre.
TangentDirection swap_direction(const std::vector<const VectorMap*>& q_star,
                                const FieldSet& fields,
                                int z = 0);

struct ProbeResult
{
  double min_value = 0.0;
  int argmin = -1;
  std::vector<double> values; // sum_z TV(phi'_z(h)) per direction
};

// errors: no-directions when the list is empty.
ProbeResult full_rank_probe(const std::vector<const VectorMap*>& q_star,
                            const FieldSet& fields,
                            std::shared_ptr<const QuadratureGrid> grid,
                            const std::vector<TangentDirection>& directions);

struct ConormalReport
{
  double min_inner = 0.0;
  int points = 0;
  bool pass = false;
};

// At boundary lattice points, (Dq^{-1} n)'(q(u) - barycenter of q(U)) >= 0.
ConormalReport conormal_check(const VectorMap& map, int resolution = 41);

// CSV: node coordinates, weight, density.
void write_measure_csv(const std::string& path, const SignedGridMeasure& m);

} // namespace ivmqr
