#pragma once

#include "ivmqr/densities.hpp"
#include "ivmqr/identification.hpp"
#include "ivmqr/linearization.hpp"
#include "ivmqr/model.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ivmqr {

//! Finite-dimensional family of maps, one parameter vector per treatment.
class ParamFamily
{
public:
  virtual ~ParamFamily() = default;
  virtual std::string name() const = 0;
  virtual int size() const = 0;
  virtual std::shared_ptr<const VectorMap> make(const Vec& theta) const = 0;
  // Parameters reproducing q when q belongs to the family (or a close
  // approximation for sieve families); nothing otherwise.
  virtual std::optional<Vec> encode(const QuantileMap& q) const = 0;
};

//! q(u) = S u + c with S symmetric.
class AffineFamily : public ParamFamily
{
public:
  explicit AffineFamily(ReferenceDomain domain);
  std::string name() const override { return "affine"; }
  int size() const override;
  std::shared_ptr<const VectorMap> make(const Vec& theta) const override;
  std::optional<Vec> encode(const QuantileMap& q) const override;

protected:
  ReferenceDomain domain_;
};

//! Inside-good logit shares with mean utilities theta.
class LogitFamily : public ParamFamily
{
public:
  explicit LogitFamily(int dim);
  std::string name() const override { return "logit"; }
  int size() const override { return dim_; }
  std::shared_ptr<const VectorMap> make(const Vec& theta) const override;
  std::optional<Vec> encode(const QuantileMap& q) const override;

private:
  int dim_;
};

//! Affine plus sin(k pi u_j) e_j, k = 1..modes (gradients of Neumann
//! cosine modes).
class AffineCosineFamily : public AffineFamily
{
public:
  AffineCosineFamily(ReferenceDomain domain, int modes = 2);
  std::string name() const override { return "affine-cosine"; }
  int size() const override;
  std::shared_ptr<const VectorMap> make(const Vec& theta) const override;
  std::optional<Vec> encode(const QuantileMap& q) const override;

private:
  int modes_;
};

//! Gradient of a smoothed max of `pieces` affine functions plus kappa |u|^2.
class SmoothMaxFamily : public ParamFamily
{
public:
  SmoothMaxFamily(ReferenceDomain domain, int pieces = 8, double temperature = 0.0);
  std::string name() const override { return "smooth-max"; }
  int size() const override;
  std::shared_ptr<const VectorMap> make(const Vec& theta) const override;
  // Tangent planes of the potential at `pieces` points.
  std::optional<Vec> encode(const QuantileMap& q) const override;

private:
  ReferenceDomain domain_;
  int pieces_;
  double temperature_;
};

std::shared_ptr<const ParamFamily> make_family(const std::string& name,
                                               const ReferenceDomain& domain);

struct FitProblem
{
  FieldSet fields;
  ReferenceMeasure measure = ReferenceMeasure::uniform_cube(2);
  std::shared_ptr<const QuadratureGrid> grid;
  std::shared_ptr<const ParamFamily> family;
  double lambda_lo = 0.25;
  double lambda_hi = 4.0;
  std::vector<Vec> theta0;
  std::optional<PhiMode> mode; // default: cell when supported
  std::vector<const VectorMap*> truth;
};

struct FitOptions
{
  int max_iterations = 100;
  double tolerance = 1e-10; // on sum_z TV
  double fd_step = 1e-5;
  double barrier = 1e-12;
};

struct IterationLog
{
  int iteration = 0;
  Vec residuals; // TV per z
  std::uint64_t hash = 0;
  double damping = 0.0;
};

struct RootCandidate
{
  std::vector<Vec> theta;
  double residual = 0.0;
  std::optional<double> map_distance;
};

struct FitResult
{
  std::vector<Vec> theta;
  Vec residuals; // TV(phi_z(q) - mu) per z
  double objective = 0.0;
  std::optional<double> map_distance;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::string mode;
  std::vector<IterationLog> log;
  std::vector<RootCandidate> roots; // distinct iterates within tolerance
};

// FNV-1a over the parameter bytes.
std::uint64_t parameter_hash(const std::vector<Vec>& theta);

// max_d sup |a_d - b_d| on a lattice with `resolution` steps per axis.
double map_distance(const std::vector<const VectorMap*>& a,
                    const std::vector<const VectorMap*>& b,
                    int resolution = 100);

// errors: invalid-start when the initial maps leave the eigenvalue box.
FitResult fit(const FitProblem& problem, const FitOptions& options = {});

// Residuals sum_z TV(phi_z(q) - mu) for given maps.
Vec fit_residuals(const FitProblem& problem, const std::vector<const VectorMap*>& maps);

struct UniquenessTable
{
  std::vector<double> radii;
  // residual[k][r] for direction k and radius r; NaN when skipped
  std::vector<std::vector<double>> residual;
  std::vector<std::pair<int, int>> skipped; // (direction, radius)
  std::vector<double> slopes;               // least squares through the origin
  double envelope = 0.0;                    // min slope
  double min_doubling = 0.0;                // over consecutive doubled radii
  double max_doubling = 0.0;
};

UniquenessTable local_uniqueness_probe(const std::vector<const VectorMap*>& q_star,
                                       const FieldSet& fields,
                                       std::shared_ptr<const QuadratureGrid> grid,
                                       const std::vector<double>& radii,
                                       const std::vector<TangentDirection>& directions,
                                       double lambda_lo = 0.25,
                                       double lambda_hi = 4.0,
                                       PhiMode mode = PhiMode::node);

// Family parameters of the truth moved along a random parameter direction to
// sup distance `perturbation`, inside the eigenvalue box on the grid.
// errors: invalid-start after 50 rejected draws.
std::vector<Vec> perturbed_start(const ParamFamily& family,
                                 const std::vector<QuantileMap>& truth_maps,
                                 const QuadratureGrid& grid,
                                 double perturbation,
                                 std::uint64_t seed,
                                 double lambda_lo,
                                 double lambda_hi,
                                 double* distance = nullptr);

struct RecoveryOptions
{
  std::optional<int> n; // simulate this many rows; exact fields otherwise
  std::optional<double> bandwidth;
  std::optional<PhiMode> mode; // default: cell when supported
  std::uint64_t seed = 1;
  double perturbation = 0.05;
  std::string family; // empty: the model's own family
  double lambda_lo = 0.25;
  double lambda_hi = 4.0;
  double K = 10.0;
  int grid_resolution = 40;
  int pair_resolution = 50;
  int probe_directions = 20;
  double tolerance = 1e-10;
  int max_iterations = 100;
  double threshold = 1e-3; // map error counted as recovered
  bool negative_control = false;
};

struct RecoveryReport
{
  std::string provenance;
  std::string family;
  std::vector<SupportSet> supports;
  std::optional<ConditionReport> condition12;
  std::optional<ProbeResult> probe;
  double start_distance = 0.0;
  FitResult fit;
  double map_error = 0.0;
  std::optional<double> map_error_tight; // negative control only
  bool recovered = false;
  bool negative_control = false;
  bool expected_failure = false;
};

RecoveryReport recovery_experiment(const StructuralModel& model, const RecoveryOptions& options);

} // namespace ivmqr
