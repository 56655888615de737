#pragma once

#include "ivmqr/domain.hpp"
#include "ivmqr/geometry.hpp"
#include "ivmqr/model.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ivmqr {

enum class Provenance
{
  exact,
  kernel,
  constant
};

const char* to_string(Provenance p);

//! Joint density f_{d,z}(y) = g(y | d, z) P(D = d | Z = z).
class DensityField
{
public:
  DensityField(int d, int z, int dim)
    : d_(d)
    , z_(z)
    , dim_(dim)
  {}
  virtual ~DensityField() = default;

  int treatment() const { return d_; }
  int instrument() const { return z_; }
  int dim() const { return dim_; }

  virtual double value(const Vec& y) const = 0;
  // Central differences unless overridden.
  virtual Vec gradient(const Vec& y) const;
  // True when gradient() is analytic.
  virtual bool exact_gradient() const { return false; }
  // Integral over the box [lo, hi].
  virtual double cell_mass(const Vec& lo, const Vec& hi) const;

  // Box containing the support.
  virtual Vec support_lower() const = 0;
  virtual Vec support_upper() const = 0;
  // P(D = d | Z = z) (empirical for estimates).
  virtual double share() const = 0;
  virtual Provenance provenance() const = 0;
  virtual double bandwidth() const { return 0.0; }

private:
  int d_;
  int z_;
  int dim_;
};

//! Change-of-variables density of a tractable structural model.
class ExactDensity : public DensityField
{
public:
  ExactDensity(std::shared_ptr<const StructuralModel> model, int d, int z);

  double value(const Vec& y) const override;
  Vec gradient(const Vec& y) const override;
  bool exact_gradient() const override { return true; }
  double cell_mass(const Vec& lo, const Vec& hi) const override;
  Vec support_lower() const override { return map().image_lower(); }
  Vec support_upper() const override { return map().image_upper(); }
  double share() const override { return share_; }
  Provenance provenance() const override { return Provenance::exact; }

  const StructuralModel& model() const { return *model_; }
  const QuantileMap& map() const { return model_->maps[treatment()]; }
  // Density expressed at the rank u, i.e. pi(u) mu(u) / det Dq(u).
  double value_at_rank(const Vec& u) const;
  // Points per axis for Y-space midpoint cell integration.
  // Resolution of the U grid pushed forward by cell_mass for nonlinear maps.
  void set_cell_resolution(int r);

private:
  struct Cloud
  {
    Mat y;   // q_d at U quadrature nodes
    Vec mass; // node weight times share and mu density
  };
  const Cloud& cloud() const;

  std::shared_ptr<const StructuralModel> model_;
  double share_;
  int cell_resolution_;
  mutable std::mutex cloud_mutex_;
  mutable std::shared_ptr<const Cloud> cloud_;
};

//! Product Epanechnikov estimate with reflection at the sample box.
class KernelDensity : public DensityField
{
public:
  KernelDensity(const Mat& points, int d, int z, const Vec& bandwidth, double share);

  double value(const Vec& y) const override;
  Vec gradient(const Vec& y) const override;
  bool exact_gradient() const override { return true; }
  double cell_mass(const Vec& lo, const Vec& hi) const override;
  Vec support_lower() const override { return lower_; }
  Vec support_upper() const override { return upper_; }
  double share() const override { return share_; }
  Provenance provenance() const override { return Provenance::kernel; }
  double bandwidth() const override { return h_.maxCoeff(); }
  const Vec& bandwidths() const { return h_; }

private:
  template<class Fn>
  void for_neighbours(const Vec& y, Fn&& fn) const;

  Mat aug_;   // reflected copies, sorted by first coordinate
  int n_ = 0; // original subsample size
  Vec h_;
  Vec lower_;
  Vec upper_;
  double share_;
};

//! Constant density on a box; used for arithmetic checks.
class ConstantDensity : public DensityField
{
public:
  ConstantDensity(int d, int z, Vec lower, Vec upper, double level);

  double value(const Vec& y) const override;
  Vec gradient(const Vec& y) const override { return Vec::Zero(y.size()); }
  bool exact_gradient() const override { return true; }
  double cell_mass(const Vec& lo, const Vec& hi) const override;
  Vec support_lower() const override { return lower_; }
  Vec support_upper() const override { return upper_; }
  double share() const override;
  Provenance provenance() const override { return Provenance::constant; }

private:
  Vec lower_;
  Vec upper_;
  double level_;
};

using FieldPtr = std::shared_ptr<const DensityField>;

//! All f_{d,z}, indexed [d][z].
struct FieldSet
{
  std::vector<std::vector<FieldPtr>> f;

  int treatments() const { return static_cast<int>(f.size()); }
  int instruments() const { return f.empty() ? 0 : static_cast<int>(f[0].size()); }
  const DensityField& at(int d, int z) const { return *f[d][z]; }
  bool all_exact() const;
  std::string provenance() const;
};

// errors: unsupported-coupling when the law of U_D | (D, Z) is intractable.
std::shared_ptr<ExactDensity> exact_density(const StructuralModel& model, int d, int z);
FieldSet exact_fields(const StructuralModel& model);

// bandwidth <= 0 is rejected; std::nullopt selects n^{-1/(p+4)} sd per axis.
std::shared_ptr<KernelDensity> estimate_density(const ObservedSample& sample,
                                                int d,
                                                int z,
                                                std::optional<double> bandwidth = std::nullopt);
FieldSet estimated_fields(const ObservedSample& sample,
                          int treatments,
                          std::optional<double> bandwidth = std::nullopt);

// Midpoint quadrature of a field over its support box.
double integrate_field(const DensityField& field, int resolution);

//! Identified support of Y_d: positive cells on a box grid plus their hull.
struct SupportSet
{
  Vec lower;
  Vec upper;
  int resolution = 0;
  double threshold = 0.0;
  std::vector<int> cells; // flat indices, axis 0 slowest
  Mat centers;            // p x cells
  geometry::Polygon hull; // p = 2 only
  Vec cell_lower;         // bounding box of positive cells
  Vec cell_upper;

  bool empty() const { return cells.empty(); }
  Vec cell_width() const { return (upper - lower) / resolution; }
  // Hull membership for p = 2, cell bounding box otherwise.
  bool contains(const Vec& y, double tol = 1e-12) const;
};

// threshold < 0 selects 1e-3 times the largest field value on the grid.
SupportSet identify_support(const std::vector<FieldPtr>& fields_for_d,
                            double threshold = -1.0,
                            int resolution = 50);

// CSV: y1..yp,value on a box grid.
void write_field_csv(const std::string& path, const DensityField& field, int resolution);

} // namespace ivmqr
