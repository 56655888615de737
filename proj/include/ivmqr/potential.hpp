#pragma once

#include "ivmqr/domain.hpp"

#include <optional>
#include <vector>

namespace ivmqr {

//! 1/2 u'Au + b'u + c with A symmetric positive semidefinite.
struct QuadraticPart
{
  Mat A;
  Vec b;
  double c = 0.0;
};

//! t log sum_k exp((a_k'u + beta_k) / t) + kappa |u|^2.
//!
//! Rows of `slopes` are the a_k. The log-sum-exp is convex for any pieces;
//! kappa > 0 makes it strictly convex.
struct SmoothMaxPart
{
  Mat slopes;
  Vec offsets;
  double temperature = 0.1;
  double kappa = 1e-3;
};

//! Scalar convex function on U whose gradient is a quantile map.
//!
//! Only certified-convex families are representable, so the Hessian is
//! symmetric positive semidefinite by construction.
class ConvexPotential
{
public:
  ConvexPotential(ReferenceDomain domain,
                  std::optional<QuadraticPart> quadratic,
                  std::optional<SmoothMaxPart> smooth_max);

  static ConvexPotential quadratic(ReferenceDomain domain,
                                   const Mat& A,
                                   const Vec& b,
                                   double c = 0.0);
  // temperature <= 0 selects the default 0.1 * diam(U).
  static ConvexPotential smooth_max(ReferenceDomain domain,
                                    const Mat& slopes,
                                    const Vec& offsets,
                                    double temperature = 0.0,
                                    double kappa = 1e-3);
  static ConvexPotential sum(const ConvexPotential& quadratic,
                             const ConvexPotential& smooth_max);

  const ReferenceDomain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  const std::optional<QuadraticPart>& quadratic_part() const { return quad_; }
  const std::optional<SmoothMaxPart>& smooth_max_part() const { return smax_; }

  // Gradient is affine (no smooth-max part).
  bool affine_gradient() const { return !smax_.has_value(); }

  double value(const Vec& u) const;
  Vec gradient(const Vec& u) const;
  Mat hessian(const Vec& u) const;
  // d/du_l of the Hessian, one p x p matrix per l.
  std::vector<Mat> third_derivative(const Vec& u) const;

private:
  // softmax weights of the smooth-max pieces at u
  Vec weights(const Vec& u) const;

  ReferenceDomain domain_;
  std::optional<QuadraticPart> quad_;
  std::optional<SmoothMaxPart> smax_;
};

} // namespace ivmqr
