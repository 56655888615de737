#include "ivmqr/potential.hpp"

#include "ivmqr/error.hpp"

#include <Eigen/Eigenvalues>

namespace ivmqr {

ConvexPotential::ConvexPotential(ReferenceDomain domain,
                                 std::optional<QuadraticPart> quadratic,
                                 std::optional<SmoothMaxPart> smooth_max)
  : domain_(domain)
  , quad_(std::move(quadratic))
  , smax_(std::move(smooth_max))
{
  const int p = domain_.dim();
  if (!quad_ && !smax_)
    throw Error(ErrorKind::invalid_model, "potential needs at least one part");
  if (quad_) {
    const Mat& A = quad_->A;
    if (A.rows() != p || A.cols() != p || quad_->b.size() != p)
      throw Error(ErrorKind::size_mismatch, "quadratic part has wrong dimension");
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + A.cwiseAbs().maxCoeff()))
      throw Error(ErrorKind::invalid_model, "quadratic matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (A + A.transpose()));
    if (eig.eigenvalues().minCoeff() < -1e-12)
      throw Error(ErrorKind::invalid_model, "quadratic matrix is not positive semidefinite");
    quad_->A = 0.5 * (A + A.transpose());
  }
  if (smax_) {
    if (smax_->slopes.cols() != p || smax_->slopes.rows() != smax_->offsets.size() ||
        smax_->slopes.rows() < 1)
      throw Error(ErrorKind::size_mismatch, "smooth-max pieces have wrong dimension");
    if (!(smax_->temperature > 0))
      throw Error(ErrorKind::invalid_model, "smooth-max temperature must be positive");
    if (smax_->kappa < 0)
      throw Error(ErrorKind::invalid_model, "smooth-max kappa must be nonnegative");
  }
}

ConvexPotential ConvexPotential::quadratic(ReferenceDomain domain,
                                           const Mat& A,
                                           const Vec& b,
                                           double c)
{
  return ConvexPotential(domain, QuadraticPart{ A, b, c }, std::nullopt);
}

ConvexPotential ConvexPotential::smooth_max(ReferenceDomain domain,
                                            const Mat& slopes,
                                            const Vec& offsets,
                                            double temperature,
                                            double kappa)
{
  if (temperature <= 0)
    temperature = 0.1 * domain.diameter();
  return ConvexPotential(
    domain, std::nullopt, SmoothMaxPart{ slopes, offsets, temperature, kappa });
}

ConvexPotential ConvexPotential::sum(const ConvexPotential& quadratic,
                                     const ConvexPotential& smooth_max)
{
  if (!(quadratic.domain() == smooth_max.domain()))
    throw Error(ErrorKind::invalid_model, "potentials live on different domains");
  if (!quadratic.quad_ || quadratic.smax_ || !smooth_max.smax_ || smooth_max.quad_)
    throw Error(ErrorKind::invalid_model, "sum expects one quadratic and one smooth-max part");
  return ConvexPotential(quadratic.domain(), quadratic.quad_, smooth_max.smax_);
}

Vec ConvexPotential::weights(const Vec& u) const
{
  const SmoothMaxPart& s = *smax_;
  Vec z = (s.slopes * u + s.offsets) / s.temperature;
  const double zmax = z.maxCoeff();
  Vec w = (z.array() - zmax).exp();
  return w / w.sum();
}

double ConvexPotential::value(const Vec& u) const
{
  double v = 0.0;
  if (quad_)
    v += 0.5 * u.dot(quad_->A * u) + quad_->b.dot(u) + quad_->c;
  if (smax_) {
    const SmoothMaxPart& s = *smax_;
    Vec z = (s.slopes * u + s.offsets) / s.temperature;
    const double zmax = z.maxCoeff();
    v += s.temperature * (zmax + std::log((z.array() - zmax).exp().sum()));
    v += s.kappa * u.squaredNorm();
  }
  return v;
}

Vec ConvexPotential::gradient(const Vec& u) const
{
  Vec g = Vec::Zero(dim());
  if (quad_)
    g += quad_->A * u + quad_->b;
  if (smax_) {
    g += smax_->slopes.transpose() * weights(u);
    g += 2.0 * smax_->kappa * u;
  }
  return g;
}

Mat ConvexPotential::hessian(const Vec& u) const
{
  const int p = dim();
  Mat H = Mat::Zero(p, p);
  if (quad_)
    H += quad_->A;
  if (smax_) {
    const SmoothMaxPart& s = *smax_;
    const Vec w = weights(u);
    const Vec mean = s.slopes.transpose() * w;
    Mat centered = s.slopes.rowwise() - mean.transpose();
    H += centered.transpose() * w.asDiagonal() * centered / s.temperature;
    H += 2.0 * s.kappa * Mat::Identity(p, p);
  }
  return 0.5 * (H + H.transpose());
}

std::vector<Mat> ConvexPotential::third_derivative(const Vec& u) const
{
  const int p = dim();
  std::vector<Mat> T(p, Mat::Zero(p, p));
  if (!smax_)
    return T;
  // third cumulant of the slope vector under the softmax weights
  const SmoothMaxPart& s = *smax_;
  const Vec w = weights(u);
  const Vec mean = s.slopes.transpose() * w;
  const Mat centered = s.slopes.rowwise() - mean.transpose();
  const double scale = 1.0 / (s.temperature * s.temperature);
  for (int l = 0; l < p; ++l) {
    const Vec wl = w.cwiseProduct(centered.col(l));
    T[l] = scale * centered.transpose() * wl.asDiagonal() * centered;
  }
  return T;
}

} // namespace ivmqr
