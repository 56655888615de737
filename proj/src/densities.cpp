#include "ivmqr/densities.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/parallel.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ivmqr {

namespace {

double epan(double t)
{
  return std::abs(t) < 1.0 ? 0.75 * (1.0 - t * t) : 0.0;
}

double epan_d(double t)
{
  return std::abs(t) < 1.0 ? -1.5 * t : 0.0;
}

double epan_cdf(double t)
{
  if (t <= -1.0)
    return 0.0;
  if (t >= 1.0)
    return 1.0;
  return 0.5 + 0.75 * t - 0.25 * t * t * t;
}

double box_volume(const Vec& lo, const Vec& hi)
{
  return (hi - lo).cwiseMax(0.0).prod();
}

} // namespace

const char* to_string(Provenance p)
{
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::kernel: return "kernel";
    case Provenance::constant: return "constant";
  }
  return "unknown";
}

Vec DensityField::gradient(const Vec& y) const
{
  const Vec span = support_upper() - support_lower();
  Vec g(y.size());
  for (int i = 0; i < y.size(); ++i) {
    const double h = 1e-6 * std::max(span(i), 1e-12);
    Vec a = y, b = y;
    a(i) += h;
    b(i) -= h;
    g(i) = (value(a) - value(b)) / (2 * h);
  }
  return g;
}

double DensityField::cell_mass(const Vec& lo, const Vec& hi) const
{
  const int p = dim();
  const int r = p == 1 ? 4000 : (p == 2 ? 200 : 20);
  const QuadratureGrid g = build_box_grid(lo, hi, r);
  double s = 0.0;
  for (int i = 0; i < g.size(); ++i)
    s += g.weights(i) * value(g.node(i));
  return s;
}

ExactDensity::ExactDensity(std::shared_ptr<const StructuralModel> model, int d, int z)
  : DensityField(d, z, model->dim())
  , model_(std::move(model))
{
  if (d < 0 || d >= model_->treatments() || z < 0 || z >= model_->treatments())
    throw Error(ErrorKind::invalid_model, "treatment or instrument label out of range");
  if (!model_->tractable())
    throw Error(ErrorKind::unsupported_coupling,
                "similarity kernel with nu coupled to U has no closed-form density");
  share_ = model_->share(d, z);
  const int p = dim();
  cell_resolution_ = p == 1 ? 20000 : (p == 2 ? 600 : 40);
}

void ExactDensity::set_cell_resolution(int r)
{
  if (r < 1)
    throw Error(ErrorKind::invalid_resolution, "cell resolution must be positive");
  std::lock_guard<std::mutex> lock(cloud_mutex_);
  cell_resolution_ = r;
  cloud_.reset();
}

const ExactDensity::Cloud& ExactDensity::cloud() const
{
  std::lock_guard<std::mutex> lock(cloud_mutex_);
  if (!cloud_) {
    const QuadratureGrid g = build_grid(model_->domain(), cell_resolution_);
    auto c = std::make_shared<Cloud>();
    c->y.resize(dim(), g.size());
    c->mass.resize(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
      const Vec u = g.node(static_cast<int>(i));
      c->y.col(i) = map().value(u);
      c->mass(i) = g.weights(i) * model_->share(treatment(), instrument(), u) *
                   model_->measure.density(u);
    });
    cloud_ = std::move(c);
  }
  return *cloud_;
}

double ExactDensity::value_at_rank(const Vec& u) const
{
  const double det = map().jacobian(u).determinant();
  if (!(det > 0))
    return 0.0;
  return model_->share(treatment(), instrument(), u) * model_->measure.density(u) / det;
}

double ExactDensity::value(const Vec& y) const
{
  if (y.size() != dim())
    throw Error(ErrorKind::size_mismatch, "point has wrong dimension");
  auto u = try_legendre_invert(map(), y);
  if (!u)
    return 0.0;
  return value_at_rank(*u);
}

Vec ExactDensity::gradient(const Vec& y) const
{
  const int p = dim();
  auto u = try_legendre_invert(map(), y);
  if (!u)
    return Vec::Zero(p);
  const Mat H = map().jacobian(*u);
  const double det = H.determinant();
  if (!(det > 0))
    return Vec::Zero(p);
  const auto T = map().potential().third_derivative(*u);
  const Eigen::LDLT<Mat> ldlt(H);
  const Mat Hinv = ldlt.solve(Mat::Identity(p, p));
  const double mu = model_->measure.density(*u);
  Vec dlogdet(p);
  for (int l = 0; l < p; ++l)
    dlogdet(l) = (Hinv * T[l]).trace();
  const double pi = model_->share(treatment(), instrument(), *u);
  const Vec gu = pi / det * (model_->measure.density_gradient(*u) - mu * dlogdet);
  return ldlt.solve(gu);
}

double ExactDensity::cell_mass(const Vec& lo, const Vec& hi) const
{
  const int p = dim();
  const StructuralModel& m = *model_;
  const bool affine = map().potential().affine_gradient() &&
                      m.domain().kind() == DomainKind::unit_cube && m.measure.flat();
  if (!affine || p > 2) {
    // pushforward of a U quadrature: mass of nodes whose image lies in the cell
    const Cloud& c = cloud();
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.y.cols(); ++i) {
      bool in = true;
      for (int k = 0; k < p && in; ++k)
        in = c.y(k, i) >= lo(k) && c.y(k, i) < hi(k);
      if (in)
        s += c.mass(i);
    }
    return s;
  }
  // exact: the preimage of a box under an affine map is a parallelogram
  const QuadraticPart& q = *map().potential().quadratic_part();
  const Mat Sinv = q.A.inverse();
  // slabs of constant share along the coupling axis
  std::vector<double> breaks{ 0.0 };
  for (double b : m.coupling.slab_breaks)
    breaks.push_back(std::clamp(b, 0.0, 1.0));
  breaks.push_back(1.0);
  const int axis = m.coupling.independent() ? 0 : m.coupling.axis;
  double mass = 0.0;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    if (breaks[s + 1] <= breaks[s])
      continue;
    Vec probe = Vec::Constant(p, 0.5);
    probe(axis) = 0.5 * (breaks[s] + breaks[s + 1]);
    const double pi = m.share(treatment(), instrument(), probe);
    if (pi == 0.0)
      continue;
    if (p == 1) {
      const double a = Sinv(0, 0) * (lo(0) - q.b(0));
      const double b = Sinv(0, 0) * (hi(0) - q.b(0));
      const double l = std::max({ std::min(a, b), 0.0, breaks[s] });
      const double h = std::min({ std::max(a, b), 1.0, breaks[s + 1] });
      mass += pi * std::max(0.0, h - l);
      continue;
    }
    const Eigen::Vector2d center = Sinv * (0.5 * (lo + hi) - q.b);
    const Eigen::Matrix2d edges = Sinv * (hi - lo).asDiagonal();
    geometry::Polygon poly = geometry::parallelogram(center, edges);
    Eigen::Vector2d blo(0.0, 0.0), bhi(1.0, 1.0);
    blo(axis) = breaks[s];
    bhi(axis) = breaks[s + 1];
    poly = geometry::clip_box(poly, blo, bhi);
    mass += pi * geometry::area(poly);
  }
  return mass;
}

KernelDensity::KernelDensity(const Mat& points, int d, int z, const Vec& bandwidth, double share)
  : DensityField(d, z, static_cast<int>(points.rows()))
  , n_(static_cast<int>(points.cols()))
  , h_(bandwidth)
  , share_(share)
{
  const int p = dim();
  if (n_ < 1)
    throw Error(ErrorKind::insufficient_data, "kernel estimate needs data");
  if (h_.size() != p || !(h_.array() > 0).all() || !h_.allFinite())
    throw Error(ErrorKind::invalid_bandwidth, "bandwidth must be positive and finite");
  lower_ = points.rowwise().minCoeff();
  upper_ = points.rowwise().maxCoeff();
  for (int i = 0; i < p; ++i)
    if (h_(i) > upper_(i) - lower_(i))
      throw Error(ErrorKind::invalid_bandwidth, "bandwidth exceeds the sample range");
  std::vector<Vec> aug;
  aug.reserve(static_cast<std::size_t>(n_) * 2);
  for (int k = 0; k < n_; ++k) {
    std::vector<Vec> copies{ points.col(k) };
    for (int i = 0; i < p; ++i) {
      const std::size_t base = copies.size();
      for (std::size_t c = 0; c < base; ++c) {
        const double x = copies[c](i);
        if (x - lower_(i) < h_(i)) {
          Vec r = copies[c];
          r(i) = 2 * lower_(i) - x;
          copies.push_back(r);
        }
        if (upper_(i) - x < h_(i)) {
          Vec r = copies[c];
          r(i) = 2 * upper_(i) - x;
          copies.push_back(r);
        }
      }
    }
    for (auto& c : copies)
      aug.push_back(std::move(c));
  }
  std::stable_sort(aug.begin(), aug.end(), [](const Vec& a, const Vec& b) { return a(0) < b(0); });
  aug_.resize(p, static_cast<Eigen::Index>(aug.size()));
  for (std::size_t k = 0; k < aug.size(); ++k)
    aug_.col(static_cast<Eigen::Index>(k)) = aug[k];
}

template<class Fn>
void KernelDensity::for_neighbours(const Vec& y, Fn&& fn) const
{
  const auto first = aug_.row(0);
  const Eigen::Index n = aug_.cols();
  // binary search for the window [y0 - h0, y0 + h0]
  Eigen::Index lo = 0, hi = n;
  while (lo < hi) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (first(mid) < y(0) - h_(0))
      lo = mid + 1;
    else
      hi = mid;
  }
  for (Eigen::Index k = lo; k < n && first(k) <= y(0) + h_(0); ++k)
    fn(k);
}

double KernelDensity::value(const Vec& y) const
{
  const int p = dim();
  for (int i = 0; i < p; ++i)
    if (y(i) < lower_(i) || y(i) > upper_(i))
      return 0.0;
  double s = 0.0;
  for_neighbours(y, [&](Eigen::Index k) {
    double w = 1.0;
    for (int i = 0; i < p && w != 0.0; ++i)
      w *= epan((y(i) - aug_(i, k)) / h_(i)) / h_(i);
    s += w;
  });
  return share_ * s / n_;
}

Vec KernelDensity::gradient(const Vec& y) const
{
  const int p = dim();
  Vec g = Vec::Zero(p);
  for (int i = 0; i < p; ++i)
    if (y(i) < lower_(i) || y(i) > upper_(i))
      return g;
  std::vector<double> kv(p), kd(p);
  for_neighbours(y, [&](Eigen::Index k) {
    for (int i = 0; i < p; ++i) {
      const double t = (y(i) - aug_(i, k)) / h_(i);
      kv[i] = epan(t) / h_(i);
      kd[i] = epan_d(t) / (h_(i) * h_(i));
    }
    for (int j = 0; j < p; ++j) {
      double w = kd[j];
      for (int i = 0; i < p; ++i)
        if (i != j)
          w *= kv[i];
      g(j) += w;
    }
  });
  return share_ * g / n_;
}

double KernelDensity::cell_mass(const Vec& lo, const Vec& hi) const
{
  const int p = dim();
  const Vec a = lo.cwiseMax(lower_);
  const Vec b = hi.cwiseMin(upper_);
  if ((b.array() <= a.array()).any())
    return 0.0;
  double s = 0.0;
  const Eigen::Index n = aug_.cols();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (aug_(0, k) < a(0) - h_(0))
      continue;
    if (aug_(0, k) > b(0) + h_(0))
      break;
    double w = 1.0;
    for (int i = 0; i < p && w != 0.0; ++i)
      w *= epan_cdf((b(i) - aug_(i, k)) / h_(i)) - epan_cdf((a(i) - aug_(i, k)) / h_(i));
    s += w;
  }
  return share_ * s / n_;
}

ConstantDensity::ConstantDensity(int d, int z, Vec lower, Vec upper, double level)
  : DensityField(d, z, static_cast<int>(lower.size()))
  , lower_(std::move(lower))
  , upper_(std::move(upper))
  , level_(level)
{
  if (level_ < 0)
    throw Error(ErrorKind::invalid_model, "density level must be nonnegative");
}

double ConstantDensity::value(const Vec& y) const
{
  for (int i = 0; i < y.size(); ++i)
    if (y(i) < lower_(i) || y(i) > upper_(i))
      return 0.0;
  return level_;
}

double ConstantDensity::cell_mass(const Vec& lo, const Vec& hi) const
{
  return level_ * box_volume(lo.cwiseMax(lower_), hi.cwiseMin(upper_));
}

double ConstantDensity::share() const
{
  return level_ * box_volume(lower_, upper_);
}

bool FieldSet::all_exact() const
{
  for (const auto& row : f)
    for (const auto& x : row)
      if (x->provenance() == Provenance::kernel)
        return false;
  return true;
}

std::string FieldSet::provenance() const
{
  if (all_exact())
    return "exact";
  double h = 0.0;
  for (const auto& row : f)
    for (const auto& x : row)
      h = std::max(h, x->bandwidth());
  std::ostringstream os;
  os << "kernel(bandwidth<=" << h << ")";
  return os.str();
}

std::shared_ptr<ExactDensity> exact_density(const StructuralModel& model, int d, int z)
{
  return std::make_shared<ExactDensity>(std::make_shared<const StructuralModel>(model), d, z);
}

FieldSet exact_fields(const StructuralModel& model)
{
  auto shared = std::make_shared<const StructuralModel>(model);
  const int m = model.treatments();
  FieldSet fs;
  fs.f.assign(m, std::vector<FieldPtr>(m));
  for (int d = 0; d < m; ++d)
    for (int z = 0; z < m; ++z)
      fs.f[d][z] = std::make_shared<ExactDensity>(shared, d, z);
  return fs;
}

std::shared_ptr<KernelDensity> estimate_density(const ObservedSample& sample,
                                                int d,
                                                int z,
                                                std::optional<double> bandwidth)
{
  if (bandwidth && !(*bandwidth > 0 && std::isfinite(*bandwidth)))
    throw Error(ErrorKind::invalid_bandwidth, "bandwidth must be positive");
  const int p = sample.dim();
  std::vector<int> rows;
  int nz = 0;
  for (int i = 0; i < sample.size(); ++i) {
    if (sample.z[i] != z)
      continue;
    ++nz;
    if (sample.d[i] == d)
      rows.push_back(i);
  }
  const int n = static_cast<int>(rows.size());
  if (n < 100)
    throw Error(ErrorKind::insufficient_data,
                "need at least 100 rows with (D,Z) = (" + std::to_string(d) + "," +
                  std::to_string(z) + "), found " + std::to_string(n));
  Mat pts(p, n);
  for (int k = 0; k < n; ++k)
    pts.col(k) = sample.y.col(rows[k]);
  Vec h(p);
  if (bandwidth) {
    h.setConstant(*bandwidth);
  } else {
    const Vec mean = pts.rowwise().mean();
    const Vec sd = ((pts.colwise() - mean).array().square().rowwise().sum() / (n - 1)).sqrt();
    h = std::pow(static_cast<double>(n), -1.0 / (p + 4)) * sd;
  }
  return std::make_shared<KernelDensity>(pts, d, z, h, static_cast<double>(n) / nz);
}

FieldSet estimated_fields(const ObservedSample& sample, int treatments, std::optional<double> bandwidth)
{
  FieldSet fs;
  fs.f.assign(treatments, std::vector<FieldPtr>(treatments));
  for (int d = 0; d < treatments; ++d)
    for (int z = 0; z < treatments; ++z)
      fs.f[d][z] = estimate_density(sample, d, z, bandwidth);
  return fs;
}

double integrate_field(const DensityField& field, int resolution)
{
  const QuadratureGrid g = build_box_grid(field.support_lower(), field.support_upper(), resolution);
  std::vector<double> vals(g.size());
  parallel_for(g.size(), [&](std::size_t i) {
    vals[i] = g.weights(static_cast<int>(i)) * field.value(g.node(static_cast<int>(i)));
  });
  return std::accumulate(vals.begin(), vals.end(), 0.0);
}

bool SupportSet::contains(const Vec& y, double tol) const
{
  if (empty())
    return false;
  if (y.size() == 2 && hull.size() >= 3)
    return geometry::hull_contains(hull, geometry::Point2(y(0), y(1)), tol);
  for (int i = 0; i < y.size(); ++i)
    if (y(i) < cell_lower(i) - tol || y(i) > cell_upper(i) + tol)
      return false;
  return true;
}

SupportSet identify_support(const std::vector<FieldPtr>& fields, double threshold, int resolution)
{
  if (fields.empty())
    throw Error(ErrorKind::size_mismatch, "support identification needs at least one field");
  if (resolution < 2)
    throw Error(ErrorKind::invalid_resolution, "support grid needs resolution >= 2");
  const int p = fields[0]->dim();
  SupportSet s;
  s.lower = fields[0]->support_lower();
  s.upper = fields[0]->support_upper();
  for (const auto& f : fields) {
    s.lower = s.lower.cwiseMin(f->support_lower());
    s.upper = s.upper.cwiseMax(f->support_upper());
  }
  s.resolution = resolution;
  const QuadratureGrid g = build_box_grid(s.lower, s.upper, resolution);
  std::vector<double> vals(g.size());
  parallel_for(g.size(), [&](std::size_t i) {
    double v = 0.0;
    for (const auto& f : fields)
      v = std::max(v, f->value(g.node(static_cast<int>(i))));
    vals[i] = v;
  });
  const double vmax = vals.empty() ? 0.0 : *std::max_element(vals.begin(), vals.end());
  s.threshold = threshold >= 0 ? threshold : 1e-3 * vmax;
  for (int i = 0; i < g.size(); ++i)
    if (vals[i] > s.threshold)
      s.cells.push_back(i);
  s.centers.resize(p, static_cast<Eigen::Index>(s.cells.size()));
  const Vec half = 0.5 * s.cell_width();
  s.cell_lower = Vec::Constant(p, std::numeric_limits<double>::infinity());
  s.cell_upper = -s.cell_lower;
  std::vector<geometry::Point2> corners;
  for (std::size_t k = 0; k < s.cells.size(); ++k) {
    const Vec c = g.node(s.cells[k]);
    s.centers.col(static_cast<Eigen::Index>(k)) = c;
    s.cell_lower = s.cell_lower.cwiseMin(c - half);
    s.cell_upper = s.cell_upper.cwiseMax(c + half);
    if (p == 2)
      for (double sx : { -1.0, 1.0 })
        for (double sy : { -1.0, 1.0 })
          corners.emplace_back(c(0) + sx * half(0), c(1) + sy * half(1));
  }
  if (p == 2 && !corners.empty())
    s.hull = geometry::convex_hull(std::move(corners));
  return s;
}

void write_field_csv(const std::string& path, const DensityField& field, int resolution)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot write " + path);
  const QuadratureGrid g =
    build_box_grid(field.support_lower(), field.support_upper(), resolution);
  out << std::setprecision(17);
  for (int i = 0; i < g.dim(); ++i)
    out << 'y' << i + 1 << ',';
  out << "value\n";
  for (int k = 0; k < g.size(); ++k) {
    for (int i = 0; i < g.dim(); ++i)
      out << g.nodes(i, k) << ',';
    out << field.value(g.node(k)) << '\n';
  }
}

} // namespace ivmqr
