#include "ivmqr/solver.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cstring>
#include <limits>
#include <random>

namespace ivmqr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class AffineMap : public VectorMap
{
public:
  AffineMap(ReferenceDomain domain, Mat S, Vec c)
    : domain_(domain)
    , S_(std::move(S))
    , c_(std::move(c))
  {}
  const ReferenceDomain& domain() const override { return domain_; }
  Vec value(const Vec& u) const override { return S_ * u + c_; }
  Mat jacobian(const Vec&) const override { return S_; }

protected:
  ReferenceDomain domain_;
  Mat S_;
  Vec c_;
};

class CosineMap : public AffineMap
{
public:
  CosineMap(ReferenceDomain domain, Mat S, Vec c, Mat coef)
    : AffineMap(domain, std::move(S), std::move(c))
    , coef_(std::move(coef))
  {}
  Vec value(const Vec& u) const override
  {
    Vec v = AffineMap::value(u);
    for (int j = 0; j < coef_.rows(); ++j)
      for (int k = 0; k < coef_.cols(); ++k)
        v(j) += coef_(j, k) * std::sin((k + 1) * M_PI * u(j));
    return v;
  }
  Mat jacobian(const Vec& u) const override
  {
    Mat J = S_;
    for (int j = 0; j < coef_.rows(); ++j)
      for (int k = 0; k < coef_.cols(); ++k)
        J(j, j) += coef_(j, k) * (k + 1) * M_PI * std::cos((k + 1) * M_PI * u(j));
    return J;
  }

private:
  Mat coef_; // p x modes
};

// Symmetric matrix from its upper triangle, row-major.
Mat unpack_symmetric(const Vec& theta, int p, int& offset)
{
  Mat S(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j)
      S(i, j) = S(j, i) = theta(offset++);
  return S;
}

void pack_symmetric(const Mat& S, Vec& theta, int& offset)
{
  const int p = static_cast<int>(S.rows());
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j)
      theta(offset++) = 0.5 * (S(i, j) + S(j, i));
}

std::vector<Vec> split(const Vec& flat, int m, int k)
{
  std::vector<Vec> out;
  for (int d = 0; d < m; ++d)
    out.push_back(flat.segment(d * k, k));
  return out;
}

Vec join(const std::vector<Vec>& parts)
{
  int n = 0;
  for (const auto& v : parts)
    n += static_cast<int>(v.size());
  Vec out(n);
  int o = 0;
  for (const auto& v : parts) {
    out.segment(o, v.size()) = v;
    o += static_cast<int>(v.size());
  }
  return out;
}

struct Evaluation
{
  bool admissible = false;
  Vec tv;
  Vec r; // stacked sqrt(w) * residual density
  double lmin = 0.0;
  double lmax = 0.0;
  double merit = kInf;
};

class Objective
{
public:
  Objective(const FitProblem& pb, const FitOptions& opt)
    : pb_(pb)
    , opt_(opt)
  {
    m_ = pb.fields.treatments();
    k_ = pb.family->size();
    mode_ = pb.mode ? *pb.mode
                    : (cell_mode_supported(pb.fields, *pb.grid) ? PhiMode::cell : PhiMode::node);
    mu_ = reference_measure_on(pb.measure, pb.grid);
    sqrtw_ = pb.grid->weights.cwiseSqrt();
  }

  PhiMode mode() const { return mode_; }
  int treatments() const { return m_; }
  int block() const { return k_; }

  std::vector<std::shared_ptr<const VectorMap>> maps(const Vec& flat) const
  {
    std::vector<std::shared_ptr<const VectorMap>> out;
    for (const auto& th : split(flat, m_, k_))
      out.push_back(pb_.family->make(th));
    return out;
  }

  Evaluation operator()(const Vec& flat, bool need_box = true) const
  {
    Evaluation e;
    auto owned = maps(flat);
    std::vector<const VectorMap*> ptrs;
    for (const auto& q : owned)
      ptrs.push_back(q.get());
    if (need_box) {
      e.lmin = kInf;
      e.lmax = -kInf;
      for (const auto* q : ptrs) {
        ClassReport c = check_class_membership(*q, *pb_.grid, pb_.lambda_lo, pb_.lambda_hi);
        e.lmin = std::min(e.lmin, c.min_eigenvalue);
        e.lmax = std::max(e.lmax, c.max_eigenvalue);
      }
      e.admissible = e.lmin > pb_.lambda_lo && e.lmax < pb_.lambda_hi;
    }
    const int nz = pb_.fields.instruments();
    const int n = pb_.grid->size();
    e.tv.resize(nz);
    e.r.resize(nz * n);
    for (int z = 0; z < nz; ++z) {
      const SignedGridMeasure diff = phi(ptrs, z, pb_.fields, pb_.grid, mode_) - mu_;
      e.tv(z) = tv_norm(diff);
      e.r.segment(z * n, n) = sqrtw_.cwiseProduct(diff.density);
    }
    if (e.admissible || !need_box) {
      e.merit = e.tv.squaredNorm();
      if (need_box)
        e.merit -= opt_.barrier *
                   (std::log(e.lmin - pb_.lambda_lo) + std::log(pb_.lambda_hi - e.lmax));
    }
    return e;
  }

private:
  const FitProblem& pb_;
  const FitOptions& opt_;
  int m_ = 0;
  int k_ = 0;
  PhiMode mode_;
  SignedGridMeasure mu_;
  Vec sqrtw_;
};

std::vector<const VectorMap*> raw(const std::vector<std::shared_ptr<const VectorMap>>& v)
{
  std::vector<const VectorMap*> out;
  for (const auto& q : v)
    out.push_back(q.get());
  return out;
}

} // namespace

AffineFamily::AffineFamily(ReferenceDomain domain)
  : domain_(domain)
{}

int AffineFamily::size() const
{
  const int p = domain_.dim();
  return p * (p + 1) / 2 + p;
}

std::shared_ptr<const VectorMap> AffineFamily::make(const Vec& theta) const
{
  const int p = domain_.dim();
  if (theta.size() != AffineFamily::size())
    throw Error(ErrorKind::size_mismatch, "affine parameters have wrong length");
  int o = 0;
  Mat S = unpack_symmetric(theta, p, o);
  Vec c = theta.segment(o, p);
  return std::make_shared<AffineMap>(domain_, std::move(S), std::move(c));
}

std::optional<Vec> AffineFamily::encode(const QuantileMap& q) const
{
  if (!q.potential().affine_gradient() || !(q.domain() == domain_))
    return std::nullopt;
  Vec theta(AffineFamily::size());
  int o = 0;
  pack_symmetric(q.potential().quadratic_part()->A, theta, o);
  theta.segment(o, domain_.dim()) = q.potential().quadratic_part()->b;
  return theta;
}

LogitFamily::LogitFamily(int dim)
  : dim_(dim)
{}

std::shared_ptr<const VectorMap> LogitFamily::make(const Vec& theta) const
{
  if (theta.size() != dim_)
    throw Error(ErrorKind::size_mismatch, "logit parameters have wrong length");
  return std::make_shared<QuantileMap>(logit_potential(theta));
}

std::optional<Vec> LogitFamily::encode(const QuantileMap& q) const
{
  const auto& s = q.potential().smooth_max_part();
  if (!s || q.potential().quadratic_part() || s->slopes.rows() != dim_ + 1 || s->kappa != 0 ||
      s->temperature != 1.0)
    return std::nullopt;
  Mat expect = Mat::Zero(dim_ + 1, dim_);
  expect.bottomRows(dim_) = Mat::Identity(dim_, dim_);
  if (s->slopes != expect || s->offsets(0) != 0.0)
    return std::nullopt;
  return Vec(s->offsets.tail(dim_));
}

AffineCosineFamily::AffineCosineFamily(ReferenceDomain domain, int modes)
  : AffineFamily(domain)
  , modes_(modes)
{
  if (domain.kind() != DomainKind::unit_cube)
    throw Error(ErrorKind::invalid_model, "cosine modes are defined on the cube");
}

int AffineCosineFamily::size() const
{
  return AffineFamily::size() + domain_.dim() * modes_;
}

std::shared_ptr<const VectorMap> AffineCosineFamily::make(const Vec& theta) const
{
  const int p = domain_.dim();
  if (theta.size() != size())
    throw Error(ErrorKind::size_mismatch, "affine-cosine parameters have wrong length");
  int o = 0;
  Mat S = unpack_symmetric(theta, p, o);
  Vec c = theta.segment(o, p);
  o += p;
  Mat coef(p, modes_);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < modes_; ++k)
      coef(j, k) = theta(o++);
  return std::make_shared<CosineMap>(domain_, std::move(S), std::move(c), std::move(coef));
}

std::optional<Vec> AffineCosineFamily::encode(const QuantileMap& q) const
{
  auto base = AffineFamily::encode(q);
  if (!base)
    return std::nullopt;
  Vec theta = Vec::Zero(size());
  theta.head(base->size()) = *base;
  return theta;
}

SmoothMaxFamily::SmoothMaxFamily(ReferenceDomain domain, int pieces, double temperature)
  : domain_(domain)
  , pieces_(pieces)
  , temperature_(temperature > 0 ? temperature : 0.1 * domain.diameter())
{}

int SmoothMaxFamily::size() const
{
  return pieces_ * (domain_.dim() + 1);
}

std::shared_ptr<const VectorMap> SmoothMaxFamily::make(const Vec& theta) const
{
  const int p = domain_.dim();
  if (theta.size() != size())
    throw Error(ErrorKind::size_mismatch, "smooth-max parameters have wrong length");
  Mat slopes(pieces_, p);
  Vec offsets(pieces_);
  int o = 0;
  for (int k = 0; k < pieces_; ++k) {
    for (int i = 0; i < p; ++i)
      slopes(k, i) = theta(o++);
    offsets(k) = theta(o++);
  }
  return std::make_shared<QuantileMap>(
    ConvexPotential::smooth_max(domain_, slopes, offsets, temperature_, 1e-3));
}

std::optional<Vec> SmoothMaxFamily::encode(const QuantileMap& q) const
{
  if (!(q.domain() == domain_))
    return std::nullopt;
  const int p = domain_.dim();
  // tangent planes of phi - kappa |u|^2 at points spread over U
  const Mat pts = sample_mu(ReferenceMeasure(domain_), pieces_, 20240601);
  Vec theta(size());
  int o = 0;
  for (int k = 0; k < pieces_; ++k) {
    const Vec u = pts.col(k);
    const Vec g = q.value(u) - 2e-3 * u;
    const double v = q.potential().value(u) - 1e-3 * u.squaredNorm();
    for (int i = 0; i < p; ++i)
      theta(o++) = g(i);
    theta(o++) = v - g.dot(u);
  }
  return theta;
}

std::shared_ptr<const ParamFamily> make_family(const std::string& name, const ReferenceDomain& domain)
{
  if (name == "affine")
    return std::make_shared<AffineFamily>(domain);
  if (name == "logit")
    return std::make_shared<LogitFamily>(domain.dim());
  if (name == "affine-cosine")
    return std::make_shared<AffineCosineFamily>(domain);
  if (name == "smooth-max")
    return std::make_shared<SmoothMaxFamily>(domain);
  throw Error(ErrorKind::invalid_model, "unknown parameter family '" + name + "'");
}

std::uint64_t parameter_hash(const std::vector<Vec>& theta)
{
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& v : theta)
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      unsigned char bytes[sizeof(double)];
      const double x = v(i);
      std::memcpy(bytes, &x, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  return h;
}

double map_distance(const std::vector<const VectorMap*>& a,
                    const std::vector<const VectorMap*>& b,
                    int resolution)
{
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorKind::size_mismatch, "map lists differ in length");
  const Mat lat = sup_lattice(a[0]->domain(), resolution);
  std::vector<double> worst(lat.cols(), 0.0);
  parallel_for(lat.cols(), [&](std::size_t k) {
    const Vec u = lat.col(k);
    for (std::size_t d = 0; d < a.size(); ++d)
      worst[k] = std::max(worst[k], (a[d]->value(u) - b[d]->value(u)).norm());
  });
  return *std::max_element(worst.begin(), worst.end());
}

Vec fit_residuals(const FitProblem& pb, const std::vector<const VectorMap*>& maps)
{
  const PhiMode mode =
    pb.mode ? *pb.mode : (cell_mode_supported(pb.fields, *pb.grid) ? PhiMode::cell : PhiMode::node);
  const SignedGridMeasure mu = reference_measure_on(pb.measure, pb.grid);
  Vec out(pb.fields.instruments());
  for (int z = 0; z < out.size(); ++z)
    out(z) = tv_norm(phi(maps, z, pb.fields, pb.grid, mode) - mu);
  return out;
}

FitResult fit(const FitProblem& pb, const FitOptions& opt)
{
  if (!pb.family || !pb.grid)
    throw Error(ErrorKind::invalid_model, "fit problem needs a family and a grid");
  const int m = pb.fields.treatments();
  if (static_cast<int>(pb.theta0.size()) != m)
    throw Error(ErrorKind::size_mismatch, "need one initial parameter vector per treatment");
  Objective obj(pb, opt);
  const int k = obj.block();
  Vec theta = join(pb.theta0);
  if (theta.size() != m * k)
    throw Error(ErrorKind::size_mismatch, "initial parameters have wrong length");
  Evaluation cur = obj(theta);
  if (!cur.admissible)
    throw Error(ErrorKind::invalid_start, "initial maps leave the eigenvalue box");

  FitResult res;
  res.mode = obj.mode() == PhiMode::cell ? "cell" : "node";
  double damping = 1e-3;
  auto record = [&](int it) {
    res.log.push_back({ it, cur.tv, parameter_hash(split(theta, m, k)), damping });
    if (cur.tv.sum() <= opt.tolerance) {
      bool fresh = true;
      for (const auto& r : res.roots)
        if ((join(r.theta) - theta).norm() < 1e-8)
          fresh = false;
      if (fresh)
        res.roots.push_back({ split(theta, m, k), cur.tv.sum(), std::nullopt });
    }
  };
  record(0);
  const int P = static_cast<int>(theta.size());
  int it = 0;
  res.stop_reason = "iteration-cap";
  while (true) {
    if (cur.tv.sum() <= opt.tolerance) {
      res.converged = true;
      res.stop_reason = "tolerance";
      break;
    }
    if (it >= opt.max_iterations)
      break;
    ++it;
    // central finite-difference Jacobian of the stacked residual
    Mat J(cur.r.size(), P);
    parallel_for(P, [&](std::size_t j) {
      Vec a = theta, b = theta;
      const double h = opt.fd_step * std::max(1.0, std::abs(theta(j)));
      a(j) += h;
      b(j) -= h;
      J.col(j) = (obj(a, false).r - obj(b, false).r) / (2 * h);
    });
    const Mat A = J.transpose() * J;
    const Vec g = J.transpose() * cur.r;
    bool accepted = false;
    Vec step;
    while (damping < 1e12) {
      Mat Ad = A;
      for (int j = 0; j < P; ++j)
        Ad(j, j) += damping * (A(j, j) + 1e-12);
      step = -Ad.ldlt().solve(g);
      Evaluation next = obj(theta + step);
      if (next.admissible && next.merit < cur.merit) {
        theta += step;
        cur = std::move(next);
        damping = std::max(damping / 3.0, 1e-12);
        accepted = true;
        break;
      }
      damping *= 4.0;
    }
    record(it);
    if (!accepted) {
      res.stop_reason = "stalled";
      break;
    }
    if (step.norm() <= 1e-14 * (1.0 + theta.norm())) {
      res.stop_reason = "small-step";
      res.converged = cur.tv.sum() <= opt.tolerance;
      break;
    }
  }
  res.iterations = it;
  res.theta = split(theta, m, k);
  res.residuals = cur.tv;
  res.objective = cur.tv.squaredNorm();
  if (!pb.truth.empty()) {
    auto owned = obj.maps(theta);
    res.map_distance = map_distance(raw(owned), pb.truth);
    for (auto& r : res.roots)
      r.map_distance = map_distance(raw(obj.maps(join(r.theta))), pb.truth);
  }
  return res;
}

UniquenessTable local_uniqueness_probe(const std::vector<const VectorMap*>& q_star,
                                       const FieldSet& fields,
                                       std::shared_ptr<const QuadratureGrid> grid,
                                       const std::vector<double>& radii,
                                       const std::vector<TangentDirection>& directions,
                                       double lambda_lo,
                                       double lambda_hi,
                                       PhiMode mode)
{
  if (directions.empty())
    throw Error(ErrorKind::no_directions, "uniqueness probe needs directions");
  const ReferenceMeasure mu(q_star[0]->domain());
  const SignedGridMeasure ref = reference_measure_on(mu, grid);
  const QuadratureGrid member = build_grid(q_star[0]->domain(), 21);
  const int nd = static_cast<int>(directions.size());
  const int nr = static_cast<int>(radii.size());
  UniquenessTable t;
  t.radii = radii;
  t.residual.assign(nd, std::vector<double>(nr, std::numeric_limits<double>::quiet_NaN()));
  const int nz = fields.instruments();
  parallel_for(static_cast<std::size_t>(nd) * nr, [&](std::size_t cell) {
    const int k = static_cast<int>(cell) / nr;
    const int r = static_cast<int>(cell) % nr;
    auto maps = perturb(q_star, directions[k], radii[r]);
    for (const auto& q : maps)
      if (!check_class_membership(q, member, lambda_lo, lambda_hi).pass)
        return;
    const auto ptrs = pointers(maps);
    double s = 0.0;
    for (int z = 0; z < nz; ++z)
      s += tv_norm(phi(ptrs, z, fields, grid, mode) - ref);
    t.residual[k][r] = s;
  });
  t.envelope = kInf;
  t.min_doubling = kInf;
  t.max_doubling = -kInf;
  for (int k = 0; k < nd; ++k) {
    double num = 0.0, den = 0.0;
    for (int r = 0; r < nr; ++r) {
      if (std::isnan(t.residual[k][r])) {
        t.skipped.emplace_back(k, r);
        continue;
      }
      num += radii[r] * t.residual[k][r];
      den += radii[r] * radii[r];
    }
    const double slope = den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
    t.slopes.push_back(slope);
    if (!std::isnan(slope))
      t.envelope = std::min(t.envelope, slope);
    for (int r = 0; r + 1 < nr; ++r) {
      if (radii[r] <= 0 || std::abs(radii[r + 1] / radii[r] - 2.0) > 1e-6)
        continue;
      const double a = t.residual[k][r], b = t.residual[k][r + 1];
      if (std::isnan(a) || std::isnan(b) || a <= 0)
        continue;
      t.min_doubling = std::min(t.min_doubling, b / a);
      t.max_doubling = std::max(t.max_doubling, b / a);
    }
  }
  return t;
}

std::vector<Vec> perturbed_start(const ParamFamily& family,
                                 const std::vector<QuantileMap>& truth_maps,
                                 const QuadratureGrid& grid,
                                 double perturbation,
                                 std::uint64_t seed,
                                 double lambda_lo,
                                 double lambda_hi,
                                 double* distance)
{
  const int m = static_cast<int>(truth_maps.size());
  const auto truth = map_pointers(truth_maps);
  std::vector<Vec> star;
  for (const auto& q : truth_maps) {
    auto th = family.encode(q);
    if (!th)
      throw Error(ErrorKind::invalid_model, "truth is not representable in family " + family.name());
    star.push_back(*th);
  }
  const int k = family.size();
  for (int attempt = 0; attempt < 50; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, 1000 + attempt));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> dir(m, Vec(k));
    for (auto& v : dir)
      for (int i = 0; i < k; ++i)
        v(i) = normal(rng);
    auto trial = [&](double s) {
      std::vector<Vec> th = star;
      for (int d = 0; d < m; ++d)
        th[d] += s * dir[d];
      return th;
    };
    auto dist = [&](const std::vector<Vec>& th) {
      std::vector<std::shared_ptr<const VectorMap>> owned;
      for (const auto& t : th)
        owned.push_back(family.make(t));
      return map_distance(raw(owned), truth);
    };
    double s = 1e-2;
    const double d1 = dist(trial(s));
    if (!(d1 > 0))
      continue;
    s *= perturbation / d1;
    // one secant refinement for nonlinear families
    const double d2 = dist(trial(s));
    if (d2 > 0)
      s *= perturbation / d2;
    std::vector<Vec> theta = trial(s);
    bool ok = true;
    for (const auto& t : theta)
      ok = ok && check_class_membership(*family.make(t), grid, lambda_lo, lambda_hi).pass;
    if (ok) {
      if (distance)
        *distance = dist(theta);
      return theta;
    }
  }
  throw Error(ErrorKind::invalid_start, "no admissible perturbed start found");
}

RecoveryReport recovery_experiment(const StructuralModel& model, const RecoveryOptions& o)
{
  RecoveryReport rep;
  rep.negative_control = o.negative_control;
  const int m = model.treatments();
  FieldSet fields;
  if (o.n) {
    const ObservedSample s = simulate(model, *o.n, o.seed);
    fields = estimated_fields(s, m, o.bandwidth);
  } else {
    fields = exact_fields(model);
  }
  rep.provenance = fields.provenance();
  for (int d = 0; d < m; ++d)
    rep.supports.push_back(identify_support(fields.f[d], -1.0, o.pair_resolution));
  const auto truth = map_pointers(model.maps);
  if (m == 2)
    rep.condition12 = check_condition_12(build_pair_grid(fields, o.pair_resolution),
                                         o.lambda_lo,
                                         o.lambda_hi,
                                         model.dim());
  auto grid = std::make_shared<const QuadratureGrid>(build_grid(model.domain(), o.grid_resolution));
  if (o.probe_directions > 0) {
    TangentOptions to;
    to.K = o.K;
    to.lambda_lo = o.lambda_lo;
    to.lambda_hi = o.lambda_hi;
    TangentSample ts = sample_tangent(truth, to, derive_seed(o.seed, 77), o.probe_directions);
    if (!ts.directions.empty())
      rep.probe = full_rank_probe(truth, fields, grid, ts.directions);
  }

  std::string fam = o.family;
  if (fam.empty())
    fam = o.negative_control ? "affine-cosine" : model.family;
  auto family = make_family(fam, model.domain());
  rep.family = family->name();
  FitProblem pb;
  pb.fields = fields;
  pb.measure = model.measure;
  pb.grid = grid;
  pb.family = family;
  pb.lambda_lo = o.lambda_lo;
  pb.lambda_hi = o.lambda_hi;
  pb.truth = truth;
  pb.theta0 = perturbed_start(*family, model.maps, *grid, o.perturbation, o.seed, o.lambda_lo,
                              o.lambda_hi, &rep.start_distance);
  if (o.mode)
    pb.mode = o.mode;

  FitOptions fo;
  fo.tolerance = o.tolerance;
  fo.max_iterations = o.max_iterations;
  rep.fit = fit(pb, fo);
  rep.map_error = rep.fit.map_distance.value_or(kInf);
  rep.recovered = rep.map_error < o.threshold;
  if (o.negative_control) {
    fo.tolerance = o.tolerance * 1e-4;
    fo.max_iterations = 2 * o.max_iterations;
    FitResult tight = fit(pb, fo);
    rep.map_error_tight = tight.map_distance.value_or(kInf);
    const bool shrinks = *rep.map_error_tight < 0.5 * rep.map_error;
    rep.expected_failure = !rep.recovered && *rep.map_error_tight >= o.threshold && !shrinks;
  }
  return rep;
}

} // namespace ivmqr
