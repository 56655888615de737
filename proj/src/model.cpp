#include "ivmqr/model.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/geometry.hpp"
#include "ivmqr/parallel.hpp"
#include "ivmqr/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace ivmqr {

namespace {

constexpr int kChunk = 4096;

int draw_index(const std::vector<double>& probs, double a)
{
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    acc += probs[k];
    if (a < acc)
      return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

void check_spd(const Mat& A, const char* what)
{
  if (A.rows() != A.cols())
    throw Error(ErrorKind::invalid_model, std::string(what) + " is not square");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorKind::invalid_model, std::string(what) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(A);
  if (eig.eigenvalues().minCoeff() <= 0)
    throw Error(ErrorKind::invalid_model, std::string(what) + " is not positive definite");
}

} // namespace

int TreatmentRule::cell_of(double nu) const
{
  return static_cast<int>(std::upper_bound(breaks.begin(), breaks.end(), nu) - breaks.begin());
}

double TreatmentRule::cell_length(int cell) const
{
  const double lo = cell == 0 ? 0.0 : breaks[cell - 1];
  const double hi = cell == cells() - 1 ? 1.0 : breaks[cell];
  return hi - lo;
}

TreatmentRule TreatmentRule::compliance(double rate)
{
  if (!(rate >= 0 && rate <= 1))
    throw Error(ErrorKind::invalid_model, "compliance must lie in [0,1]");
  TreatmentRule r;
  if (rate <= 0 || rate >= 1) {
    // one cell, everybody (non-)complies
    r.assignment = rate >= 1 ? std::vector<std::vector<int>>{ { 0 }, { 1 } }
                             : std::vector<std::vector<int>>{ { 1 }, { 0 } };
    return r;
  }
  r.breaks = { rate };
  r.assignment = { { 0, 1 }, { 1, 0 } };
  return r;
}

TreatmentRule TreatmentRule::perfect(int m)
{
  TreatmentRule r;
  for (int z = 0; z < m; ++z)
    r.assignment.push_back({ z });
  return r;
}

int NuCoupling::slab_of(const Vec& w) const
{
  return static_cast<int>(
    std::upper_bound(slab_breaks.begin(), slab_breaks.end(), w(axis)) - slab_breaks.begin());
}

StructuralModel::StructuralModel(ReferenceMeasure measure_,
                                 std::vector<QuantileMap> maps_,
                                 Vec instrument_law_,
                                 TreatmentRule rule_,
                                 NuCoupling coupling_,
                                 RankCoupling rank_,
                                 double similarity_spread_)
  : measure(measure_)
  , maps(std::move(maps_))
  , instrument_law(std::move(instrument_law_))
  , rule(std::move(rule_))
  , coupling(std::move(coupling_))
  , rank(rank_)
  , similarity_spread(similarity_spread_)
{
  const int m = treatments();
  if (m < 2 || m > 3)
    throw Error(ErrorKind::invalid_model, "models support 2 or 3 treatments");
  for (const auto& q : maps)
    if (!(q.domain() == measure.domain()))
      throw Error(ErrorKind::invalid_model, "maps must share the reference domain");
  if (instrument_law.size() != m || (instrument_law.array() < 0).any() ||
      std::abs(instrument_law.sum() - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_model, "instrument law must be a probability vector of size m");
  for (std::size_t k = 0; k < rule.breaks.size(); ++k)
    if (!(rule.breaks[k] > 0 && rule.breaks[k] < 1) || (k > 0 && rule.breaks[k] <= rule.breaks[k - 1]))
      throw Error(ErrorKind::invalid_model, "rule breaks must increase inside (0,1)");
  if (static_cast<int>(rule.assignment.size()) != m)
    throw Error(ErrorKind::invalid_model, "rule needs one assignment row per instrument value");
  for (const auto& row : rule.assignment) {
    if (static_cast<int>(row.size()) != rule.cells())
      throw Error(ErrorKind::invalid_model, "rule assignment row has wrong length");
    for (int d : row)
      if (d < 0 || d >= m)
        throw Error(ErrorKind::invalid_model, "rule assigns an unknown treatment");
  }
  if (!coupling.independent()) {
    if (coupling.axis < 0 || coupling.axis >= dim())
      throw Error(ErrorKind::invalid_model, "coupling axis out of range");
    if (coupling.cell_probs.size() != coupling.slab_breaks.size() + 1)
      throw Error(ErrorKind::invalid_model, "coupling needs one probability row per slab");
    for (const auto& row : coupling.cell_probs) {
      if (static_cast<int>(row.size()) != rule.cells())
        throw Error(ErrorKind::invalid_model, "coupling row must cover every rule cell");
      double s = 0;
      for (double v : row) {
        if (v < 0)
          throw Error(ErrorKind::invalid_model, "coupling probabilities must be nonnegative");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw Error(ErrorKind::invalid_model, "coupling rows must sum to one");
    }
    if (!std::is_sorted(coupling.slab_breaks.begin(), coupling.slab_breaks.end()))
      throw Error(ErrorKind::invalid_model, "slab breaks must increase");
    // slab masses: exact on the cube, quadrature on the ball
    const int slabs = static_cast<int>(coupling.cell_probs.size());
    slab_mass.assign(slabs, 0.0);
    if (domain().kind() == DomainKind::unit_cube) {
      double prev = 0.0;
      for (int s = 0; s < slabs; ++s) {
        const double hi = s + 1 < slabs ? std::clamp(coupling.slab_breaks[s], 0.0, 1.0) : 1.0;
        slab_mass[s] = std::max(0.0, hi - prev);
        prev = std::max(prev, hi);
      }
    } else {
      const QuadratureGrid g = build_grid(domain(), 400);
      for (int i = 0; i < g.size(); ++i) {
        const Vec u = g.node(i);
        slab_mass[coupling.slab_of(u)] += g.weights(i) * measure.density(u);
      }
    }
  } else {
    slab_mass = { 1.0 };
  }
  if (rank == RankCoupling::similarity) {
    if (!(similarity_spread > 0 && similarity_spread <= 0.5))
      throw Error(ErrorKind::invalid_model, "similarity spread must lie in (0, 0.5]");
    if (domain().kind() == DomainKind::unit_ball && dim() > 2)
      throw Error(ErrorKind::dimension_error, "similarity kernel on the ball needs p <= 2");
  }
}

double StructuralModel::share(int d, int z, const Vec& u) const
{
  double s = 0.0;
  if (coupling.independent()) {
    for (int c = 0; c < rule.cells(); ++c)
      if (rule.assignment[z][c] == d)
        s += rule.cell_length(c);
    return s;
  }
  const auto& probs = coupling.cell_probs[coupling.slab_of(u)];
  for (int c = 0; c < rule.cells(); ++c)
    if (rule.assignment[z][c] == d)
      s += probs[c];
  return s;
}

double StructuralModel::share(int d, int z) const
{
  if (coupling.independent())
    return share(d, z, domain().center());
  double s = 0.0;
  for (std::size_t k = 0; k < coupling.cell_probs.size(); ++k)
    for (int c = 0; c < rule.cells(); ++c)
      if (rule.assignment[z][c] == d)
        s += slab_mass[k] * coupling.cell_probs[k][c];
  return s;
}

bool StructuralModel::tractable() const
{
  return rank == RankCoupling::invariance || coupling.independent();
}

int ObservedSample::count(int dd, int zz) const
{
  int c = 0;
  for (int i = 0; i < size(); ++i)
    c += d[i] == dd && z[i] == zz;
  return c;
}

int ObservedSample::count_z(int zz) const
{
  return static_cast<int>(std::count(z.begin(), z.end(), zz));
}

ObservedSample simulate(const StructuralModel& model, int n, std::uint64_t seed, bool keep_latent)
{
  if (n < 1)
    throw Error(ErrorKind::size_mismatch, "sample size must be at least 1");
  const int p = model.dim();
  const int m = model.treatments();
  const ReferenceDomain& dom = model.domain();
  ObservedSample out;
  out.y.resize(p, n);
  out.d.resize(n);
  out.z.resize(n);
  Mat u(p, keep_latent ? n : 0);
  Vec nu(keep_latent ? n : 0);
  std::vector<Mat> ranks(keep_latent ? m : 0, Mat(p, n));
  std::vector<double> law(model.instrument_law.data(),
                          model.instrument_law.data() + model.instrument_law.size());
  const int chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t chunk) {
    std::mt19937_64 rng(derive_seed(seed, chunk));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int begin = static_cast<int>(chunk) * kChunk;
    const int end = std::min(n, begin + kChunk);
    std::vector<Vec> uk(m);
    for (int i = begin; i < end; ++i) {
      const int zi = draw_index(law, unif(rng));
      const Vec w = model.measure.draw(rng);
      double v;
      if (model.coupling.independent()) {
        v = unif(rng);
      } else {
        const auto& probs = model.coupling.cell_probs[model.coupling.slab_of(w)];
        const int c = draw_index(probs, unif(rng));
        const double lo = c == 0 ? 0.0 : model.rule.breaks[c - 1];
        v = lo + model.rule.cell_length(c) * unif(rng);
      }
      const int di = model.rule(zi, v);
      for (int k = 0; k < m; ++k) {
        if (model.rank == RankCoupling::invariance) {
          uk[k] = w;
          continue;
        }
        const double s = model.similarity_spread;
        if (dom.kind() == DomainKind::unit_cube) {
          Vec e(p);
          for (int j = 0; j < p; ++j)
            e(j) = w(j) + (2.0 * unif(rng) - 1.0) * s;
          uk[k] = e.array() - e.array().floor();
        } else if (p == 1) {
          uk[k] = unif(rng) < s ? Vec(-w) : w;
        } else {
          const double t = (2.0 * unif(rng) - 1.0) * s * M_PI;
          Vec r(2);
          r << std::cos(t) * w(0) - std::sin(t) * w(1), std::sin(t) * w(0) + std::cos(t) * w(1);
          uk[k] = r;
        }
      }
      out.z[i] = zi;
      out.d[i] = di;
      out.y.col(i) = model.maps[di].value(uk[di]);
      if (keep_latent) {
        u.col(i) = uk[di];
        nu(i) = v;
        for (int k = 0; k < m; ++k)
          ranks[k].col(i) = uk[k];
      }
    }
  });
  if (keep_latent) {
    out.u = std::move(u);
    out.nu = std::move(nu);
    out.ranks = std::move(ranks);
  }
  return out;
}

StructuralModel example1_model(const Mat& A0,
                               const Mat& A1,
                               const Vec& b0,
                               const Vec& b1,
                               double compliance,
                               const Vec& instrument_law)
{
  const ReferenceDomain dom = ReferenceDomain::cube(static_cast<int>(A0.rows()));
  std::vector<QuantileMap> maps;
  int idx = 0;
  for (const auto& [A, b] : { std::pair{ &A0, &b0 }, std::pair{ &A1, &b1 } }) {
    check_spd(*A, idx == 0 ? "A_0" : "A_1");
    if (A->rows() != dom.dim() || b->size() != dom.dim())
      throw Error(ErrorKind::size_mismatch, "Example 1 matrices and shifts must agree in size");
    const Mat Ainv = A->inverse();
    const Mat S = 0.5 * (Ainv + Ainv.transpose());
    maps.emplace_back(ConvexPotential::quadratic(dom, S, -S * *b));
    ++idx;
  }
  Vec law = instrument_law.size() ? instrument_law : Vec::Constant(2, 0.5);
  StructuralModel model(ReferenceMeasure(dom), std::move(maps), law, TreatmentRule::compliance(compliance));
  model.family = "affine";
  return model;
}

StructuralModel example1_default(double compliance)
{
  Mat A1 = Mat::Identity(2, 2);
  A1(1, 1) = 2.0;
  return example1_model(Mat::Identity(2, 2), A1, Vec::Zero(2), Vec::Zero(2), compliance);
}

ConvexPotential logit_potential(const Vec& mean_utility)
{
  const int p = static_cast<int>(mean_utility.size());
  Mat slopes = Mat::Zero(p + 1, p);
  slopes.bottomRows(p) = Mat::Identity(p, p);
  Vec offsets(p + 1);
  offsets << 0.0, mean_utility;
  return ConvexPotential::smooth_max(ReferenceDomain::cube(p), slopes, offsets, 1.0, 0.0);
}

StructuralModel example2_model(const Vec& mean0,
                               const Vec& mean1,
                               bool outside_option,
                               double compliance,
                               const Vec& instrument_law)
{
  if (!outside_option)
    throw Error(ErrorKind::invalid_model,
                "logit shares without an outside option have a singular Jacobian");
  if (mean0.size() != mean1.size() || mean0.size() < 1)
    throw Error(ErrorKind::size_mismatch, "mean utility vectors must share a positive dimension");
  std::vector<QuantileMap> maps;
  maps.emplace_back(logit_potential(mean0));
  maps.emplace_back(logit_potential(mean1));
  Vec law = instrument_law.size() ? instrument_law : Vec::Constant(2, 0.5);
  StructuralModel model(ReferenceMeasure::uniform_cube(static_cast<int>(mean0.size())),
                        std::move(maps),
                        law,
                        TreatmentRule::compliance(compliance));
  model.family = "logit";
  return model;
}

StructuralModel example2_default(double compliance)
{
  Vec m1(2);
  m1 << 0.5, -0.5;
  return example2_model(Vec::Zero(2), m1, true, compliance);
}

QuantileMap diagonal_map()
{
  return QuantileMap(ConvexPotential::quadratic(
    ReferenceDomain::cube(2), Mat::Constant(2, 2, 0.5), Vec::Zero(2)));
}

QuantileMap regularized_diagonal_map()
{
  Mat A = 0.1 * Mat::Identity(2, 2) + 0.9 * Mat::Constant(2, 2, 0.5);
  return QuantileMap(ConvexPotential::quadratic(ReferenceDomain::cube(2), A, Vec::Zero(2)));
}

StructuralModel rank_violation_model(const QuantileMap& q1)
{
  const ReferenceDomain dom = ReferenceDomain::cube(2);
  std::vector<QuantileMap> maps;
  maps.emplace_back(ConvexPotential::quadratic(dom, Mat::Identity(2, 2), Vec::Zero(2)));
  maps.push_back(q1);
  TreatmentRule rule;
  rule.breaks = { 0.5 };
  rule.assignment = { { 0, 1 }, { 1, 0 } };
  NuCoupling coupling;
  coupling.axis = 0;
  coupling.slab_breaks = { 0.5 };
  coupling.cell_probs = { { 0.9, 0.1 }, { 0.3, 0.7 } };
  StructuralModel model(ReferenceMeasure(dom), std::move(maps), Vec::Constant(2, 0.5), rule, coupling);
  model.family = "affine";
  return model;
}

RankViolationReport rank_violation_demo(const StructuralModel& model,
                                        int n,
                                        std::uint64_t seed,
                                        int component,
                                        double alpha)
{
  if (component < 0 || component >= model.dim())
    throw Error(ErrorKind::dimension_error, "component of interest out of range");
  const ObservedSample s = simulate(model, n, seed, true);
  const int m = model.treatments();
  // scalar ranks through the marginal CDF of each potential outcome component
  std::vector<std::vector<double>> ranks(m, std::vector<double>(n));
  for (int d = 0; d < m; ++d) {
    std::vector<double> yf(n);
    for (int i = 0; i < n; ++i)
      yf[i] = model.maps[d].value(s.ranks[d].col(i))(component);
    std::vector<double> sorted = yf;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i)
      ranks[d][i] =
        static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), yf[i]) - sorted.begin()) / n;
  }
  RankViolationReport rep;
  rep.component = component;
  rep.n = n;
  rep.alpha = alpha;
  const int cells = model.rule.cells();
  for (int c = 0; c < cells; ++c) {
    std::vector<std::vector<double>> by_d(m);
    for (int i = 0; i < n; ++i)
      if (model.rule.cell_of((*s.nu)(i)) == c)
        for (int d = 0; d < m; ++d)
          by_d[d].push_back(ranks[d][i]);
    const int nc = static_cast<int>(by_d[0].size());
    double ks = 0.0;
    for (int d = 1; d < m && nc > 0; ++d)
      ks = std::max(ks, stats::ks_statistic(by_d[0], by_d[d]));
    const double crit = nc > 0 ? stats::ks_critical(nc, nc, alpha) : 1.0;
    rep.ks.push_back(ks);
    rep.critical.push_back(crit);
    rep.cell_sizes.push_back(nc);
    rep.max_ks = std::max(rep.max_ks, ks);
    rep.violation = rep.violation || ks > crit;
  }
  std::vector<double> rd(n), zz(n);
  for (int i = 0; i < n; ++i) {
    rd[i] = ranks[s.d[i]][i];
    zz[i] = s.z[i];
  }
  rep.corr_rank_z = stats::pearson_correlation(rd, zz);
  return rep;
}

bool TestSet::contains(const Vec& u) const
{
  if (kind == Kind::box)
    return (u.array() >= lower.array()).all() && (u.array() <= upper.array()).all();
  return normal.dot(u) <= offset;
}

std::string TestSet::describe() const
{
  std::ostringstream os;
  os << std::setprecision(6);
  if (kind == Kind::box) {
    os << "box";
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      os << (i ? " x " : " ") << "[" << lower(i) << ", " << upper(i) << "]";
  } else {
    os << "half-space n = (";
    for (Eigen::Index i = 0; i < normal.size(); ++i)
      os << (i ? ", " : "") << normal(i);
    os << "), c = " << offset;
  }
  return os.str();
}

std::vector<TestSet> default_test_sets(const ReferenceDomain& domain,
                                       int boxes,
                                       int cuts,
                                       std::uint64_t seed)
{
  const int p = domain.dim();
  std::mt19937_64 rng(derive_seed(seed, 0x7e57));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec lo = domain.lower();
  const Vec hi = domain.upper();
  std::vector<TestSet> sets;
  for (int k = 0; k < boxes; ++k) {
    TestSet b;
    b.lower.resize(p);
    b.upper.resize(p);
    for (int i = 0; i < p; ++i) {
      double a = lo(i) + (hi(i) - lo(i)) * unif(rng);
      double c = lo(i) + (hi(i) - lo(i)) * unif(rng);
      if (a > c)
        std::swap(a, c);
      // keep every box at least a tenth of the side wide
      const double minw = 0.1 * (hi(i) - lo(i));
      if (c - a < minw) {
        a = std::max(lo(i), a - minw / 2);
        c = std::min(hi(i), a + minw);
      }
      b.lower(i) = a;
      b.upper(i) = c;
    }
    sets.push_back(b);
  }
  for (int k = 0; k < cuts; ++k) {
    TestSet h;
    h.kind = TestSet::Kind::half_space;
    h.normal.resize(p);
    for (int i = 0; i < p; ++i)
      h.normal(i) = gauss(rng);
    h.normal.normalize();
    Vec point(p);
    for (int i = 0; i < p; ++i)
      point(i) = domain.center()(i) + 0.5 * (unif(rng) - 0.5) * (hi(i) - lo(i));
    h.offset = h.normal.dot(point);
    sets.push_back(h);
  }
  return sets;
}

double test_set_mass(const ReferenceMeasure& measure, const TestSet& set)
{
  const ReferenceDomain& dom = measure.domain();
  if (dom.kind() == DomainKind::unit_cube && dom.dim() == 2 && measure.flat()) {
    using geometry::Point2;
    const geometry::Polygon square{ Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1) };
    if (set.kind == TestSet::Kind::box)
      return geometry::area(geometry::clip_box(square, set.lower, set.upper));
    return geometry::area(geometry::clip_halfplane(square, set.normal, set.offset));
  }
  if (dom.kind() == DomainKind::unit_cube && dom.dim() == 1 && measure.flat()) {
    if (set.kind == TestSet::Kind::box)
      return std::max(0.0, std::min(1.0, set.upper(0)) - std::max(0.0, set.lower(0)));
    const double t = set.offset / set.normal(0);
    const double below = std::clamp(t, 0.0, 1.0);
    return set.normal(0) > 0 ? below : 1.0 - below;
  }
  const int res = dom.dim() == 1 ? 20000 : (dom.dim() == 2 ? 400 : 40);
  const QuadratureGrid grid = build_grid(dom, res);
  return measure_of_set(measure, [&](const Vec& u) { return set.contains(u); }, grid);
}

ImplicationReport verify_implication(const StructuralModel& model,
                                     const ObservedSample& sample,
                                     const std::vector<TestSet>& sets,
                                     double sigmas)
{
  if (sample.dim() != model.dim())
    throw Error(ErrorKind::size_mismatch, "sample and model dimensions differ");
  const int n = sample.size();
  const int nz = static_cast<int>(model.instrument_law.size());
  std::vector<Vec> u(n);
  std::vector<char> ok(n, 0);
  parallel_for(n, [&](int i) {
    const int d = sample.d[i];
    if (d < 0 || d >= model.treatments())
      return;
    if (auto v = try_legendre_invert(model.maps[d], sample.y.col(i))) {
      u[i] = *v;
      ok[i] = 1;
    }
  });

  ImplicationReport rep;
  for (int i = 0; i < n; ++i)
    rep.failed_inversions += ok[i] ? 0 : 1;
  rep.pass = true;
  for (int z = 0; z < nz; ++z) {
    const int n_z = sample.count_z(z);
    for (std::size_t s = 0; s < sets.size(); ++s) {
      ImplicationRow row;
      row.z = z;
      row.set = static_cast<int>(s);
      row.n_z = n_z;
      row.mass = test_set_mass(model.measure, sets[s]);
      int hits = 0;
      for (int i = 0; i < n; ++i)
        if (sample.z[i] == z && ok[i] && sets[s].contains(u[i]))
          ++hits;
      row.estimate = n_z > 0 ? static_cast<double>(hits) / n_z : 0.0;
      row.deviation = std::abs(row.estimate - row.mass);
      row.bound = n_z > 0 ? sigmas * std::sqrt(row.mass * (1.0 - row.mass) / n_z) : 0.0;
      row.pass = n_z > 0 && row.deviation <= row.bound;
      rep.pass = rep.pass && row.pass;
      rep.max_deviation = std::max(rep.max_deviation, row.deviation);
      if (row.bound > 0)
        rep.max_ratio = std::max(rep.max_ratio, row.deviation / row.bound);
      rep.rows.push_back(row);
    }
  }
  rep.pass = rep.pass && rep.failed_inversions == 0;
  return rep;
}

void write_sample_csv(const std::string& path, const ObservedSample& sample)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot write " + path);
  const int p = sample.dim();
  out << std::setprecision(17);
  for (int i = 0; i < p; ++i)
    out << 'y' << i + 1 << ',';
  out << "d,z";
  if (sample.has_latent()) {
    for (int i = 0; i < p; ++i)
      out << ",u" << i + 1;
    out << ",nu";
  }
  out << '\n';
  for (int k = 0; k < sample.size(); ++k) {
    for (int i = 0; i < p; ++i)
      out << sample.y(i, k) << ',';
    out << sample.d[k] << ',' << sample.z[k];
    if (sample.has_latent()) {
      for (int i = 0; i < p; ++i)
        out << ',' << (*sample.u)(i, k);
      out << ',' << (*sample.nu)(k);
    }
    out << '\n';
  }
}

ObservedSample read_sample_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::io_error, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::io_error, path + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ','))
      header.push_back(tok);
  }
  int p = 0;
  while (p < static_cast<int>(header.size()) && header[p] == "y" + std::to_string(p + 1))
    ++p;
  if (p == 0 || static_cast<int>(header.size()) < p + 2 || header[p] != "d" || header[p + 1] != "z")
    throw Error(ErrorKind::io_error, path + ": expected header y1..yp,d,z");
  const bool latent = static_cast<int>(header.size()) == 2 * p + 3;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ','))
      row.push_back(std::stod(tok));
    if (row.size() != header.size())
      throw Error(ErrorKind::io_error, path + ": ragged row");
    rows.push_back(std::move(row));
  }
  const int n = static_cast<int>(rows.size());
  ObservedSample s;
  s.y.resize(p, n);
  s.d.resize(n);
  s.z.resize(n);
  Mat u(p, latent ? n : 0);
  Vec nu(latent ? n : 0);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < p; ++i)
      s.y(i, k) = rows[k][i];
    s.d[k] = static_cast<int>(rows[k][p]);
    s.z[k] = static_cast<int>(rows[k][p + 1]);
    if (latent) {
      for (int i = 0; i < p; ++i)
        u(i, k) = rows[k][p + 2 + i];
      nu(k) = rows[k][2 * p + 2];
    }
  }
  if (latent) {
    s.u = std::move(u);
    s.nu = std::move(nu);
  }
  return s;
}

} // namespace ivmqr
