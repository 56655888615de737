#include "ivmqr/identification.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <limits>
#include <random>

namespace ivmqr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PairMin
{
  double value = kInf;
  int i0 = -1;
  int i1 = -1;
  long checked = 0;
  long skipped = 0;
};

// Minimum of fn(i0, i1) over all pairs; fn returns NaN for skipped pairs.
// Ties resolve to the lexicographically first pair.
template<class Fn>
PairMin pair_minimum(const PairGrid& g, Fn&& fn)
{
  const int n0 = g.size0();
  const int n1 = g.size1();
  std::vector<PairMin> rows(n0);
  parallel_for(n0, [&](std::size_t a) {
    PairMin& r = rows[a];
    for (int b = 0; b < n1; ++b) {
      const double v = fn(static_cast<int>(a), b);
      if (std::isnan(v)) {
        ++r.skipped;
        continue;
      }
      ++r.checked;
      if (v < r.value) {
        r.value = v;
        r.i0 = static_cast<int>(a);
        r.i1 = b;
      }
    }
  });
  PairMin out;
  for (const auto& r : rows) {
    out.checked += r.checked;
    out.skipped += r.skipped;
    if (r.value < out.value) {
      out.value = r.value;
      out.i0 = r.i0;
      out.i1 = r.i1;
    }
  }
  return out;
}

ConditionReport make_report(const std::string& name, const PairGrid& g, const PairMin& m)
{
  ConditionReport rep;
  rep.condition = name;
  rep.margin = m.value;
  rep.pass = m.value > 0;
  rep.resolution = g.resolution;
  rep.provenance = g.provenance;
  rep.checked = m.checked;
  rep.skipped = m.skipped;
  if (m.i0 >= 0) {
    rep.y0 = g.y0.col(m.i0);
    rep.y1 = g.y1.col(m.i1);
  }
  return rep;
}

double min_sym_eigenvalue(const Mat& M)
{
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

Mat cofactor_of(const Mat& C)
{
  if (C.rows() == 1)
    return Mat::Ones(1, 1);
  Eigen::FullPivLU<Mat> lu(C);
  if (!lu.isInvertible())
    throw Error(ErrorKind::singular_matrix, "cofactor of a singular Jacobian");
  return C.determinant() * lu.inverse();
}

void check_binary(const FieldSet& fields)
{
  if (fields.treatments() != 2 || fields.instruments() != 2)
    throw Error(ErrorKind::dimension_error, "binary conditions need |D| = |Z| = 2");
}

} // namespace

double condition12_value(double f00, double f01, double f10, double f11, double ratio, int p)
{
  const double s = f01 + f10;
  return 4.0 * f00 * f11 - std::pow(ratio, p + 1) * s * s;
}

double mlr_value(double f00, double f01, double f10, double f11)
{
  return f11 * f00 - f10 * f01;
}

double pd_value_p1(double f00, double f01, double f10, double f11)
{
  // eigenvalues of [[a, c], [c, d]] with c the mean off-diagonal entry
  const double c = 0.5 * (f01 + f10);
  const double mean = 0.5 * (f00 + f11);
  const double half = 0.5 * (f00 - f11);
  return mean - std::sqrt(half * half + c * c);
}

PairGrid pair_grid_from_points(const FieldSet& fields, const Mat& y0, const Mat& y1)
{
  check_binary(fields);
  PairGrid g;
  g.y0 = y0;
  g.y1 = y1;
  g.f00.resize(y0.cols());
  g.f01.resize(y0.cols());
  g.f10.resize(y1.cols());
  g.f11.resize(y1.cols());
  parallel_for(y0.cols(), [&](std::size_t i) {
    const Vec y = y0.col(i);
    g.f00(i) = fields.at(0, 0).value(y);
    g.f01(i) = fields.at(0, 1).value(y);
  });
  parallel_for(y1.cols(), [&](std::size_t i) {
    const Vec y = y1.col(i);
    g.f10(i) = fields.at(1, 0).value(y);
    g.f11(i) = fields.at(1, 1).value(y);
  });
  g.provenance = fields.provenance();
  return g;
}

PairGrid build_pair_grid(const FieldSet& fields, int resolution)
{
  check_binary(fields);
  const SupportSet s0 = identify_support({ fields.f[0][0], fields.f[0][1] }, -1.0, resolution);
  const SupportSet s1 = identify_support({ fields.f[1][0], fields.f[1][1] }, -1.0, resolution);
  PairGrid g = pair_grid_from_points(fields, s0.centers, s1.centers);
  g.resolution = resolution;
  return g;
}

ConditionReport check_condition_12(const PairGrid& g, double lambda_lo, double lambda_hi, int p)
{
  if (!(lambda_lo > 0 && lambda_lo < lambda_hi))
    throw Error(ErrorKind::invalid_model, "eigenvalue bounds must satisfy 0 < lo < hi");
  const double ratio = lambda_hi / lambda_lo;
  const PairMin m = pair_minimum(g, [&](int a, int b) {
    if (g.f00(a) == 0 && g.f01(a) == 0 && g.f10(b) == 0 && g.f11(b) == 0)
      return std::numeric_limits<double>::quiet_NaN();
    return condition12_value(g.f00(a), g.f01(a), g.f10(b), g.f11(b), ratio, p);
  });
  return make_report("correlation", g, m);
}

ConditionReport check_mlr(const PairGrid& g)
{
  const PairMin m = pair_minimum(g, [&](int a, int b) {
    if (g.f00(a) <= 0 || g.f01(a) <= 0)
      return std::numeric_limits<double>::quiet_NaN();
    return mlr_value(g.f00(a), g.f01(a), g.f10(b), g.f11(b));
  });
  return make_report("mlr", g, m);
}

ConditionReport check_pd_matrix_p1(const PairGrid& g, bool relabel)
{
  if (g.y0.rows() != 1 || g.y1.rows() != 1)
    throw Error(ErrorKind::dimension_error, "the 2x2 matrix condition is for p = 1");
  auto run = [&](bool swap) {
    return pair_minimum(g, [&](int a, int b) {
      if (g.f00(a) == 0 && g.f01(a) == 0 && g.f10(b) == 0 && g.f11(b) == 0)
        return std::numeric_limits<double>::quiet_NaN();
      return swap ? pd_value_p1(g.f01(a), g.f00(a), g.f11(b), g.f10(b))
                  : pd_value_p1(g.f00(a), g.f01(a), g.f10(b), g.f11(b));
    });
  };
  const PairMin plain = run(false);
  ConditionReport rep = make_report("pd-matrix-p1", g, plain);
  if (relabel && !rep.pass) {
    const PairMin swapped = run(true);
    if (swapped.value > 0) {
      rep = make_report("pd-matrix-p1", g, swapped);
      rep.relabeled = true;
    }
  }
  return rep;
}

Mat assemble_quadratic_form(const std::vector<const VectorMap*>& maps,
                            const FieldSet& fields,
                            const Vec& u)
{
  const int m = static_cast<int>(maps.size());
  const int p = maps[0]->dim();
  if (fields.treatments() != m || fields.instruments() != m)
    throw Error(ErrorKind::size_mismatch, "fields must cover every (d, z)");
  Mat M = Mat::Zero(m * p, m * p);
  for (int d = 0; d < m; ++d) {
    const Vec y = maps[d]->value(u);
    const Mat cof = cofactor_of(maps[d]->jacobian(u));
    for (int z = 0; z < m; ++z)
      M.block(z * p, d * p, p, p) = fields.at(d, z).value(y) * cof;
  }
  return M;
}

QuadraticFormResult quadratic_form_min(const std::vector<const VectorMap*>& maps,
                                       const FieldSet& fields,
                                       const Vec& u,
                                       int samples,
                                       std::uint64_t seed)
{
  QuadraticFormResult out;
  out.block = assemble_quadratic_form(maps, fields, u);
  const Mat S = 0.5 * (out.block + out.block.transpose());
  out.exact_min = min_sym_eigenvalue(out.block);
  const int n = static_cast<int>(S.rows());
  const int p = maps[0]->dim();
  const int m = static_cast<int>(maps.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  out.sampled_min = kInf;
  auto consider = [&](Vec xi) {
    const double nrm = xi.norm();
    if (nrm == 0)
      return;
    xi /= nrm;
    const double v = xi.dot(S * xi);
    if (v < out.sampled_min) {
      out.sampled_min = v;
      out.sampled_argmin = xi;
    }
  };
  // directed candidates: eigenvectors of each Dq_d, aligned or opposed
  // across treatments, where Young's inequality is tight
  for (int d = 0; d < m; ++d) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(maps[d]->jacobian(u));
    for (int k = 0; k < p; ++k)
      for (int sign : { 1, -1 }) {
        Vec xi = Vec::Zero(n);
        for (int e = 0; e < m; ++e)
          xi.segment(e * p, p) = (e == 0 ? 1.0 : sign) * eig.eigenvectors().col(k);
        consider(xi);
      }
  }
  for (int s = 0; s < samples; ++s) {
    Vec xi(n);
    for (int i = 0; i < n; ++i)
      xi(i) = normal(rng);
    consider(xi);
  }
  return out;
}

Mat assemble_general_form(const Mat& b,
                          const std::vector<const VectorMap*>& maps,
                          const FieldSet& fields,
                          const Vec& u)
{
  const int m = static_cast<int>(maps.size());
  const int p = maps[0]->dim();
  Mat M = Mat::Zero(m * p, m * p);
  for (int d = 0; d < m; ++d) {
    const Vec y = maps[d]->value(u);
    const Mat cof = cofactor_of(maps[d]->jacobian(u));
    Vec f(m);
    for (int z = 0; z < m; ++z)
      f(z) = fields.at(d, z).value(y);
    for (int dp = 0; dp < m; ++dp)
      M.block(dp * p, d * p, p, p) = b.row(dp).dot(f) * cof;
  }
  return M;
}

ConditionReport check_general_condition(const Mat& b,
                                        const FieldSet& fields,
                                        const std::vector<const VectorMap*>& maps,
                                        const QuadratureGrid& grid)
{
  const int m = static_cast<int>(maps.size());
  if (b.rows() != b.cols())
    throw Error(ErrorKind::invalid_b, "b must be square");
  if (b.rows() != m)
    throw Error(ErrorKind::invalid_b, "b must be m x m with m the number of treatments");
  if (m < 2 || m > 3)
    throw Error(ErrorKind::invalid_b, "the general condition supports m in {2, 3}");
  if (fields.treatments() != m || fields.instruments() != m)
    throw Error(ErrorKind::size_mismatch, "fields must cover every (d, z)");
  const int n = grid.size();
  std::vector<double> vals(n);
  parallel_for(n, [&](std::size_t i) {
    vals[i] = min_sym_eigenvalue(assemble_general_form(b, maps, fields, grid.node(static_cast<int>(i))));
  });
  ConditionReport rep;
  rep.condition = "general-b";
  rep.margin = kInf;
  int arg = -1;
  for (int i = 0; i < n; ++i)
    if (vals[i] < rep.margin) {
      rep.margin = vals[i];
      arg = i;
    }
  if (arg >= 0)
    rep.u = grid.node(arg);
  rep.checked = n;
  rep.pass = rep.margin > 0;
  rep.resolution = grid.resolution;
  rep.provenance = fields.provenance();
  return rep;
}

BSearchResult search_b_matrix(const FieldSet& fields,
                              const std::vector<const VectorMap*>& maps,
                              const QuadratureGrid& grid)
{
  const int m = fields.treatments();
  Mat S(m, m); // S(d, z) = P(D = d | Z = z)
  for (int d = 0; d < m; ++d)
    for (int z = 0; z < m; ++z)
      S(d, z) = fields.at(d, z).share();
  std::vector<std::pair<std::string, Mat>> cands;
  cands.emplace_back("identity", Mat::Identity(m, m));
  Eigen::FullPivLU<Mat> lu(S);
  if (lu.isInvertible())
    cands.emplace_back("inverse-shares", Mat(lu.inverse().transpose()));
  Mat rn = S;
  for (int d = 0; d < m; ++d) {
    const double s = rn.row(d).sum();
    if (s > 0)
      rn.row(d) /= s;
  }
  cands.emplace_back("row-normalized-shares", rn);
  BSearchResult out;
  bool first = true;
  for (const auto& [name, b] : cands) {
    ConditionReport rep = check_general_condition(b, fields, maps, grid);
    out.tried.emplace_back(name, rep.margin);
    if (first || rep.margin > out.best.margin) {
      out.best = rep;
      out.best_b = b;
      out.best_name = name;
      first = false;
    }
  }
  return out;
}

std::vector<const VectorMap*> map_pointers(const std::vector<QuantileMap>& maps)
{
  std::vector<const VectorMap*> out;
  for (const auto& q : maps)
    out.push_back(&q);
  return out;
}

} // namespace ivmqr
