#include "ivmqr/io.hpp"

#include "ivmqr/error.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ivmqr::io {

json number(double x)
{
  if (!std::isfinite(x))
    return nullptr;
  return x;
}

json to_json(const Vec& v)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(number(v(i)));
  return a;
}

json to_json(const Mat& m)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(number(m(i, j)));
    a.push_back(row);
  }
  return a;
}

Vec vec_from_json(const json& j)
{
  if (!j.is_array())
    throw Error(ErrorKind::invalid_config, "expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw Error(ErrorKind::invalid_config, "expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const json& j)
{
  if (!j.is_array() || j.empty())
    throw Error(ErrorKind::invalid_config, "expected a non-empty matrix");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw Error(ErrorKind::invalid_config, "matrix rows must have equal length");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number())
        throw Error(ErrorKind::invalid_config, "matrix entries must be numbers");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

json to_json(const ReferenceDomain& d)
{
  return json{ { "kind", d.name() }, { "dim", d.dim() } };
}

ReferenceDomain domain_from_json(const json& j)
{
  const std::string kind = j.at("kind").get<std::string>();
  const int dim = j.at("dim").get<int>();
  if (kind == "unit-cube")
    return ReferenceDomain::cube(dim);
  if (kind == "unit-ball")
    return ReferenceDomain::ball(dim);
  throw Error(ErrorKind::invalid_config, "unknown domain kind '" + kind + "'");
}

json to_json(const ConvexPotential& phi)
{
  json j;
  const auto& q = phi.quadratic_part();
  const auto& s = phi.smooth_max_part();
  j["type"] = q && s ? "sum" : (q ? "quadratic" : "smooth-max");
  j["domain"] = to_json(phi.domain());
  if (q)
    j["quadratic"] = json{ { "A", to_json(q->A) }, { "b", to_json(q->b) }, { "c", q->c } };
  if (s)
    j["smooth_max"] = json{ { "slopes", to_json(s->slopes) },
                            { "offsets", to_json(s->offsets) },
                            { "temperature", s->temperature },
                            { "kappa", s->kappa } };
  return j;
}

ConvexPotential potential_from_json(const json& j)
{
  const ReferenceDomain dom = domain_from_json(j.at("domain"));
  std::optional<QuadraticPart> q;
  std::optional<SmoothMaxPart> s;
  const std::string type = j.at("type").get<std::string>();
  if (type != "quadratic" && type != "smooth-max" && type != "sum")
    throw Error(ErrorKind::invalid_config, "unknown potential type '" + type + "'");
  if (type != "smooth-max") {
    const json& jq = j.at("quadratic");
    q = QuadraticPart{ mat_from_json(jq.at("A")), vec_from_json(jq.at("b")), jq.value("c", 0.0) };
  }
  if (type != "quadratic") {
    const json& js = j.at("smooth_max");
    s = SmoothMaxPart{ mat_from_json(js.at("slopes")),
                       vec_from_json(js.at("offsets")),
                       js.value("temperature", 0.1 * dom.diameter()),
                       js.value("kappa", 1e-3) };
  }
  return ConvexPotential(dom, q, s);
}

json to_json(const StructuralModel& m)
{
  json j;
  j["measure"] = m.measure.name();
  j["domain"] = to_json(m.domain());
  j["family"] = m.family;
  json maps = json::array();
  for (const auto& q : m.maps)
    maps.push_back(to_json(q.potential()));
  j["maps"] = maps;
  j["instrument_law"] = to_json(m.instrument_law);
  json rule;
  rule["breaks"] = m.rule.breaks;
  rule["assignment"] = m.rule.assignment;
  j["rule"] = rule;
  json coupling;
  coupling["axis"] = m.coupling.axis;
  coupling["slab_breaks"] = m.coupling.slab_breaks;
  coupling["cell_probs"] = m.coupling.cell_probs;
  j["nu_coupling"] = coupling;
  j["rank_coupling"] = m.rank == RankCoupling::invariance ? "invariance" : "similarity";
  j["similarity_spread"] = m.similarity_spread;
  json shares = json::array();
  for (int d = 0; d < m.treatments(); ++d) {
    json row = json::array();
    for (int z = 0; z < m.treatments(); ++z)
      row.push_back(m.share(d, z));
    shares.push_back(row);
  }
  j["shares"] = shares;
  return j;
}

json to_json(const ClassReport& r)
{
  return json{ { "min_eigenvalue", number(r.min_eigenvalue) },
               { "max_eigenvalue", number(r.max_eigenvalue) },
               { "max_asymmetry", number(r.max_asymmetry) },
               { "pass", r.pass } };
}

json to_json(const CycleReport& r)
{
  return json{ { "cycles", r.cycles },
               { "min_sum", number(r.min_sum) },
               { "min_nondegenerate_sum", number(r.min_nondegenerate_sum) },
               { "strict", r.strict } };
}

json to_json(const BijectivityReport& r)
{
  return json{ { "nodes", r.nodes },
               { "max_round_trip", number(r.max_round_trip) },
               { "min_image_distance", number(r.min_image_distance) },
               { "failed_inversions", r.failed_inversions },
               { "injective", r.injective },
               { "pass", r.pass } };
}

json to_json(const ConditionReport& r)
{
  json j{ { "condition", r.condition },
          { "margin", number(r.margin) },
          { "pass", r.pass },
          { "resolution", r.resolution },
          { "provenance", r.provenance },
          { "checked", r.checked },
          { "skipped", r.skipped } };
  if (r.y0.size())
    j["minimizer"] = json{ { "y0", to_json(r.y0) }, { "y1", to_json(r.y1) } };
  if (r.u.size())
    j["minimizer"] = json{ { "u", to_json(r.u) } };
  if (r.relabeled)
    j["relabeled"] = true;
  return j;
}

json to_json(const QuadraticFormResult& r)
{
  return json{ { "exact_min", number(r.exact_min) },
               { "sampled_min", number(r.sampled_min) },
               { "sampled_argmin", to_json(r.sampled_argmin) } };
}

json to_json(const SupportSet& s)
{
  json cells = json::array();
  for (int c : s.cells)
    cells.push_back(c);
  json hull = json::array();
  for (const auto& v : s.hull)
    hull.push_back(json::array({ v(0), v(1) }));
  return json{ { "lower", to_json(s.lower) },
               { "upper", to_json(s.upper) },
               { "resolution", s.resolution },
               { "threshold", number(s.threshold) },
               { "cell_count", s.cells.size() },
               { "cells", cells },
               { "cell_lower", to_json(s.cell_lower) },
               { "cell_upper", to_json(s.cell_upper) },
               { "hull", hull } };
}

json to_json(const ProbeResult& r)
{
  json vals = json::array();
  for (double v : r.values)
    vals.push_back(number(v));
  return json{ { "min", number(r.min_value) }, { "argmin", r.argmin }, { "values", vals } };
}

json to_json(const UniquenessTable& t)
{
  json rows = json::array();
  for (const auto& row : t.residual) {
    json r = json::array();
    for (double v : row)
      r.push_back(number(v));
    rows.push_back(r);
  }
  json skipped = json::array();
  for (auto [k, r] : t.skipped)
    skipped.push_back(json::array({ k, r }));
  json slopes = json::array();
  for (double s : t.slopes)
    slopes.push_back(number(s));
  return json{ { "radii", t.radii },
               { "residual", rows },
               { "skipped", skipped },
               { "slopes", slopes },
               { "envelope", number(t.envelope) },
               { "min_doubling", number(t.min_doubling) },
               { "max_doubling", number(t.max_doubling) } };
}

json to_json(const FitResult& r)
{
  json theta = json::array();
  for (const auto& v : r.theta)
    theta.push_back(to_json(v));
  json roots = json::array();
  for (const auto& c : r.roots) {
    json t = json::array();
    for (const auto& v : c.theta)
      t.push_back(to_json(v));
    roots.push_back(json{ { "theta", t },
                          { "residual", number(c.residual) },
                          { "map_distance", c.map_distance ? number(*c.map_distance) : json(nullptr) } });
  }
  return json{ { "theta", theta },
               { "residuals", to_json(r.residuals) },
               { "objective", number(r.objective) },
               { "map_distance", r.map_distance ? number(*r.map_distance) : json(nullptr) },
               { "iterations", r.iterations },
               { "converged", r.converged },
               { "stop_reason", r.stop_reason },
               { "mode", r.mode },
               { "roots", roots } };
}

json to_json(const RecoveryReport& r)
{
  json supports = json::array();
  for (const auto& s : r.supports)
    supports.push_back(json{ { "cell_count", s.cells.size() },
                             { "cell_lower", to_json(s.cell_lower) },
                             { "cell_upper", to_json(s.cell_upper) } });
  json j{ { "provenance", r.provenance },
          { "family", r.family },
          { "supports", supports },
          { "correlation_condition", r.condition12 ? to_json(*r.condition12) : json(nullptr) },
          { "full_rank_probe", r.probe ? json{ { "min", number(r.probe->min_value) },
                                               { "directions", r.probe->values.size() } }
                                       : json(nullptr) },
          { "start_distance", number(r.start_distance) },
          { "fit", to_json(r.fit) },
          { "map_error", number(r.map_error) },
          { "recovered", r.recovered },
          { "negative_control", r.negative_control } };
  if (r.negative_control) {
    j["map_error_tight"] = r.map_error_tight ? number(*r.map_error_tight) : json(nullptr);
    j["status"] = r.expected_failure ? "expected-failure" : "unexpected-recovery";
  } else {
    j["status"] = r.recovered ? "recovered" : "not-recovered";
  }
  return j;
}

json to_json(const RankViolationReport& r)
{
  return json{ { "component", r.component },
               { "n", r.n },
               { "alpha", r.alpha },
               { "ks", r.ks },
               { "critical", r.critical },
               { "cell_sizes", r.cell_sizes },
               { "max_ks", number(r.max_ks) },
               { "corr_rank_z", number(r.corr_rank_z) },
               { "violation", r.violation } };
}

json to_json(const TangentDirection& h)
{
  json fields = json::array();
  for (const auto& f : h.fields) {
    json jf{ { "kind", f->describe() } };
    if (auto p = std::dynamic_pointer_cast<const PinnedField>(f)) {
      const ScalarPotential& psi = p->psi();
      jf["B"] = to_json(psi.B);
      jf["g"] = to_json(psi.g);
      if (psi.plus)
        jf["plus"] = to_json(*psi.plus);
      if (psi.minus)
        jf["minus"] = to_json(*psi.minus);
    }
    fields.push_back(jf);
  }
  return json{ { "scale", h.scale }, { "alpha", h.alpha }, { "fields", fields } };
}

void write_json(const std::string& path, const json& j)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::io_error, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return json::parse(ss.str());
}

void write_iteration_log_csv(const std::string& path, const FitResult& r)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::io_error, "cannot write " + path);
  out << std::setprecision(17) << "iteration";
  const int nz = r.log.empty() ? 0 : static_cast<int>(r.log[0].residuals.size());
  for (int z = 0; z < nz; ++z)
    out << ",residual_z" << z;
  out << ",hash\n";
  for (const auto& e : r.log) {
    out << e.iteration;
    for (int z = 0; z < nz; ++z)
      out << ',' << e.residuals(z);
    out << ',' << std::hex << e.hash << std::dec << '\n';
  }
}

} // namespace ivmqr::io
