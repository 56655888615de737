#include "ivmqr/config.hpp"

#include "ivmqr/error.hpp"
#include "ivmqr/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ivmqr {

using json = nlohmann::ordered_json;

namespace {

// Error tied to a config key, so the loader can point at its line.
class KeyError : public Error
{
public:
  KeyError(std::string key, const std::string& what)
    : Error(ErrorKind::invalid_config, key + ": " + what)
    , key_(std::move(key))
    , message_(what)
  {}
  const std::string& key() const { return key_; }
  std::string diagnostic() const { return key_ + ": " + message_; }

private:
  std::string key_;
  std::string message_;
};

std::string leaf(const std::string& key)
{
  const auto dot = key.rfind('.');
  return dot == std::string::npos ? key : key.substr(dot + 1);
}

// 1-based line of the first occurrence of "key" in the text, 0 if absent.
int locate(const std::string& text, const std::string& key)
{
  const std::string quoted = "\"" + leaf(key) + "\"";
  const auto pos = text.find(quoted);
  if (pos == std::string::npos)
    return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
}

int line_of_offset(const std::string& text, std::size_t offset)
{
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
}

const char* type_name(const json& j)
{
  if (j.is_null())
    return "null";
  if (j.is_boolean())
    return "boolean";
  if (j.is_number())
    return "number";
  if (j.is_string())
    return "string";
  if (j.is_array())
    return "array";
  return "object";
}

bool same_kind(const json& def, const json& val)
{
  if (def.is_null())
    return true;
  if (def.is_number())
    return val.is_number();
  return std::string(type_name(def)) == type_name(val);
}

// Overlays `user` on `defaults`; rejects unknown keys and type changes.
void merge(json& target, const json& user, const std::string& prefix)
{
  if (!user.is_object())
    throw KeyError(prefix.empty() ? "config" : prefix, "expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!target.contains(it.key()))
      throw KeyError(key, "unknown key");
    json& slot = target[it.key()];
    if (slot.is_object() && !slot.empty()) {
      merge(slot, it.value(), key);
      continue;
    }
    if (!same_kind(slot, it.value()) && !it.value().is_null())
      throw KeyError(key, std::string("expected ") + type_name(slot) + ", got " + type_name(it.value()));
    slot = it.value();
  }
}

double number_in(const json& sec, const std::string& key, const std::string& name, double lo, double hi)
{
  const json& v = sec.at(key);
  if (!v.is_number())
    throw KeyError(name, "expected a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi))
    throw KeyError(name, "value out of range");
  return x;
}

Mat matrix(const json& sec, const std::string& key, const std::string& name, int p)
{
  try {
    Mat m = io::mat_from_json(sec.at(key));
    if (m.rows() != p || m.cols() != p)
      throw KeyError(name, "expected a " + std::to_string(p) + "x" + std::to_string(p) + " matrix");
    return m;
  } catch (const KeyError&) {
    throw;
  } catch (const std::exception& e) {
    throw KeyError(name, e.what());
  }
}

Vec vector(const json& sec, const std::string& key, const std::string& name, int p)
{
  try {
    Vec v = io::vec_from_json(sec.at(key));
    if (p > 0 && v.size() != p)
      throw KeyError(name, "expected " + std::to_string(p) + " entries");
    return v;
  } catch (const KeyError&) {
    throw;
  } catch (const std::exception& e) {
    throw KeyError(name, e.what());
  }
}

void validate_sections(const json& c)
{
  if (c.at("schema_version") != 1)
    throw KeyError("schema_version", "only schema version 1 is supported");
  if (!c.at("n").is_number_integer() || c.at("n").get<long>() < 1)
    throw KeyError("n", "expected a positive integer");
  const json& seed = c.at("seed");
  if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<long long>() < 0))
    throw KeyError("seed", "expected a non-negative integer");
  const json& g = c.at("grid");
  for (const char* k : { "resolution", "pair_resolution", "support_resolution" })
    if (!g.at(k).is_number_integer() || g.at(k).get<int>() < 1)
      throw KeyError(std::string("grid.") + k, "expected a positive integer");
  const json& lam = c.at("lambda");
  const double lo = number_in(lam, "lower", "lambda.lower", 0.0, 1e300);
  const double hi = number_in(lam, "upper", "lambda.upper", 0.0, 1e300);
  if (!(lo > 0 && lo < hi))
    throw KeyError("lambda.upper", "need 0 < lower < upper");
  number_in(c, "K", "K", 1e-300, 1e300);
  const std::string src = c.at("fields").at("source").get<std::string>();
  if (src != "exact" && src != "kernel")
    throw KeyError("fields.source", "expected \"exact\" or \"kernel\"");
  const json& bw = c.at("fields").at("bandwidth");
  if (!bw.is_null() && !(bw.is_number() && bw.get<double>() > 0))
    throw KeyError("fields.bandwidth", "expected a positive number or null");
  const json& fit = c.at("fit");
  const json& fam = fit.at("family");
  if (!fam.is_null()) {
    const std::string f = fam.get<std::string>();
    if (f != "affine" && f != "logit" && f != "affine-cosine" && f != "smooth-max")
      throw KeyError("fit.family", "unknown family '" + f + "'");
  }
  const std::string mode = fit.at("mode").get<std::string>();
  if (mode != "auto" && mode != "node" && mode != "cell")
    throw KeyError("fit.mode", "expected \"auto\", \"node\" or \"cell\"");
  number_in(fit, "perturbation", "fit.perturbation", 0.0, 1.0);
  if (c.at("linearize").at("eps").size() != 2)
    throw KeyError("linearize.eps", "expected two step sizes");
  if (c.at("linearize").at("piola_steps").size() != 2)
    throw KeyError("linearize.piola_steps", "expected two step sizes");
  if (c.at("probe_rank").at("radii").empty())
    throw KeyError("probe_rank.radii", "expected at least one radius");
  if (c.at("probe_rank").at("doubling").size() != 2)
    throw KeyError("probe_rank.doubling", "expected [low, high]");
  number_in(c.at("demo_rank_violation"), "alpha", "demo_rank_violation.alpha", 1e-12, 0.5);
  const json& sets = c.at("verify_implication").at("sets");
  if (!sets.is_null()) {
    if (!sets.is_array() || sets.empty())
      throw KeyError("sets", "expected a non-empty array of sets or null");
    for (const auto& b : sets) {
      const bool box = b.is_object() && b.size() == 2 && b.contains("lower") && b.contains("upper");
      const bool cut = b.is_object() && b.size() == 2 && b.contains("normal") && b.contains("offset") &&
                       b.at("offset").is_number();
      if (!box && !cut)
        throw KeyError("sets", "each set is {\"lower\", \"upper\"} or {\"normal\", \"offset\"}");
    }
  }
}

} // namespace

std::string ExperimentConfig::data_path() const
{
  const json& d = resolved.at("data");
  if (d.is_null())
    return {};
  std::filesystem::path p(d.get<std::string>());
  if (p.is_relative() && !path.empty() && path != "<config>")
    p = std::filesystem::path(path).parent_path() / p;
  return p.string();
}

json default_config()
{
  return json{
    { "schema_version", 1 },
    { "model", json{ { "kind", "example1" } } },
    { "data", nullptr },
    { "n", 100000 },
    { "seed", std::uint64_t{ 1 } },
    { "grid", { { "resolution", 40 }, { "pair_resolution", 50 }, { "support_resolution", 50 },
                { "support_threshold", nullptr } } },
    { "lambda", { { "lower", 0.25 }, { "upper", 4.0 } } },
    { "K", 10.0 },
    { "fields", { { "source", "exact" }, { "bandwidth", nullptr } } },
    { "simulate", { { "keep_latent", false } } },
    { "verify_implication",
      { { "boxes", 8 }, { "cuts", 4 }, { "sets_seed", 7 }, { "sigmas", 3.0 }, { "sets", nullptr } } },
    { "check_identification",
      { { "form_points", 100 }, { "form_samples", 64 }, { "b", nullptr }, { "conormal_resolution", 41 } } },
    { "linearize",
      { { "directions", 20 }, { "eps", { 1e-2, 1e-3 } }, { "piola_steps", { 1e-2, 5e-3 } },
        { "min_gap_ratio", 5.0 } } },
    { "probe_rank",
      { { "directions", 200 }, { "radii", { 1e-3, 2e-3, 4e-3 } }, { "swap", false },
        { "doubling", { 1.8, 2.2 } } } },
    { "fit",
      { { "family", nullptr }, { "perturbation", 0.05 }, { "max_iterations", 100 },
        { "tolerance", 1e-8 }, { "mode", "auto" } } },
    { "recover", { { "negative_control", false }, { "threshold", 1e-3 }, { "probe_directions", 20 } } },
    { "demo_rank_violation", { { "component", 0 }, { "alpha", 0.01 } } },
  };
}

json model_defaults(const std::string& kind)
{
  const json I = { { 1.0, 0.0 }, { 0.0, 1.0 } };
  if (kind == "example1")
    return json{ { "kind", kind },
                 { "compliance", 0.9 },
                 { "instrument_law", { 0.5, 0.5 } },
                 { "A0", I },
                 { "A1", { { 1.0, 0.0 }, { 0.0, 2.0 } } },
                 { "b0", { 0.0, 0.0 } },
                 { "b1", { 0.0, 0.0 } },
                 { "rank_coupling", "invariance" },
                 { "similarity_spread", 0.1 } };
  if (kind == "example2")
    return json{ { "kind", kind },
                 { "compliance", 0.9 },
                 { "instrument_law", { 0.5, 0.5 } },
                 { "mean0", { 0.0, 0.0 } },
                 { "mean1", { 0.5, -0.5 } },
                 { "outside_option", true },
                 { "rank_coupling", "invariance" },
                 { "similarity_spread", 0.1 } };
  if (kind == "rank-violation")
    return json{ { "kind", kind }, { "q1", "regularized-diagonal" } };
  if (kind == "custom")
    return json{ { "kind", kind },
                 { "measure", "uniform" },
                 { "maps", json::array() },
                 { "compliance", 0.9 },
                 { "instrument_law", { 0.5, 0.5 } },
                 { "rank_coupling", "invariance" },
                 { "similarity_spread", 0.1 } };
  throw KeyError("model.kind",
                 "unknown model kind '" + kind + "' (example1, example2, rank-violation, custom)");
}

StructuralModel build_model(const json& m)
{
  const std::string kind = m.at("kind").get<std::string>();
  auto finish = [&](StructuralModel model) {
    if (m.contains("rank_coupling")) {
      const std::string rc = m.at("rank_coupling").get<std::string>();
      if (rc != "invariance" && rc != "similarity")
        throw KeyError("model.rank_coupling", "expected \"invariance\" or \"similarity\"");
      model.rank = rc == "invariance" ? RankCoupling::invariance : RankCoupling::similarity;
      model.similarity_spread =
        number_in(m, "similarity_spread", "model.similarity_spread", 0.0, 1.0);
    }
    return model;
  };
  auto law = [&]() {
    Vec l = vector(m, "instrument_law", "model.instrument_law", 2);
    if ((l.array() < 0).any() || std::abs(l.sum() - 1.0) > 1e-12)
      throw KeyError("model.instrument_law", "expected probabilities summing to one");
    return l;
  };
  try {
    if (kind == "example1") {
      const double c = number_in(m, "compliance", "model.compliance", 0.0, 1.0);
      return finish(example1_model(matrix(m, "A0", "model.A0", 2),
                                   matrix(m, "A1", "model.A1", 2),
                                   vector(m, "b0", "model.b0", 2),
                                   vector(m, "b1", "model.b1", 2),
                                   c,
                                   law()));
    }
    if (kind == "example2") {
      const double c = number_in(m, "compliance", "model.compliance", 0.0, 1.0);
      const Vec m0 = vector(m, "mean0", "model.mean0", 0);
      const Vec m1 = vector(m, "mean1", "model.mean1", m0.size());
      return finish(example2_model(m0, m1, m.at("outside_option").get<bool>(), c, law()));
    }
    if (kind == "rank-violation") {
      const json& q1 = m.at("q1");
      if (q1.is_string()) {
        const std::string name = q1.get<std::string>();
        if (name == "regularized-diagonal")
          return rank_violation_model(regularized_diagonal_map());
        if (name == "identity")
          return rank_violation_model(QuantileMap(ConvexPotential::quadratic(
            ReferenceDomain::cube(2), Mat::Identity(2, 2), Vec::Zero(2))));
        throw KeyError("model.q1", "expected \"regularized-diagonal\", \"identity\" or a potential");
      }
      return rank_violation_model(QuantileMap(io::potential_from_json(q1)));
    }
    if (kind == "custom") {
      const json& maps = m.at("maps");
      if (maps.size() != 2)
        throw KeyError("model.maps", "expected one potential per treatment (two)");
      std::vector<QuantileMap> qs;
      for (const auto& jm : maps)
        qs.emplace_back(io::potential_from_json(jm));
      const ReferenceDomain dom = qs[0].domain();
      if (!(qs[1].domain() == dom))
        throw KeyError("model.maps", "maps must share one domain");
      const std::string meas = m.at("measure").get<std::string>();
      if (meas != "uniform")
        throw KeyError("model.measure", "only \"uniform\" is supported");
      const double c = number_in(m, "compliance", "model.compliance", 0.0, 1.0);
      StructuralModel model(ReferenceMeasure(dom), std::move(qs), law(), TreatmentRule::compliance(c));
      return finish(std::move(model));
    }
  } catch (const KeyError&) {
    throw;
  } catch (const Error& e) {
    throw KeyError("model", e.what());
  } catch (const std::exception& e) {
    throw KeyError("model", e.what());
  }
  throw KeyError("model.kind", "unknown model kind '" + kind + "'");
}

ExperimentConfig parse_config(const std::string& text,
                              const std::string& path,
                              std::optional<std::uint64_t> seed_override)
{
  json user;
  try {
    user = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::invalid_config,
                path + ":" + std::to_string(line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0)) +
                  ": malformed JSON (" + e.what() + ")");
  }
  try {
    if (!user.is_object())
      throw KeyError("config", "expected a JSON object");
    if (!user.contains("schema_version"))
      throw KeyError("schema_version", "missing schema_version");
    json resolved = default_config();
    std::string kind = "example1";
    if (user.contains("model")) {
      const json& um = user.at("model");
      if (!um.is_object())
        throw KeyError("model", "expected an object");
      if (um.contains("kind")) {
        if (!um.at("kind").is_string())
          throw KeyError("model.kind", "expected a string");
        kind = um.at("kind").get<std::string>();
      }
    }
    resolved["model"] = model_defaults(kind);
    // the model's own maps/potentials are free-form documents
    json user_model = user.contains("model") ? user.at("model") : json::object();
    json free_maps;
    if (user_model.contains("maps")) {
      free_maps = user_model.at("maps");
      user_model.erase("maps");
    }
    json user_rest = user;
    user_rest.erase("model");
    merge(resolved, user_rest, "");
    merge(resolved["model"], user_model, "model");
    if (!free_maps.is_null()) {
      if (!resolved["model"].contains("maps"))
        throw KeyError("model.maps", "unknown key");
      resolved["model"]["maps"] = free_maps;
    }
    if (seed_override)
      resolved["seed"] = *seed_override;
    validate_sections(resolved);
    build_model(resolved.at("model"));

    ExperimentConfig cfg;
    cfg.resolved = std::move(resolved);
    cfg.path = path;
    cfg.seed = cfg.resolved.at("seed").get<std::uint64_t>();
    return cfg;
  } catch (const KeyError& e) {
    const int line = std::max(1, locate(text, e.key()));
    throw Error(ErrorKind::invalid_config, path + ":" + std::to_string(line) + ": " + e.diagnostic());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_config, path + ":1: " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::io_error, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path, seed_override);
}

} // namespace ivmqr
