#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lineagelab/error.hpp"
#include "lineagelab/model.hpp"
#include "lineagelab/operators.hpp"

namespace lineagelab {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration, one section per experiment.
// ---------------------------------------------------------------------------

struct SolverSection {
  MutationMode mode = MutationMode::Nonlocal;
  double tol = 1e-10;
  std::size_t max_iter = 20000;
};

/// Slice fractions v0 = 1[cut_k, cut_k+1) F. Empty cuts split at the dominant trait.
struct FractionsSection {
  std::vector<double> cuts;
  double t_end = 0.0;             // 0 = adaptive
  double t_max = 500.0;
  double dt = 0.0;
  std::size_t snapshots = 10;
};

/// A trait position, either a number or the dominant trait.
struct TraitChoice {
  bool dominant = true;
  double value = 0.0;
};

struct AncestralSection {
  TraitChoice z0;
  double s_end = 40.0;
  double ds = 0.5;
  std::size_t n_paths = 10000;    // 0 disables Monte Carlo
  std::string mc = "chain";       // chain | sde
  double dt = 0.0;
};

struct HJSection {
  TraitChoice z0;
  double s_end = 5.0;
  double ds = 0.0;
  std::string profile = "hj";     // hj | F
};

struct IBMSection {
  std::size_t N = 20000;
  std::string competition = "literal";  // literal (strength 1) | matched (beta - mu0)
  double dt = 0.0;
  double t_burn = 50.0;
  double t_record = 50.0;
  double snapshot_interval = 1.0;
  std::size_t replicates = 1;
  TraitChoice sample_at;
  std::size_t sample_count = 0;
  std::size_t max_pairs = 500;
  std::size_t initial_size = 0;
  double s_end = 30.0;
  double ds = 0.5;
};

struct CompareSection {
  double s_end = 30.0;
  double ds = 0.5;
};

struct RunConfig {
  ModelParams model;
  Grid grid{-3.0, 3.0, 1201};
  SolverSection solver;
  FractionsSection fractions;
  AncestralSection ancestral;
  HJSection hj;
  IBMSection ibm;
  CompareSection compare;
  std::uint64_t seed = 1;
};

// ---------------------------------------------------------------------------
// Strict JSON reading: unknown keys and wrong types are rejected by name.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string join_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : obj_.items()) {
      bool known = false;
      for (const char* a : keys) known = known || k == a;
      if (!known) throw ConfigError(join_key(path_, k), "unknown key");
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  Reader section(const std::string& key) const {
    static const Json empty = Json::object();
    return Reader(has(key) ? obj_.at(key) : empty, join_key(path_, key));
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    const Json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number()) throw ConfigError(join_key(path_, key), "expected a number");
    return v->get<double>();
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) const {
    const Json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
      throw ConfigError(join_key(path_, key), "expected a non-negative integer");
    }
    return v->get<std::size_t>();
  }

  bool flag(const std::string& key, bool fallback) const {
    const Json* v = find(key, true);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(join_key(path_, key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, std::optional<std::string> fallback,
                   std::initializer_list<const char*> choices) const {
    const Json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_string()) throw ConfigError(join_key(path_, key), "expected a string");
    const auto s = v->get<std::string>();
    for (const char* c : choices) {
      if (s == c) return s;
    }
    throw ConfigError(join_key(path_, key), "unsupported value '" + s + "'");
  }

  std::vector<double> numbers(const std::string& key) const {
    const Json* v = find(key, true);
    if (!v) return {};
    if (!v->is_array()) throw ConfigError(join_key(path_, key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number()) throw ConfigError(join_key(path_, key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  TraitChoice trait(const std::string& key) const {
    const Json* v = find(key, true);
    if (!v) return {};
    if (v->is_string() && v->get<std::string>() == "dominant") return {};
    if (v->is_number()) return {false, v->get<double>()};
    throw ConfigError(join_key(path_, key), "expected a number or \"dominant\"");
  }

 private:
  const Json* find(const std::string& key, bool optional) const {
    if (obj_.contains(key)) return &obj_.at(key);
    if (!optional) throw ConfigError(join_key(path_, key), "missing required key");
    return nullptr;
  }

  const Json& obj_;
  std::string path_;
};

inline void positive(double v, const std::string& key) {
  if (!(v > 0.0)) throw ConfigError(key, "must be positive");
}

inline void non_negative(double v, const std::string& key) {
  if (!(v >= 0.0)) throw ConfigError(key, "must be non-negative");
}

}  // namespace detail

inline ModelParams parse_model(const Json& root) {
  const detail::Reader top(root, "");
  const auto m = top.section("model");
  if (!top.has("model")) throw ConfigError("model", "missing required key");
  m.allow({"beta", "mu0", "selection", "kernel", "sigma", "c", "upwind_correction"});
  ModelParams p;
  p.beta = m.number("beta");
  p.mu0 = m.number("mu0", 1.0);
  p.sigma = m.number("sigma");
  p.c = m.number("c");
  p.upwind_correction = m.flag("upwind_correction", true);
  detail::positive(p.beta, "model.beta");
  detail::positive(p.sigma, "model.sigma");
  detail::non_negative(p.mu0, "model.mu0");

  if (!m.has("selection")) throw ConfigError("model.selection", "missing required key");
  const auto s = m.section("selection");
  const auto kind = s.text("kind", std::nullopt, {"quadratic", "power", "cosh_minus_one"});
  if (kind == "quadratic") {
    s.allow({"kind", "alpha"});
    p.selection = SelectionSpec::quadratic(s.number("alpha"));
    detail::positive(p.selection.alpha, "model.selection.alpha");
  } else if (kind == "power") {
    s.allow({"kind", "q"});
    const std::size_t q = s.count("q");
    if (q < 2 || q % 2 != 0) throw ConfigError("model.selection.q", "exponent must be an even integer >= 2");
    p.selection = SelectionSpec::power(static_cast<int>(q));
  } else {
    s.allow({"kind", "scale"});
    p.selection = SelectionSpec::cosh_minus_one(s.number("scale"));
    detail::positive(p.selection.scale, "model.selection.scale");
  }

  if (!m.has("kernel")) throw ConfigError("model.kernel", "missing required key");
  const auto k = m.section("kernel");
  k.allow({"kind"});
  p.kernel = k.text("kind", std::nullopt, {"gaussian", "uniform"}) == "gaussian" ? KernelSpec::gaussian()
                                                                                : KernelSpec::uniform();
  return p;
}

inline RunConfig parse_config(const Json& root) {
  const detail::Reader top(root, "");
  top.allow({"model", "grid", "solver", "fractions", "ancestral", "hj", "ibm", "compare", "seed"});
  RunConfig cfg;
  cfg.model = parse_model(root);
  cfg.seed = top.count("seed", 1);

  const auto g = top.section("grid");
  g.allow({"z_min", "z_max", "n"});
  cfg.grid = Grid(g.number("z_min", -3.0), g.number("z_max", 3.0), g.count("n", 1201));

  const auto s = top.section("solver");
  s.allow({"mode", "tol", "max_iter"});
  cfg.solver.mode = s.text("mode", "nonlocal", {"nonlocal", "diffusive"}) == "nonlocal" ? MutationMode::Nonlocal
                                                                                       : MutationMode::Diffusive;
  cfg.solver.tol = s.number("tol", 1e-10);
  cfg.solver.max_iter = s.count("max_iter", 20000);
  detail::positive(cfg.solver.tol, "solver.tol");

  const auto f = top.section("fractions");
  f.allow({"cuts", "t_end", "t_max", "dt", "snapshots"});
  cfg.fractions.cuts = f.numbers("cuts");
  cfg.fractions.t_end = f.number("t_end", 0.0);
  cfg.fractions.t_max = f.number("t_max", 500.0);
  cfg.fractions.dt = f.number("dt", 0.0);
  cfg.fractions.snapshots = f.count("snapshots", 10);
  detail::non_negative(cfg.fractions.t_end, "fractions.t_end");
  detail::positive(cfg.fractions.t_max, "fractions.t_max");
  detail::non_negative(cfg.fractions.dt, "fractions.dt");

  const auto a = top.section("ancestral");
  a.allow({"z0", "s_end", "ds", "n_paths", "mc", "dt"});
  cfg.ancestral.z0 = a.trait("z0");
  cfg.ancestral.s_end = a.number("s_end", 40.0);
  cfg.ancestral.ds = a.number("ds", 0.5);
  cfg.ancestral.n_paths = a.count("n_paths", 10000);
  cfg.ancestral.mc = a.text("mc", "chain", {"chain", "sde"});
  cfg.ancestral.dt = a.number("dt", 0.0);
  detail::positive(cfg.ancestral.s_end, "ancestral.s_end");
  detail::positive(cfg.ancestral.ds, "ancestral.ds");
  detail::non_negative(cfg.ancestral.dt, "ancestral.dt");

  const auto h = top.section("hj");
  h.allow({"z0", "s_end", "ds", "profile"});
  cfg.hj.z0 = h.trait("z0");
  cfg.hj.s_end = h.number("s_end", 5.0);
  cfg.hj.ds = h.number("ds", 0.0);
  cfg.hj.profile = h.text("profile", "hj", {"hj", "F"});
  detail::positive(cfg.hj.s_end, "hj.s_end");
  detail::non_negative(cfg.hj.ds, "hj.ds");

  const auto i = top.section("ibm");
  i.allow({"N", "competition", "dt", "t_burn", "t_record", "snapshot_interval", "replicates", "sample",
           "max_pairs", "initial_size", "s_end", "ds"});
  cfg.ibm.N = i.count("N", 20000);
  cfg.ibm.competition = i.text("competition", "literal", {"literal", "matched"});
  cfg.ibm.dt = i.number("dt", 0.0);
  cfg.ibm.t_burn = i.number("t_burn", 50.0);
  cfg.ibm.t_record = i.number("t_record", 50.0);
  cfg.ibm.snapshot_interval = i.number("snapshot_interval", 1.0);
  cfg.ibm.replicates = i.count("replicates", 1);
  cfg.ibm.max_pairs = i.count("max_pairs", 500);
  cfg.ibm.initial_size = i.count("initial_size", 0);
  cfg.ibm.s_end = i.number("s_end", 30.0);
  cfg.ibm.ds = i.number("ds", 0.5);
  const auto smp = i.section("sample");
  smp.allow({"at", "count"});
  cfg.ibm.sample_at = smp.trait("at");
  cfg.ibm.sample_count = smp.count("count", 0);
  detail::non_negative(cfg.ibm.dt, "ibm.dt");
  detail::positive(cfg.ibm.s_end, "ibm.s_end");
  detail::positive(cfg.ibm.ds, "ibm.ds");

  const auto c = top.section("compare");
  c.allow({"s_end", "ds"});
  cfg.compare.s_end = c.number("s_end", 30.0);
  cfg.compare.ds = c.number("ds", 0.5);
  detail::positive(cfg.compare.s_end, "compare.s_end");
  detail::positive(cfg.compare.ds, "compare.ds");

  const auto report = validate(cfg.model);
  if (!report.ok()) {
    std::string msg;
    for (const auto& f : report.failures()) msg += (msg.empty() ? "" : "; ") + f;
    throw ConfigError("model", msg);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Overrides and file loading.
// ---------------------------------------------------------------------------

/// Applies `key=value` with a dotted key. The value is read as JSON when it
/// parses, otherwise as a plain string.
inline void apply_override(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty component in override key");
    if (!node->is_object()) throw ConfigError(key, "override descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config", "cannot parse JSON in " + origin);
  return j;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace lineagelab
