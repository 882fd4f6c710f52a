#pragma once

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "voldev/io.hpp"
#include "voldev/mc_verify.hpp"
#include "voldev/models.hpp"

namespace voldev {

using Json = nlohmann::json;

// Strict JSON reader: every lookup carries its dotted path so errors name the
// offending entry, and unknown keys are rejected.
class ConfigNode {
 public:
  ConfigNode(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : j_.items()) {
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) throw ConfigError(at(k) + ": unknown key");
    }
  }

  ConfigNode child(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key) + ": missing");
    return ConfigNode(j_.at(key), at(key));
  }
  std::optional<ConfigNode> optional_child(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return child(key);
  }

  double number(const std::string& key) const { return number_at(value(key), at(key)); }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  // Also accepts the strings "inf" and "-inf".
  double extended_number(const std::string& key) const {
    const Json& v = value(key);
    if (v.is_string()) {
      if (v == "inf") return INFINITY;
      if (v == "-inf") return -INFINITY;
      throw ConfigError(at(key) + ": expected a number, \"inf\" or \"-inf\"");
    }
    return number_at(v, at(key));
  }

  std::size_t count(const std::string& key) const {
    const Json& v = value(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(at(key) + ": expected a nonnegative integer");
    return v.get<std::size_t>();
  }
  std::size_t count(const std::string& key, std::size_t fallback) const { return has(key) ? count(key) : fallback; }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const Json& v = value(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(at(key) + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Json& v = value(key);
    if (!v.is_boolean()) throw ConfigError(at(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) const {
    const Json& v = value(key);
    if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) const {
    const Json& v = value(key);
    if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number_at(v[i], at(key) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? numbers(key) : fallback;
  }

  const Json& raw(const std::string& key) const { return value(key); }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& value(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key) + ": missing");
    return j_.at(key);
  }
  static double number_at(const Json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    return v.get<double>();
  }

  const Json& j_;
  std::string path_;
};

namespace detail {

// Library domain errors raised while building config objects become config errors.
template <class F>
auto as_config(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace detail

inline KernelSpec parse_kernel(const ConfigNode& n) {
  const std::string kind = n.string("kind");
  return detail::as_config(n.path(), [&]() -> KernelSpec {
    if (kind == "constant") {
      n.allow({"kind", "value"});
      return KernelSpec::constant(n.number("value", 1.0));
    }
    if (kind == "power_law") {
      n.allow({"kind", "hurst"});
      return KernelSpec::power_law(n.number("hurst"));
    }
    if (kind == "raw_power") {
      n.allow({"kind", "alpha"});
      return KernelSpec::raw_power(n.number("alpha"));
    }
    if (kind == "gamma") {
      n.allow({"kind", "hurst", "lambda"});
      return KernelSpec::gamma(n.number("hurst"), n.number("lambda"));
    }
    if (kind == "fbm") {
      n.allow({"kind", "hurst"});
      return KernelSpec::fbm(n.number("hurst"));
    }
    if (kind == "matrix") {
      n.allow({"kind", "dim", "entries"});
      const std::size_t dim = n.count("dim");
      const Json& e = n.raw("entries");
      if (!e.is_array()) n.fail("entries: expected an array of kernel records");
      std::vector<KernelSpec> entries;
      for (std::size_t i = 0; i < e.size(); ++i) {
        const std::string where = n.at("entries") + "[" + std::to_string(i) + "]";
        if (e[i].is_null())
          entries.push_back(KernelSpec::zero());
        else
          entries.push_back(parse_kernel(ConfigNode(e[i], where)));
      }
      return KernelSpec::matrix(dim, std::move(entries));
    }
    throw ConfigError(n.at("kind") + ": unknown kernel kind '" + kind +
                      "' (constant, power_law, raw_power, gamma, fbm, matrix)");
  });
}

inline ModelVariant parse_model(const ConfigNode& n) {
  const std::string type = n.string("type");
  if (type == "rough_stein_stein") {
    n.allow({"type", "kappa", "theta", "xi", "rho", "y0", "hurst"});
    RoughSteinStein m;
    m = {n.number("kappa", m.kappa), n.number("theta", m.theta), n.number("xi", m.xi),
         n.number("rho", m.rho),     n.number("y0", m.y0),       n.number("hurst", m.hurst)};
    return m;
  }
  if (type == "rough_bergomi") {
    n.allow({"type", "a", "rho", "y0", "hurst"});
    RoughBergomi m;
    m = {n.number("a", m.a), n.number("rho", m.rho), n.number("y0", m.y0), n.number("hurst", m.hurst)};
    return m;
  }
  if (type == "rough_heston") {
    n.allow({"type", "kappa", "theta", "xi", "rho", "y0", "hurst"});
    RoughHeston m;
    m = {n.number("kappa", m.kappa), n.number("theta", m.theta), n.number("xi", m.xi),
         n.number("rho", m.rho),     n.number("y0", m.y0),       n.number("hurst", m.hurst)};
    return m;
  }
  if (type == "multi_rough_bergomi") {
    n.allow({"type", "factors", "L", "a", "y0", "rho", "hurst"});
    MultiRoughBergomi m;
    m.factors = n.count("factors");
    m.L = n.numbers("L");
    m.a = n.numbers("a", std::vector<double>(m.factors, 0.0));
    m.y0 = n.numbers("y0", std::vector<double>(m.factors, 0.0));
    m.rho = n.numbers("rho", std::vector<double>(m.factors, 0.0));
    m.hurst = n.numbers("hurst");
    return m;
  }
  throw ConfigError(n.at("type") + ": unknown model '" + type +
                    "' (rough_stein_stein, rough_bergomi, rough_heston, multi_rough_bergomi)");
}

inline ScalingRegime parse_regime(const ConfigNode& n) {
  const std::string type = n.string("type");
  if (type == "small_time_ldp" || type == "tail_ldp") {
    n.allow({"type", "epsilon"});
    const double e = n.number("epsilon", 1.0);
    return type == "tail_ldp" ? ScalingRegime{TailLDP{e}} : ScalingRegime{SmallTimeLDP{e}};
  }
  if (type == "small_time_mdp" || type == "tail_mdp") {
    n.allow({"type", "epsilon", "beta"});
    const double e = n.number("epsilon", 1.0), b = n.number("beta");
    return type == "tail_mdp" ? ScalingRegime{TailMDP{e, b}} : ScalingRegime{SmallTimeMDP{e, b}};
  }
  throw ConfigError(n.at("type") + ": unknown regime '" + type +
                    "' (small_time_ldp, small_time_mdp, tail_ldp, tail_mdp)");
}

inline TimeGrid parse_grid(const ConfigNode& n) {
  n.allow({"T", "n_steps", "grading"});
  const double T = n.number("T", 1.0), q = n.number("grading", 1.0);
  const std::size_t steps = n.count("n_steps");
  return detail::as_config(n.path(), [&] { return TimeGrid::graded_to_horizon(T, steps, q); });
}

struct LimitBlock {
  std::vector<double> control;  // constant per noise component; empty = zero
  BranchPolicy branch = BranchPolicy::continue_positive;
};

struct SimulateBlock {
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
  std::vector<double> control;
  std::string format = "csv";
};

struct RateBlock {
  std::size_t n_steps = 512;
  double grading = 4.0;
  std::size_t checkpoints = 32;
  double delta = 1e-4;
};

struct SmileBlock {
  std::vector<double> maturities, strikes;
  std::size_t paths = 100000, n_steps = 32;
  std::uint64_t seed = 0;
};

struct ExperimentBlock {
  DeviationEvent event;
  std::vector<double> epsilons;
  std::size_t paths = 100000;
  std::uint64_t seed = 0;
  bool importance_sampling = false;
  std::optional<double> reference_rate;
};

struct RunConfig {
  Json raw;
  std::uint64_t hash = 0;
  std::optional<ModelSpec> model;
  std::optional<TimeGrid> grid;
  std::optional<KernelSpec> kernel;
  std::optional<LimitBlock> limit;
  std::optional<SimulateBlock> simulate;
  RateBlock rate;
  std::optional<SmileBlock> smile;
  std::optional<ExperimentBlock> experiment;
  std::optional<std::string> output;

  const ModelSpec& require_model() const {
    if (!model) throw ConfigError("model: missing");
    return *model;
  }
  const TimeGrid& require_grid() const {
    if (!grid) throw ConfigError("grid: missing");
    return *grid;
  }
};

inline RunConfig parse_config(const Json& j) {
  RunConfig c;
  c.raw = j;
  c.hash = fnv1a64(j.dump());  // object keys are sorted, so the dump is canonical
  ConfigNode root(j, "");
  root.allow({"description", "model", "regime", "grid", "kernel", "limit", "simulate", "rate", "smile",
              "experiment", "output"});
  if (root.has("description")) root.string("description");
  if (root.has("model")) {
    ModelSpec s;
    s.model = parse_model(root.child("model"));
    if (root.has("regime")) s.regime = parse_regime(root.child("regime"));
    detail::as_config("model", [&] {
      s.validate();
      return 0;
    });
    c.model = s;
  } else if (root.has("regime")) {
    throw ConfigError("regime: given without a model");
  }
  if (root.has("grid")) c.grid = parse_grid(root.child("grid"));
  if (root.has("kernel")) c.kernel = parse_kernel(root.child("kernel"));
  if (auto n = root.optional_child("limit")) {
    n->allow({"control", "branch"});
    LimitBlock b;
    b.control = n->numbers("control", {});
    const std::string br = n->string("branch", "continue_positive");
    if (br == "absorb_at_zero")
      b.branch = BranchPolicy::absorb_at_zero;
    else if (br != "continue_positive")
      throw ConfigError(n->at("branch") + ": expected continue_positive or absorb_at_zero");
    c.limit = b;
  }
  if (auto n = root.optional_child("simulate")) {
    n->allow({"paths", "seed", "control", "format"});
    SimulateBlock b;
    b.paths = n->count("paths", b.paths);
    b.seed = n->seed("seed", b.seed);
    b.control = n->numbers("control", {});
    b.format = n->string("format", b.format);
    if (b.format != "csv" && b.format != "binary") throw ConfigError(n->at("format") + ": expected csv or binary");
    c.simulate = b;
  }
  if (auto n = root.optional_child("rate")) {
    n->allow({"n_steps", "grading", "checkpoints", "delta"});
    c.rate.n_steps = n->count("n_steps", c.rate.n_steps);
    c.rate.grading = n->number("grading", c.rate.grading);
    c.rate.checkpoints = n->count("checkpoints", c.rate.checkpoints);
    c.rate.delta = n->number("delta", c.rate.delta);
  }
  if (auto n = root.optional_child("smile")) {
    n->allow({"maturities", "strikes", "paths", "seed", "n_steps"});
    SmileBlock b;
    b.maturities = n->numbers("maturities");
    b.strikes = n->numbers("strikes");
    b.paths = n->count("paths", b.paths);
    b.seed = n->seed("seed", b.seed);
    b.n_steps = n->count("n_steps", b.n_steps);
    c.smile = b;
  }
  if (auto n = root.optional_child("experiment")) {
    n->allow({"event", "epsilons", "paths", "seed", "importance_sampling", "reference_rate"});
    ExperimentBlock b;
    const ConfigNode ev = n->child("event");
    ev.allow({"component", "direction", "threshold", "time"});
    b.event.component = ev.count("component", 1);
    const std::string dir = ev.string("direction", ">=");
    if (dir == ">=")
      b.event.direction = Direction::ge;
    else if (dir == "<=")
      b.event.direction = Direction::le;
    else
      throw ConfigError(ev.at("direction") + ": expected \">=\" or \"<=\"");
    b.event.threshold = ev.extended_number("threshold");
    if (ev.has("time")) b.event.time = ev.number("time");
    b.epsilons = n->numbers("epsilons");
    b.paths = n->count("paths", b.paths);
    b.seed = n->seed("seed", b.seed);
    b.importance_sampling = n->flag("importance_sampling", false);
    if (n->has("reference_rate")) b.reference_rate = n->number("reference_rate");
    c.experiment = b;
  }
  if (root.has("output")) c.output = root.string("output");
  return c;
}

inline RunConfig load_config(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError(file + ": cannot open");
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ConfigError(file + ": " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(file + ": " + e.what());
  }
}

}  // namespace voldev
