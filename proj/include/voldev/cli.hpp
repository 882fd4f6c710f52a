#pragma once

#include <CLI11.hpp>

#include <iostream>
#include <memory>

#include "voldev/config.hpp"
#include "voldev/implied_vol.hpp"
#include "voldev/mc_verify.hpp"
#include "voldev/rate_functions.hpp"

namespace voldev::cli {

using OJson = nlohmann::ordered_json;

struct GlobalFlags {
  std::size_t threads = 0;
  bool deterministic = false;
};

// Writes to the named file, or to stdout for "" or "-".
class Sink {
 public:
  explicit Sink(const std::string& path, bool binary = false) {
    if (!path.empty() && path != "-") file_ = std::make_unique<std::ofstream>(open_output(path, binary));
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

inline OJson number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);  // JSON has no inf/nan literals
}

inline OJson header_json(const OutputHeader& h) {
  OJson j = OJson::object();
  for (const auto& [k, v] : h.fields()) j[k] = v;
  return j;
}

inline void write_json(const std::string& out, const OutputHeader& h, OJson body) {
  OJson j = OJson::object();
  j["header"] = header_json(h);
  for (auto& [k, v] : body.items()) j[k] = v;
  Sink s(out);
  s.stream() << j.dump(2) << "\n";
}

inline OutputHeader header(const std::string& command, const RunConfig& c, const GlobalFlags& g,
                           std::optional<std::uint64_t> seed = {}) {
  OutputHeader h;
  h.command = command;
  h.config_hash = c.hash;
  h.seed = seed;
  h.deterministic = g.deterministic;
  return h;
}

inline Control constant_control(const TimeGrid& g, std::size_t q, const std::vector<double>& values,
                                const std::string& where) {
  Control v(g, q);
  if (values.empty()) return v;
  if (values.size() != q)
    throw ConfigError(where + ": expected " + std::to_string(q) + " values (u, then one per vol factor)");
  for (std::size_t i = 0; i <= g.n_steps(); ++i)
    for (std::size_t c = 0; c < q; ++c) v(i, c) = values[c];
  return v;
}

inline std::vector<std::string> state_columns(const ModelSpec& m) {
  std::vector<std::string> c{"x"};
  if (m.vol_factors() == 1) {
    c.push_back("y");
  } else {
    for (std::size_t i = 1; i <= m.vol_factors(); ++i) c.push_back("y" + std::to_string(i));
  }
  return c;
}

// kernels: tabulates K on the grid with its L2 mass and regularity exponent.
inline int cmd_kernels(const std::string& cfg, const std::string& out, const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  if (!c.kernel) throw ConfigError(cfg + ": kernel: missing");
  const KernelSpec& k = *c.kernel;
  const TimeGrid grid = c.grid ? *c.grid : TimeGrid::uniform(1.0, 64);
  Sink s(out);
  OutputHeader h = header("kernels", c, g);
  h.extra = {{"kind", k.describe()}, {"gamma", format_double(k.regularity_exponent())}};
  auto at = [](const std::function<double()>& f) {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::singular_at_zero) return std::numeric_limits<double>::infinity();
      throw;
    }
  };
  if (k.kind() == KernelSpec::Kind::fbm) {
    // Second argument runs over the grid; first is the horizon.
    CsvWriter w(s.stream(), h, {"s", "kernel_T_s"});
    const double T = grid.horizon();
    for (std::size_t i = 1; i < grid.n_steps(); ++i) w.row(std::vector<double>{grid[i], k(T, grid[i])});
    return 0;
  }
  if (k.kind() == KernelSpec::Kind::matrix) {
    std::vector<std::string> cols{"t"};
    for (std::size_t i = 0; i < k.dim(); ++i)
      for (std::size_t j = 0; j < k.dim(); ++j) cols.push_back("k" + std::to_string(i) + std::to_string(j));
    CsvWriter w(s.stream(), h, cols);
    for (std::size_t n = 0; n <= grid.n_steps(); ++n) {
      std::vector<double> row{grid[n]};
      for (std::size_t i = 0; i < k.dim(); ++i)
        for (std::size_t j = 0; j < k.dim(); ++j) row.push_back(at([&] { return k.entry(i, j)(grid[n]); }));
      w.row(row);
    }
    return 0;
  }
  CsvWriter w(s.stream(), h, {"t", "kernel", "l2_norm_sq"});
  for (std::size_t n = 0; n <= grid.n_steps(); ++n)
    w.row(std::vector<double>{grid[n], at([&] { return k(grid[n]); }), k.l2_norm_sq(grid[n])});
  return 0;
}

// limit solve: skeleton of the configured regime under a constant control.
inline int cmd_limit(const std::string& cfg, const std::string& out, const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  const ModelSpec& m = c.require_model();
  const TimeGrid& grid = c.require_grid();
  const LimitBlock lb = c.limit.value_or(LimitBlock{});
  LimitProblem p = limit_problem(m, grid, constant_control(grid, m.noise_dim(), lb.control, "limit.control"), lb.branch);
  const SolveReport r = solve_ldp_limit(p);
  Sink s(out);
  OutputHeader h = header("limit solve", c, g);
  h.extra = {{"residual", format_double(r.residual)},
             {"picard_iterations", std::to_string(r.picard_iterations)},
             {"branch", to_string(r.branch_taken)}};
  std::vector<std::string> cols{"t"};
  for (auto& col : state_columns(m)) cols.push_back(col);
  CsvWriter w(s.stream(), h, cols);
  for (std::size_t i = 0; i <= grid.n_steps(); ++i) {
    std::vector<double> row{grid[i]};
    for (std::size_t k = 0; k < r.path.dim(); ++k) row.push_back(r.path(i, k));
    w.row(row);
  }
  return 0;
}

inline int cmd_simulate(const std::string& cfg, std::optional<std::size_t> paths, std::optional<std::uint64_t> seed,
                        const std::string& out, const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  const ModelSpec& m = c.require_model();
  const TimeGrid& grid = c.require_grid();
  const SimulateBlock sb = c.simulate.value_or(SimulateBlock{});
  const std::size_t n = paths.value_or(sb.paths);
  const std::uint64_t sd = seed.value_or(sb.seed);
  if (n == 0) throw ConfigError("simulate.paths: must be >= 1");
  const bool binary = sb.format == "binary" || (out.size() > 4 && out.substr(out.size() - 4) == ".bin");
  PathEnsemble e = sb.control.empty()
                       ? simulate(m, grid, n, sd, g.threads)
                       : simulate_controlled(m, constant_control(grid, m.noise_dim(), sb.control, "simulate.control"),
                                             grid, n, sd, g.threads);
  if (binary) {
    if (out.empty() || out == "-") throw ConfigError("simulate: binary output needs --out <file>");
    Sink s(out, true);
    write_binary(s.stream(), e, c.hash);
    return 0;
  }
  Sink s(out);
  std::vector<std::string> cols{"path", "t"};
  for (auto& col : state_columns(m)) cols.push_back(col);
  const bool weighted = !e.log_weights.empty();
  if (weighted) cols.push_back("log_weight");
  CsvWriter w(s.stream(), header("simulate", c, g, sd), cols);
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<std::string> row{std::to_string(p), format_double(grid[i])};
      for (std::size_t k = 0; k < e.dim; ++k) row.push_back(format_double(e(p, i, k)));
      if (weighted) row.push_back(format_double(e.log_weights[p]));
      w.row(row);
    }
  return 0;
}

inline OJson rate_json(const RateResult& r) {
  OJson j = OJson::object();
  j["value"] = number(r.value);
  j["converged"] = r.converged;
  j["constraint_violation"] = number(r.constraint_violation);
  j["iterations"] = r.iterations;
  if (r.regularization_delta) j["regularization_delta"] = number(*r.regularization_delta);
  if (r.richardson) j["richardson"] = number(*r.richardson);
  return j;
}

// Closed-form rate of the configured model and regime on a (phi, vphi) path.
inline RateResult rate_of_path(const ModelSpec& m, const GridFunction& path, double delta) {
  if (path.dim() != m.state_dim())
    throw Error(ErrorCode::domain_error, "path csv has " + std::to_string(path.dim()) + " components, the model needs " +
                                             std::to_string(m.state_dim()));
  const GridFunction phi = path.component(0);
  std::vector<GridFunction> ys;
  for (std::size_t k = 1; k < path.dim(); ++k) ys.push_back(path.component(k));
  const GridFunction vphi = GridFunction::stack(ys);
  const bool heston = std::holds_alternative<RoughHeston>(m.model);
  if (is_mdp(m.regime)) return mdp_rate_pair(m, phi, vphi);
  if (!is_small_time(m.regime)) return heston ? tail_rate_heston(m, phi, vphi, delta) : tail_rate_steinstein(m, phi, vphi);
  if (std::holds_alternative<MultiRoughBergomi>(m.model))
    throw Error(ErrorCode::not_applicable, "multi-factor models have closed-form rates only in the MDP regime");
  return heston ? heston_rate(m, phi, vphi, delta) : ldp_rate_pair(m, phi, vphi);
}

inline int cmd_rate_eval(const std::string& cfg, const std::string& path_csv, const std::string& out,
                         const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  const ModelSpec& m = c.require_model();
  std::ifstream is(path_csv);
  if (!is) throw Error(ErrorCode::domain_error, "cannot open " + path_csv);
  const GridFunction path = read_csv_grid_function(is);
  write_json(out, header("rate eval", c, g), rate_json(rate_of_path(m, path, c.rate.delta)));
  return 0;
}

// "x=<v>", "y=<v>" or "y<i>=<v>" (1-based factor index).
inline std::pair<std::size_t, double> parse_terminal(const std::string& s, const ModelSpec& m) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("--terminal: expected <component>=<value>");
  const std::string name = s.substr(0, eq), val = s.substr(eq + 1);
  double v;
  auto r = std::from_chars(val.data(), val.data() + val.size(), v);
  if (r.ec != std::errc() || r.ptr != val.data() + val.size()) throw ConfigError("--terminal: bad value '" + val + "'");
  std::size_t comp;
  if (name == "x") {
    comp = 0;
  } else if (name == "y") {
    comp = 1;
  } else if (name.size() > 1 && name[0] == 'y' && std::all_of(name.begin() + 1, name.end(), ::isdigit)) {
    comp = std::stoul(name.substr(1));
    if (comp == 0 || comp > m.vol_factors()) throw ConfigError("--terminal: no factor " + name);
  } else {
    throw ConfigError("--terminal: unknown component '" + name + "' (x, y, y1, y2, ...)");
  }
  return {comp, v};
}

inline int cmd_rate_minimize(const std::string& cfg, const std::string& terminal, const std::string& out,
                             const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  const ModelSpec& m = c.require_model();
  const auto [comp, target] = parse_terminal(terminal, m);
  TerminalRateOptions opt;
  opt.component = comp;
  opt.horizon = c.grid ? c.grid->horizon() : 1.0;
  opt.n_steps = c.rate.n_steps;
  opt.grading = c.rate.grading;
  opt.variational.threads = g.threads;
  const RateResult r = ldp_rate_terminal(m, target, opt);
  OJson j = rate_json(r);
  j["component"] = comp;
  j["target"] = target;
  write_json(out, header("rate minimize", c, g), j);
  return 0;
}

inline int cmd_smile(const std::string& cfg, const std::string& regime, const std::string& out, const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  const ModelSpec& m = c.require_model();
  if (!c.smile) throw ConfigError(cfg + ": smile: missing");
  const SmileBlock& sb = *c.smile;
  SmileOptions so;
  so.rate.n_steps = c.rate.n_steps;
  so.rate.grading = c.rate.grading;
  so.rate.variational.threads = g.threads;
  std::vector<SmilePoint> pts;
  for (double t : sb.maturities) {
    if (regime == "mc") {
      for (auto& p : mc_smile(m, t, sb.strikes, sb.paths, sb.seed, {sb.n_steps, g.threads})) pts.push_back(p);
      continue;
    }
    for (double k : sb.strikes) {
      if (regime == "ldp") {
        pts.push_back(smile_ldp(m, k, t, so));
      } else if (regime == "mdp") {
        if (!is_mdp(m.regime)) throw ConfigError("regime: the mdp smile needs an MDP regime carrying beta");
        pts.push_back(smile_mdp(m, k, t, regime_beta(m.regime)));
      } else {
        pts.push_back(smile_tail(m, t, k, so));
      }
    }
  }
  Sink s(out);
  OutputHeader h = header("smile " + regime, c, g, regime == "mc" ? std::optional<std::uint64_t>(sb.seed) : std::nullopt);
  CsvWriter w(s.stream(), h, {"t", "k", "sigma_hat", "stderr", "source"});
  for (const auto& p : pts)
    if (!p.flag.empty()) w.comment("flag", "t=" + format_double(p.t) + " k=" + format_double(p.k) + " " + p.flag);
  for (const auto& p : pts)
    w.row({format_double(p.t), format_double(p.k), format_double(p.implied_vol),
           p.std_error ? format_double(*p.std_error) : "", to_string(p.source)});
  return 0;
}

inline OJson slope_json(const SlopeReport& r) {
  OJson j = OJson::object();
  OJson levels = OJson::array();
  for (const auto& l : r.levels)
    levels.push_back({{"epsilon", l.epsilon},
                      {"speed", l.speed},
                      {"p_hat", l.p_hat},
                      {"stderr", l.std_error},
                      {"scaled_log_p", number(l.scaled_log)},
                      {"hits", l.hits}});
  j["levels"] = levels;
  j["intercept"] = number(r.intercept);
  j["slope"] = number(r.slope);
  j["empirical_rate"] = number(-r.intercept);
  j["reference_rate"] = r.reference ? number(*r.reference) : OJson();
  j["relative_gap"] = r.relative_gap ? number(*r.relative_gap) : OJson();
  return j;
}

inline DeviationExperiment experiment_from(const RunConfig& c, std::size_t threads) {
  if (!c.experiment) throw ConfigError("experiment: missing");
  const ExperimentBlock& b = *c.experiment;
  DeviationExperiment ex;
  ex.model = c.require_model();
  ex.grid = c.require_grid();
  ex.event = b.event;
  ex.epsilons = b.epsilons;
  ex.n_paths = b.paths;
  ex.seed = b.seed;
  ex.reference_rate = b.reference_rate;
  ex.threads = threads;
  detail::as_config("experiment", [&] {
    ex.validate();
    return 0;
  });
  if (b.importance_sampling) ex.is_control = build_is_control(ex.model, ex.event, ex.grid);
  return ex;
}

inline int cmd_verify(const std::string& cfg, const std::string& out, const GlobalFlags& g) {
  const RunConfig c = load_config(cfg);
  const DeviationExperiment ex = experiment_from(c, g.threads);
  const SlopeReport r = ldp_slope(ex);
  OJson j = slope_json(r);
  j["importance_sampling"] = ex.is_control.has_value();
  write_json(out, header("verify", c, g, ex.seed), j);
  return 0;
}

// Exit codes: 0 success, 1 domain error, 2 configuration or usage error.
inline int run(int argc, char** argv) {
  CLI::App app{"Large and moderate deviations toolkit for rough volatility models", "voldev"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--threads", g.threads, "worker threads (default: VD_THREADS, else hardware)");
  app.add_flag("--deterministic", g.deterministic, "omit the timestamp from output headers");

  std::string cfg, out, path_csv, terminal, regime;
  std::optional<std::size_t> paths;
  std::optional<std::uint64_t> seed;

  auto* kernels = app.add_subcommand("kernels", "tabulate a kernel");
  kernels->add_option("--config", cfg)->required();
  kernels->add_option("--out", out);

  auto* limit = app.add_subcommand("limit", "deterministic limit equations");
  limit->require_subcommand(1);
  auto* solve = limit->add_subcommand("solve", "solve the skeleton equation under a constant control");
  solve->add_option("--config", cfg)->required();
  solve->add_option("--out", out);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo paths");
  sim->add_option("--config", cfg)->required();
  sim->add_option("--paths", paths);
  sim->add_option("--seed", seed);
  sim->add_option("--out", out);

  auto* rate = app.add_subcommand("rate", "rate functions");
  rate->require_subcommand(1);
  auto* eval = rate->add_subcommand("eval", "closed-form rate of a path");
  eval->add_option("--model", cfg)->required();
  eval->add_option("--path", path_csv)->required();
  eval->add_option("--out", out);
  auto* minimize = rate->add_subcommand("minimize", "terminal-value rate by energy minimization");
  minimize->add_option("--model", cfg)->required();
  minimize->add_option("--terminal", terminal, "<x|y|yi>=<value>")->required();
  minimize->add_option("--out", out);

  auto* smile = app.add_subcommand("smile", "implied volatility");
  smile->add_option("--model", cfg)->required();
  smile->add_option("--regime", regime)->required()->check(CLI::IsMember({"ldp", "mdp", "tail", "mc"}));
  smile->add_option("--out", out);

  auto* verify = app.add_subcommand("verify", "Monte Carlo check of a deviation rate");
  verify->add_option("--experiment", cfg)->required();
  verify->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*kernels) return cmd_kernels(cfg, out, g);
    if (*solve) return cmd_limit(cfg, out, g);
    if (*sim) return cmd_simulate(cfg, paths, seed, out, g);
    if (*eval) return cmd_rate_eval(cfg, path_csv, out, g);
    if (*minimize) return cmd_rate_minimize(cfg, terminal, out, g);
    if (*smile) return cmd_smile(cfg, regime, out, g);
    if (*verify) return cmd_verify(cfg, out, g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace voldev::cli
