#pragma once

#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <vector>

#include "voldev/rate_functions.hpp"
#include "voldev/sve_sim.hpp"
#include "voldev/variational.hpp"

namespace voldev {

enum class Direction { ge, le };

struct DeviationEvent {
  std::size_t component = 1;
  Direction direction = Direction::ge;
  double threshold = 0.0;  // in the simulator's coordinates (eta for MDP regimes)
  std::optional<double> time;  // default: the grid horizon
};

struct DeviationExperiment {
  ModelSpec model;
  DeviationEvent event;
  std::vector<double> epsilons;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 0;
  std::optional<Control> is_control;
  TimeGrid grid = TimeGrid::uniform(1.0, 64);
  std::optional<double> reference_rate;
  std::size_t threads = 0;

  void validate() const {
    if (epsilons.empty()) throw Error(ErrorCode::domain_error, "epsilons must not be empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      if (!(epsilons[i] > 0.0)) throw Error(ErrorCode::domain_error, "epsilons must be > 0");
      if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
        throw Error(ErrorCode::domain_error, "epsilons must be strictly decreasing");
    }
    if (n_paths < 1000) throw Error(ErrorCode::domain_error, "n_paths must be >= 1000");
    if (event.component >= model.state_dim()) throw Error(ErrorCode::domain_error, "event component out of range");
  }
};

// s(eps): eps^{2H} small-time LDP, eps^{2 beta} MDP, eps^2 tails.
inline double speed(const ModelSpec& spec, double eps) {
  if (is_mdp(spec.regime)) return std::pow(eps, 2.0 * regime_beta(spec.regime));
  if (is_small_time(spec.regime)) return std::pow(eps, 2.0 * spec.hurst());
  return eps * eps;
}

inline ModelSpec with_epsilon(ModelSpec spec, double eps) {
  std::visit([eps](auto& r) { r.epsilon = eps; }, spec.regime);
  return spec;
}

struct ProbEstimate {
  double p_hat = 0.0, std_error = 0.0;
  std::size_t hits = 0;
  double sample_variance = 0.0;  // per-path variance of the estimator's summand
  // log p_hat and log std_error stay finite when deep levels underflow p_hat.
  double log_p_hat = -INFINITY, log_std_error = -INFINITY;
};

namespace detail {

inline std::uint64_t level_seed(std::uint64_t seed, double eps) {
  std::uint64_t bits;
  std::memcpy(&bits, &eps, sizeof bits);
  std::uint64_t z = seed ^ (bits * 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline bool hit(const DeviationEvent& e, double x) {
  return e.direction == Direction::ge ? x >= e.threshold : x <= e.threshold;
}

}  // namespace detail

// Plain or importance-sampled estimate of P(event) at one epsilon.
inline ProbEstimate estimate_event_prob(const DeviationExperiment& ex, double eps) {
  ex.validate();
  ProbEstimate out;
  const bool sure = ex.event.direction == Direction::ge ? ex.event.threshold == -INFINITY
                                                        : ex.event.threshold == INFINITY;
  if (sure) {
    out.p_hat = 1.0;
    out.log_p_hat = 0.0;
    out.hits = ex.n_paths;
    return out;
  }
  const ModelSpec spec = with_epsilon(ex.model, eps);
  Simulator sim(spec, ex.grid, ex.is_control);
  const std::size_t node = ex.grid.nearest_node(ex.event.time.value_or(ex.grid.horizon()));
  const std::size_t idx = node * sim.dim() + ex.event.component;
  std::vector<double> f(ex.n_paths);
  std::vector<unsigned char> h(ex.n_paths);
  const bool is = ex.is_control.has_value();
  // f holds log weights of the hits; accumulation is shifted by their maximum.
  for_each_path(sim, ex.n_paths, detail::level_seed(ex.seed, eps), ex.threads,
                [&](std::size_t p, std::span<const double> path, double lw) {
                  h[p] = detail::hit(ex.event, path[idx]);
                  f[p] = is ? lw : 0.0;
                });
  double m = -INFINITY;
  for (std::size_t p = 0; p < ex.n_paths; ++p)
    if (h[p]) {
      m = std::max(m, f[p]);
      ++out.hits;
    }
  const double n = static_cast<double>(ex.n_paths);
  if (out.hits == 0) return out;
  double s = 0.0, s2 = 0.0;
  for (std::size_t p = 0; p < ex.n_paths; ++p)
    if (h[p]) {
      const double w = std::exp(f[p] - m);
      s += w;
      s2 += w * w;
    }
  const double mean = s / n, var = std::max(s2 / n - mean * mean, 0.0) * n / (n - 1.0);
  out.log_p_hat = m + std::log(mean);
  out.log_std_error = m + 0.5 * std::log(var / n);
  out.p_hat = std::exp(out.log_p_hat);
  out.std_error = std::exp(out.log_std_error);
  out.sample_variance = std::exp(2.0 * m) * var;
  return out;
}

struct SlopeLevel {
  double epsilon, speed, p_hat, std_error, scaled_log;
  std::size_t hits;
};

struct SlopeReport {
  std::vector<SlopeLevel> levels;
  double intercept = 0.0;  // empirical -inf I
  double slope = 0.0;
  std::optional<double> reference;  // the rate, so the target intercept is -reference
  std::optional<double> relative_gap;
};

inline constexpr std::size_t kMinHits = 20;

// Fits s log p ~ -I + c s over the epsilon sweep.
inline SlopeReport ldp_slope(const DeviationExperiment& ex) {
  ex.validate();
  if (ex.epsilons.size() < 3) throw Error(ErrorCode::domain_error, "ldp_slope needs at least 3 epsilons");
  SlopeReport r;
  std::vector<ProbEstimate> est(ex.epsilons.size());
  // Levels are independent; each runs its own parallel batch.
  for (std::size_t l = 0; l < ex.epsilons.size(); ++l) est[l] = estimate_event_prob(ex, ex.epsilons[l]);
  for (std::size_t l = 0; l < ex.epsilons.size(); ++l) {
    const double eps = ex.epsilons[l];
    if (est[l].hits < kMinHits)
      throw Error(ErrorCode::insufficient_hits, "only " + std::to_string(est[l].hits) + " hits at eps = " +
                                                    std::to_string(eps) + "; use importance sampling");
    const double s = speed(ex.model, eps);
    r.levels.push_back({eps, s, est[l].p_hat, est[l].std_error, s * est[l].log_p_hat, est[l].hits});
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double m = static_cast<double>(r.levels.size());
  for (const auto& l : r.levels) {
    sx += l.speed;
    sy += l.scaled_log;
    sxx += l.speed * l.speed;
    sxy += l.speed * l.scaled_log;
  }
  r.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  r.intercept = (sy - r.slope * sx) / m;
  r.reference = ex.reference_rate;
  if (r.reference && *r.reference != 0.0)
    r.relative_gap = std::abs(-r.intercept - *r.reference) / std::abs(*r.reference);
  return r;
}

namespace detail {

// Terminal value of the zero-control limit on the chosen component.
inline double limit_mean_at(const ModelSpec& spec, const TimeGrid& grid, std::size_t node, std::size_t comp) {
  LimitProblem p = limit_problem(spec, grid, Control(grid, spec.noise_dim()));
  return solve_ldp_limit(p).path(node, comp);
}

}  // namespace detail

// Deterministic change of drift that moves the limit of the event component
// onto the boundary at the event time, in the limit's own coordinates (the
// simulator rescales the shift by the regime).
inline Control build_is_control(const ModelSpec& spec, const DeviationEvent& event, const TimeGrid& grid) {
  spec.validate();
  const std::size_t q = spec.noise_dim(), node = grid.nearest_node(event.time.value_or(grid.horizon()));
  Control v(grid, q);
  if (!std::isfinite(event.threshold) || node == 0) return v;
  const double gap = event.threshold - detail::limit_mean_at(spec, grid, node, event.component);
  if (std::abs(gap) <= 1e-14 * std::max(1.0, std::abs(event.threshold))) return v;

  const bool gaussian_y = is_small_time(spec.regime) && event.component == 1 &&
                          (std::holds_alternative<RoughBergomi>(spec.model) ||
                           std::holds_alternative<RoughSteinStein>(spec.model));
  if (gaussian_y) {
    // Cameron-Martin element: v_j proportional to the kernel mass of interval j
    // seen from the event time (left-constant controls, as simulated).
    const VolCoefficients c = vol_coefficients(spec);
    const double z = c.zeta(c.y0);
    if (z == 0.0) return v;
    ProductWeights A(c.vol_kernel, grid, Interpolation::left_constant);
    double norm = 0.0;
    for (std::size_t j = 0; j < node; ++j) norm += A.interval_mass(node, j) * A.interval_mass(node, j) / grid.step(j);
    for (std::size_t j = 0; j < node; ++j) v(j, 1) = gap * A.interval_mass(node, j) / grid.step(j) / (z * norm);
    for (std::size_t j = node; j <= grid.n_steps(); ++j) v(j, 1) = v(node - 1, 1);
    return v;
  }
  try {
    LimitProblem base = limit_problem(spec, grid, Control(grid, q));
    LinearConstraint con{{{node, event.component, 1.0}}, event.threshold};
    VariationalOptions opt;
    opt.max_iterations = 500;
    auto res = minimize_energy(base, {con}, gap, opt);
    if (res.converged) return res.control;
  } catch (const Error&) {
  }
  // Fallback: a constant control whose limit reaches the boundary in mean.
  LimitProblem p = limit_problem(spec, grid, Control(grid, q));
  const std::size_t k = event.component;
  for (std::size_t i = 0; i <= grid.n_steps(); ++i) p.control(i, k) = 1.0;
  const double unit = solve_ldp_limit(p).path(node, event.component) -
                      detail::limit_mean_at(spec, grid, node, event.component);
  if (unit == 0.0) return v;
  for (std::size_t i = 0; i <= grid.n_steps(); ++i) v(i, k) = gap / unit;
  return v;
}

// Lemma-style proxies over an epsilon sweep: sup_t E|Z_t|^4 and
// E[(max over dyadic pairs |Z_t - Z_s| / |t - s|^alpha)^p] on the simulated
// state (max over components).
struct ProxyLevel {
  double epsilon, moment4, holder;
};

inline std::vector<ProxyLevel> moment_proxies(const ModelSpec& model, const TimeGrid& grid,
                                              const std::vector<double>& epsilons, std::size_t n_paths,
                                              std::uint64_t seed, const std::optional<Control>& control = {},
                                              double p = 8.0, std::size_t threads = 0) {
  const std::size_t n = grid.n_steps();
  if (!grid.is_uniform() || (n & (n - 1)) != 0)
    throw Error(ErrorCode::domain_error, "proxies need a uniform dyadic grid");
  const double alpha = std::max(model.hurst() - 1.0 / p - 0.01, 0.0);
  std::vector<ProxyLevel> out;
  for (double eps : epsilons) {
    Simulator sim(with_epsilon(model, eps), grid, control);
    const std::size_t d = sim.dim();
    std::vector<double> m4(n + 1, 0.0), hol(n_paths);
    std::vector<std::vector<double>> m4p(n_paths);
    for_each_path(sim, n_paths, detail::level_seed(seed, eps), threads,
                  [&](std::size_t path, std::span<const double> z, double) {
                    double best = 0.0;
                    for (std::size_t step = 1; step <= n; step *= 2)
                      for (std::size_t i = 0; i + step <= n; i += step) {
                        const double dt = grid[i + step] - grid[i];
                        for (std::size_t c = 0; c < d; ++c)
                          best = std::max(best, std::abs(z[(i + step) * d + c] - z[i * d + c]) / std::pow(dt, alpha));
                      }
                    hol[path] = std::pow(best, p);
                    auto& mm = m4p[path];
                    mm.assign(n + 1, 0.0);
                    for (std::size_t i = 0; i <= n; ++i)
                      for (std::size_t c = 0; c < d; ++c) mm[i] = std::max(mm[i], std::pow(z[i * d + c], 4));
                  });
    double h = 0.0;
    for (double x : hol) h += x;
    for (const auto& mm : m4p)
      for (std::size_t i = 0; i <= n; ++i) m4[i] += mm[i];
    double sup = 0.0;
    for (double x : m4) sup = std::max(sup, x / n_paths);
    out.push_back({eps, sup, h / n_paths});
  }
  return out;
}

}  // namespace voldev
