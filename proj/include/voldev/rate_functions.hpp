#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <optional>

#include "voldev/frac_calculus.hpp"
#include "voldev/models.hpp"
#include "voldev/variational.hpp"

namespace voldev {

struct RateResult {
  double value = 0.0;
  std::optional<Control> optimal_control;  // (u, v...) per driver
  std::optional<GridFunction> optimal_path;
  std::optional<double> regularization_delta;
  std::optional<double> richardson;  // 2 I(delta/2) - I(delta)
  std::size_t iterations = 0;
  double constraint_violation = 0.0;
  bool converged = true;
};

inline constexpr double kIndicatorTol = 1e-12;

namespace detail {

inline RateResult infinite_rate() {
  RateResult r;
  r.value = std::numeric_limits<double>::infinity();
  return r;
}

inline double dq_energy(const GridFunction& f, std::size_t stride) {
  const TimeGrid& g = f.grid();
  double e = 0.0;
  for (std::size_t i = 0; i + stride < g.size(); i += stride) {
    const double h = g[i + stride] - g[i], dq = (f(i + stride) - f(i)) / h;
    e += dq * dq * h;
  }
  return e;
}

// Refinement test for absolute continuity of a scalar grid path: reject a
// 1e6 blow-up against half resolution, or the factor-2 growth per halving of
// the step that a jump produces.
inline bool absolutely_continuous(const GridFunction& f) {
  for (std::size_t i = 0; i < f.size(); ++i)
    if (!std::isfinite(f(i))) return false;
  const std::size_t n = f.grid().n_steps();
  if (n < 8 || n % 4 != 0) return true;
  const double e1 = dq_energy(f, 1), e2 = dq_energy(f, 2), e4 = dq_energy(f, 4);
  if (e1 <= 0.0) return true;
  if (e1 > 1e6 * e2) return false;
  const double floor = 1e-8 * (1.0 + e4);
  return !(e2 > floor && e1 / e2 > 1.9 && e2 / e4 > 1.9);
}

inline void require_scalar(const GridFunction& f, const char* what) {
  if (f.dim() != 1) throw Error(ErrorCode::domain_error, std::string(what) + " must be scalar");
}

inline double gamma_hp(double H) { return boost::math::tgamma(H + 1.5); }

// D^{H+1/2}(f - f0), with node 0 set to node 1 (the derivative is finite there).
inline GridFunction frac_derivative(const GridFunction& f, double H, double f0) {
  GridFunction g(f.grid(), 1);
  for (std::size_t i = 0; i < f.size(); ++i) g(i) = f(i) - f0;
  return rl_derivative(g, FracOrder(H + 0.5), 0.0);
}

inline GridFunction frac_integral_or_identity(const GridFunction& f, double alpha) {
  if (alpha <= 0.0) return f;
  return rl_integral(f, FracOrder(alpha));
}

inline RateResult finish(Control ctl, const GridFunction& phi, const GridFunction& vphi) {
  RateResult r;
  r.value = energy(ctl);
  r.optimal_control = std::move(ctl);
  r.optimal_path = GridFunction::stack({phi, vphi});
  return r;
}

}  // namespace detail

// Small-time LDP rate of a single-factor model on a pair (phi, vphi).
inline RateResult ldp_rate_pair(const ModelSpec& spec, const GridFunction& phi, const GridFunction& vphi) {
  spec.validate();
  detail::require_scalar(phi, "phi");
  detail::require_scalar(vphi, "vphi");
  if (std::holds_alternative<MultiRoughBergomi>(spec.model))
    throw Error(ErrorCode::wrong_variant, "use multifactor_mdp_rate for multi-factor models");
  const VolCoefficients c = vol_coefficients(spec);
  const TimeGrid& g = phi.grid();
  if (std::abs(phi(0)) > kIndicatorTol || std::abs(vphi(0) - c.y0) > kIndicatorTol) return detail::infinite_rate();
  if (!detail::absolutely_continuous(phi)) return detail::infinite_rate();

  const double rho = c.rho, rb = std::sqrt(1.0 - rho * rho);
  std::size_t zeta_zero = 0;
  for (std::size_t i = 1; i < g.size(); ++i)
    if (std::abs(c.zeta(vphi(i))) <= kIndicatorTol) ++zeta_zero;
  if (rho != 0.0 && zeta_zero > 0)
    throw Error(ErrorCode::not_applicable, "rho != 0 and zeta vanishes along vphi");

  const GridFunction dv = detail::frac_derivative(vphi, c.hurst, c.y0);
  const GridFunction dphi = node_derivative(phi);
  Control ctl(g, 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double z = c.zeta(vphi(i)), S = c.Sigma(vphi(i));
    double v = 0.0, u = 0.0;
    if (std::abs(z) > kIndicatorTol) v = dv(i) / z;
    else if (i > 0 && std::abs(dv(i)) > 1e-8) return detail::infinite_rate();
    if (S > kIndicatorTol) u = (dphi(i) / c.vol(vphi(i)) - rho * v) / rb;
    else if (i > 0 && std::abs(dphi(i)) > 1e-8) return detail::infinite_rate();
    ctl(i, 0) = u;
    ctl(i, 1) = v;
  }
  return detail::finish(std::move(ctl), phi, vphi);
}

namespace detail {

// Heston-type inversion on vphi^delta = vphi + delta t^{H+1/2}.
// tail: vphi(0) = 0, drift kappa (theta_tail - y) enters the v-equation.
inline RateResult heston_inversion(const RoughHeston& m, bool tail, const GridFunction& phi, const GridFunction& vphi,
                                   double delta) {
  const TimeGrid& g = phi.grid();
  const double H = m.hurst, rho = m.rho, rb = std::sqrt(1.0 - rho * rho);
  const double y0 = tail ? 0.0 : m.y0;
  const GridFunction d0 = frac_derivative(vphi, H, y0);
  const GridFunction dphi = node_derivative(phi);
  GridFunction vd(g, 1);
  Control ctl(g, 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double y = vphi(i) + delta * std::pow(g[i], H + 0.5);
    vd(i) = y;
    if (y <= kIndicatorTol) continue;
    const double s = std::sqrt(y);
    const double v = (d0(i) + delta * gamma_hp(H) + (tail ? m.kappa * y : 0.0)) / (m.xi * s);
    ctl(i, 1) = v;
    ctl(i, 0) = (dphi(i) / s + (tail ? 0.5 * s : 0.0) - rho * v) / rb;
  }
  RateResult r = finish(std::move(ctl), phi, vd);
  if (delta > 0.0) r.regularization_delta = delta;
  return r;
}

inline void check_nonnegative(const GridFunction& vphi) {
  for (std::size_t i = 0; i < vphi.size(); ++i)
    if (vphi(i) < -1e-12) throw Error(ErrorCode::negative_path, "vphi < 0 at node " + std::to_string(i));
}

inline RateResult with_richardson(const RoughHeston& m, bool tail, const GridFunction& phi, const GridFunction& vphi,
                                  double delta) {
  RateResult r = heston_inversion(m, tail, phi, vphi, delta);
  if (delta > 0.0) {
    const double half = heston_inversion(m, tail, phi, vphi, 0.5 * delta).value;
    r.richardson = 2.0 * half - r.value;
  }
  return r;
}

}  // namespace detail

// Small-time rough Heston rate on the delta-perturbed path (delta = 0: indicator convention).
inline RateResult heston_rate(const ModelSpec& spec, const GridFunction& phi, const GridFunction& vphi,
                              double delta = 1e-4) {
  spec.validate();
  const auto* m = std::get_if<RoughHeston>(&spec.model);
  if (!m) throw Error(ErrorCode::wrong_variant, "heston_rate needs a rough Heston model");
  detail::require_scalar(phi, "phi");
  detail::require_scalar(vphi, "vphi");
  if (delta < 0.0) throw Error(ErrorCode::domain_error, "delta must be >= 0");
  detail::check_nonnegative(vphi);
  if (std::abs(phi(0)) > kIndicatorTol || std::abs(vphi(0) - m->y0) > kIndicatorTol) return detail::infinite_rate();
  if (!detail::absolutely_continuous(phi)) return detail::infinite_rate();
  return detail::with_richardson(*m, false, phi, vphi, delta);
}

// Tail rate of rough Stein-Stein (Y starts at 0).
inline RateResult tail_rate_steinstein(const ModelSpec& spec, const GridFunction& phi, const GridFunction& vphi) {
  spec.validate();
  const auto* m = std::get_if<RoughSteinStein>(&spec.model);
  if (!m) throw Error(ErrorCode::wrong_variant, "tail_rate_steinstein needs a rough Stein-Stein model");
  detail::require_scalar(phi, "phi");
  detail::require_scalar(vphi, "vphi");
  if (std::abs(phi(0)) > kIndicatorTol || std::abs(vphi(0)) > kIndicatorTol) return detail::infinite_rate();
  if (!detail::absolutely_continuous(phi)) return detail::infinite_rate();
  const TimeGrid& g = phi.grid();
  const double H = m->hurst, rho = m->rho, rb = std::sqrt(1.0 - rho * rho);
  const GridFunction dv = detail::frac_derivative(vphi, H, 0.0);
  const GridFunction iv = detail::frac_integral_or_identity(vphi, 0.5 - H);
  const GridFunction dphi = node_derivative(phi);
  Control ctl(g, 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = m->xi > 0.0 ? (dv(i) + m->kappa * iv(i)) / m->xi : 0.0;
    if (m->xi == 0.0 && i > 0 && std::abs(dv(i) + m->kappa * iv(i)) > 1e-8) return detail::infinite_rate();
    ctl(i, 1) = v;
    const double y = vphi(i);
    if (std::abs(y) > kIndicatorTol) ctl(i, 0) = (dphi(i) / y + 0.5 * y - rho * v) / rb;
  }
  return detail::finish(std::move(ctl), phi, vphi);
}

// Tail rate of rough Heston (Y starts at 0) on the delta-perturbed path.
inline RateResult tail_rate_heston(const ModelSpec& spec, const GridFunction& phi, const GridFunction& vphi,
                                   double delta = 1e-4) {
  spec.validate();
  const auto* m = std::get_if<RoughHeston>(&spec.model);
  if (!m) throw Error(ErrorCode::wrong_variant, "tail_rate_heston needs a rough Heston model");
  detail::require_scalar(phi, "phi");
  detail::require_scalar(vphi, "vphi");
  if (delta < 0.0) throw Error(ErrorCode::domain_error, "delta must be >= 0");
  detail::check_nonnegative(vphi);
  if (std::abs(phi(0)) > kIndicatorTol || std::abs(vphi(0)) > kIndicatorTol) return detail::infinite_rate();
  if (!detail::absolutely_continuous(phi)) return detail::infinite_rate();
  return detail::with_richardson(*m, true, phi, vphi, delta);
}

// Multi-factor rough Bergomi MDP rate. vphi holds one column per factor.
inline RateResult multifactor_mdp_rate(const ModelSpec& spec, const GridFunction& phi, const GridFunction& vphi) {
  spec.validate();
  const auto* m = std::get_if<MultiRoughBergomi>(&spec.model);
  if (!m) throw Error(ErrorCode::wrong_variant, "multifactor_mdp_rate needs a multi-factor rough Bergomi model");
  detail::require_scalar(phi, "phi");
  const std::size_t f = m->factors, ms = m->leading_block();
  if (vphi.dim() != f) throw Error(ErrorCode::domain_error, "vphi needs one column per factor");
  for (std::size_t j = 0; j < ms; ++j)
    if (m->l(j, j) == 0.0) throw Error(ErrorCode::singular_l, "L(" + std::to_string(j) + "," + std::to_string(j) + ") = 0");
  if (std::abs(phi(0)) > kIndicatorTol) return detail::infinite_rate();
  for (std::size_t j = 0; j < f; ++j)
    if (std::abs(vphi(0, j) - m->y0[j]) > kIndicatorTol) return detail::infinite_rate();
  if (!detail::absolutely_continuous(phi)) return detail::infinite_rate();

  const TimeGrid& g = phi.grid();
  const double H = m->hurst[0];
  std::vector<GridFunction> D;
  for (std::size_t j = 0; j < f; ++j) D.push_back(detail::frac_derivative(vphi.component(j), H, m->y0[j]));
  double s0 = 0.0;
  for (double y : m->y0) s0 += std::exp(0.5 * y);
  // Drivers outside the leading block only move X; spread the X residual over
  // (u, v_{ms..}) by minimum norm.
  double a2 = m->rho_bar() * m->rho_bar();
  for (std::size_t j = ms; j < f; ++j) a2 += m->rho[j] * m->rho[j];
  const GridFunction dphi = node_derivative(phi);
  Control ctl(g, 1 + f);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < ms; ++j) {
      double s = D[j](i);
      for (std::size_t l = 0; l < j; ++l) s -= m->l(j, l) * ctl(i, 1 + l);
      ctl(i, 1 + j) = s / m->l(j, j);
    }
    for (std::size_t j = ms; j < f; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < ms; ++l) s += m->l(j, l) * ctl(i, 1 + l);
      const double scale = 1.0 + std::abs(D[j](i));
      if (std::abs(D[j](i) - s) > 1e-6 * scale) return detail::infinite_rate();
    }
    double r = dphi(i) / s0;
    for (std::size_t j = 0; j < ms; ++j) r -= m->rho[j] * ctl(i, 1 + j);
    ctl(i, 0) = m->rho_bar() * r / a2;
    for (std::size_t j = ms; j < f; ++j) ctl(i, 1 + j) = m->rho[j] * r / a2;
  }
  RateResult res;
  res.value = energy(ctl);
  res.optimal_control = std::move(ctl);
  res.optimal_path = GridFunction::stack({phi, vphi});
  return res;
}

// MDP rate of the frozen-coefficient linear limit. Small time: vphi starts at
// y0 and deviations are vphi - y0. Tails (Stein-Stein): vphi starts at 0.
inline RateResult mdp_rate_pair(const ModelSpec& spec, const GridFunction& phi, const GridFunction& vphi) {
  spec.validate();
  if (!is_mdp(spec.regime)) throw Error(ErrorCode::domain_error, "mdp_rate_pair needs an MDP regime");
  if (std::holds_alternative<MultiRoughBergomi>(spec.model)) return multifactor_mdp_rate(spec, phi, vphi);
  detail::require_scalar(phi, "phi");
  detail::require_scalar(vphi, "vphi");
  const VolCoefficients c = vol_coefficients(spec);
  const TimeGrid& g = phi.grid();
  const double rho = c.rho, rb = std::sqrt(1.0 - rho * rho);

  if (!is_small_time(spec.regime)) {
    const auto& m = std::get<RoughSteinStein>(spec.model);
    if (std::abs(vphi(0)) > kIndicatorTol) return detail::infinite_rate();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::abs(phi(i)) > kIndicatorTol) return detail::infinite_rate();
    if (m.xi == 0.0) throw Error(ErrorCode::degenerate_coefficients, "zeta(0) = 0");
    const GridFunction dv = detail::frac_derivative(vphi, m.hurst, 0.0);
    const GridFunction iv = detail::frac_integral_or_identity(vphi, 0.5 - m.hurst);
    Control ctl(g, 2);
    for (std::size_t i = 0; i < g.size(); ++i) ctl(i, 1) = (dv(i) + m.kappa * iv(i)) / m.xi;
    return detail::finish(std::move(ctl), phi, vphi);
  }

  const double S0 = c.Sigma(c.y0), z0 = c.zeta(c.y0);
  if (std::abs(S0 * z0) <= kIndicatorTol)
    throw Error(ErrorCode::degenerate_coefficients, "Sigma(y0) zeta(y0) = 0");
  if (std::abs(phi(0)) > kIndicatorTol || std::abs(vphi(0) - c.y0) > kIndicatorTol) return detail::infinite_rate();
  if (!detail::absolutely_continuous(phi)) return detail::infinite_rate();
  const GridFunction dv = detail::frac_derivative(vphi, c.hurst, c.y0);
  const GridFunction dphi = node_derivative(phi);
  const double s0 = c.vol(c.y0);
  Control ctl(g, 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    ctl(i, 1) = dv(i) / z0;
    ctl(i, 0) = (dphi(i) / s0 - rho * ctl(i, 1)) / rb;
  }
  return detail::finish(std::move(ctl), phi, vphi);
}

namespace detail {

inline double sigma_at_mean(const ModelSpec& spec) {
  if (const auto* m = std::get_if<MultiRoughBergomi>(&spec.model)) {
    double s0 = 0.0;
    for (double y : m->y0) s0 += std::exp(0.5 * y);
    return s0 * s0;
  }
  if (!is_small_time(spec.regime)) return 0.0;
  const VolCoefficients c = vol_coefficients(spec);
  return c.Sigma(c.y0);
}

}  // namespace detail

// x^2 / (2 Sigma(y0) T).
inline double mdp_rate_terminal_x(const ModelSpec& spec, double x, double horizon = 1.0) {
  const double S = detail::sigma_at_mean(spec);
  if (!(S > 0.0)) throw Error(ErrorCode::degenerate_coefficients, "Sigma(y0) = 0");
  return x * x / (2.0 * S * horizon);
}

// Terminal MDP rate of the standardized volatility deviation.
inline double mdp_rate_terminal_y(double y) { return 0.5 * y * y; }

// Same, on the raw deviation eta_Y(1): standardizes by zeta(y0) ||K||_{L^2[0,1]}.
inline double mdp_rate_terminal_y(const ModelSpec& spec, double y) {
  spec.validate();
  if (std::holds_alternative<MultiRoughBergomi>(spec.model))
    throw Error(ErrorCode::wrong_variant, "single-factor model expected");
  const VolCoefficients c = vol_coefficients(spec);
  const double z = is_small_time(spec.regime) ? c.zeta(c.y0) : c.zeta(0.0);
  if (z == 0.0) throw Error(ErrorCode::degenerate_coefficients, "zeta at the mean is 0");
  const double s = std::abs(z) * std::sqrt(c.vol_kernel.l2_norm_sq(1.0));
  return mdp_rate_terminal_y(y / s);
}

struct TerminalRateOptions {
  std::size_t component = 0;  // 0 = X, 1.. = Y factors
  double horizon = 1.0;
  std::size_t n_steps = 512;
  double grading = 4.0;  // nodes cluster at the horizon
  VariationalOptions variational;
};

inline TimeGrid terminal_grid(double horizon, std::size_t n, double q) {
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i)
    t[i] = horizon * (1.0 - std::pow(1.0 - static_cast<double>(i) / n, q));
  t[n] = horizon;
  return TimeGrid::from_nodes(std::move(t));
}

// inf { energy : limit path hits `target` at the horizon on the chosen component }.
// Targets are in the limit's own coordinates (the MDP limit starts at 0).
inline RateResult ldp_rate_terminal(const ModelSpec& spec, double target, const TerminalRateOptions& opt = {}) {
  spec.validate();
  if (opt.component >= spec.state_dim()) throw Error(ErrorCode::domain_error, "component out of range");
  const TimeGrid g = terminal_grid(opt.horizon, opt.n_steps, opt.grading);
  const LimitProblem base = limit_problem(spec, g, Control(g, spec.noise_dim()));
  const GridFunction mean = solve_ldp_limit(base, opt.variational.limit).path;
  const double gap = target - mean(g.n_steps(), opt.component);
  RateResult r;
  if (std::abs(gap) <= 1e-14 * std::max(1.0, std::abs(target))) {
    r.value = 0.0;
    r.optimal_control = base.control;
    r.optimal_path = mean;
    return r;
  }
  const std::vector<LinearConstraint> cons{LinearConstraint::terminal(g, opt.component, target)};
  const VariationalResult v = minimize_energy(base, cons, gap, opt.variational);
  r.iterations = v.iterations;
  r.constraint_violation = v.violation;
  r.converged = v.converged;
  if (!v.converged) {
    // Zero sensitivity of the terminal value to the controls: unreachable.
    LimitProblem p = base;
    p.control = v.control;
    LimitWeights W(p);
    GridFunction gw(g, p.dim());
    gw(g.n_steps(), opt.component) = 1.0;
    const GridFunction sens = detail::control_gradient(p, W, v.path, gw);
    double nrm = 0.0;
    for (double s : sens.values()) nrm = std::max(nrm, std::abs(s));
    if (nrm < 1e-12) return detail::infinite_rate();
    throw SolverFailure(v.value, v.violation);
  }
  r.value = v.value;
  r.optimal_control = v.control;
  r.optimal_path = v.path;
  return r;
}

// Approximate pathwise X-rate: matches phi at up to `checkpoints` nodes.
inline RateResult ldp_rate_path_x(const ModelSpec& spec, const GridFunction& phi, std::size_t checkpoints = 32,
                                  const VariationalOptions& vopt = {}) {
  spec.validate();
  detail::require_scalar(phi, "phi");
  const TimeGrid& g = phi.grid();
  if (!detail::absolutely_continuous(phi) || std::abs(phi(0)) > kIndicatorTol) return detail::infinite_rate();
  const LimitProblem base = limit_problem(spec, g, Control(g, spec.noise_dim()));
  std::vector<LinearConstraint> cons;
  const std::size_t n = g.n_steps(), k = std::min(checkpoints, n);
  double scale = 0.0;
  for (std::size_t c = 1; c <= k; ++c) {
    const std::size_t i = c * n / k;
    cons.push_back({{{i, 0, 1.0}}, phi(i)});
    scale = std::max(scale, std::abs(phi(i)));
  }
  if (scale == 0.0) scale = 1.0;
  const VariationalResult v = minimize_energy(base, cons, scale, vopt);
  RateResult r;
  r.value = v.value;
  r.optimal_control = v.control;
  r.optimal_path = v.path;
  r.iterations = v.iterations;
  r.constraint_violation = v.violation;
  r.converged = v.converged;
  return r;
}

}  // namespace voldev
