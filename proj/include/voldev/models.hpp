#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "voldev/volterra_det.hpp"

namespace voldev {

struct RoughSteinStein {
  double kappa = 1.0, theta = 0.2, xi = 0.3, rho = 0.0, y0 = 0.2, hurst = 0.1;
};

// y0 = log V0.
struct RoughBergomi {
  double a = 0.0, rho = 0.0, y0 = 0.0, hurst = 0.1;
};

struct RoughHeston {
  double kappa = 1.0, theta = 0.04, xi = 0.3, rho = 0.0, y0 = 0.04, hurst = 0.1;
};

// Y = y0 + L Z - a t^{2 H_1}; L is m x m row-major lower triangular, H ascending.
struct MultiRoughBergomi {
  std::size_t factors = 2;
  std::vector<double> L{1.0, 0.0, 0.0, 1.0};
  std::vector<double> a{0.0, 0.0};
  std::vector<double> y0{0.0, 0.0};
  std::vector<double> rho{0.0, 0.0};
  std::vector<double> hurst{0.1, 0.1};

  double l(std::size_t i, std::size_t j) const { return L[i * factors + j]; }
  double rho_bar() const {
    double s = 0.0;
    for (double r : rho) s += r * r;
    return std::sqrt(1.0 - s);
  }
  // Number of factors sharing the smallest Hurst exponent.
  std::size_t leading_block() const {
    std::size_t m = 0;
    while (m < factors && hurst[m] == hurst[0]) ++m;
    return m;
  }
};

struct SmallTimeLDP { double epsilon = 1.0; };
struct SmallTimeMDP { double epsilon = 1.0, beta = 0.05; };
struct TailLDP { double epsilon = 1.0; };
struct TailMDP { double epsilon = 1.0, beta = 0.5; };

using ScalingRegime = std::variant<SmallTimeLDP, SmallTimeMDP, TailLDP, TailMDP>;
using ModelVariant = std::variant<RoughSteinStein, RoughBergomi, RoughHeston, MultiRoughBergomi>;

inline double regime_epsilon(const ScalingRegime& r) {
  return std::visit([](const auto& x) { return x.epsilon; }, r);
}
inline bool is_small_time(const ScalingRegime& r) {
  return std::holds_alternative<SmallTimeLDP>(r) || std::holds_alternative<SmallTimeMDP>(r);
}
inline bool is_mdp(const ScalingRegime& r) {
  return std::holds_alternative<SmallTimeMDP>(r) || std::holds_alternative<TailMDP>(r);
}
inline double regime_beta(const ScalingRegime& r) {
  if (auto* m = std::get_if<SmallTimeMDP>(&r)) return m->beta;
  if (auto* m = std::get_if<TailMDP>(&r)) return m->beta;
  return 0.0;
}

struct ModelSpec {
  ModelVariant model;
  ScalingRegime regime = SmallTimeLDP{};

  // Smallest Hurst exponent; drives the small-time scaling.
  double hurst() const {
    return std::visit(
        [](const auto& m) {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, MultiRoughBergomi>)
            return m.hurst.front();
          else
            return m.hurst;
        },
        model);
  }

  std::size_t vol_factors() const {
    if (auto* m = std::get_if<MultiRoughBergomi>(&model)) return m->factors;
    return 1;
  }
  std::size_t state_dim() const { return 1 + vol_factors(); }
  std::size_t noise_dim() const { return 1 + vol_factors(); }

  // theta_eps: eps^H small-time, eps in the tails.
  double noise_scale() const {
    const double e = regime_epsilon(regime);
    return is_small_time(regime) ? std::pow(e, hurst()) : e;
  }
  // h_eps = eps^{-beta} in the MDP regimes, 1 otherwise.
  double mdp_scale() const { return is_mdp(regime) ? std::pow(regime_epsilon(regime), -regime_beta(regime)) : 1.0; }

  std::string name() const {
    switch (model.index()) {
      case 0: return "rough_stein_stein";
      case 1: return "rough_bergomi";
      case 2: return "rough_heston";
      default: return "multi_rough_bergomi";
    }
  }

  void validate() const;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::invalid_model, msg);
}
inline void check_hurst(double h, const std::string& where) {
  require(h > 0.0 && h <= 0.5, where + ": H must lie in (0, 1/2]");
}
inline void check_rho(double r, const std::string& where) { require(std::abs(r) < 1.0, where + ": |rho| must be < 1"); }

}  // namespace detail

inline void ModelSpec::validate() const {
  using detail::require;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RoughSteinStein>) {
          detail::check_hurst(m.hurst, "rough_stein_stein");
          detail::check_rho(m.rho, "rough_stein_stein");
          require(m.y0 > 0.0, "rough_stein_stein: y0 must be > 0");
          require(m.xi >= 0.0 && m.kappa >= 0.0 && m.theta >= 0.0, "rough_stein_stein: xi, kappa, theta must be >= 0");
        } else if constexpr (std::is_same_v<T, RoughBergomi>) {
          detail::check_hurst(m.hurst, "rough_bergomi");
          detail::check_rho(m.rho, "rough_bergomi");
          require(is_small_time(regime), "rough_bergomi: tail rescalings are not available");
        } else if constexpr (std::is_same_v<T, RoughHeston>) {
          detail::check_hurst(m.hurst, "rough_heston");
          detail::check_rho(m.rho, "rough_heston");
          require(m.y0 > 0.0, "rough_heston: y0 must be > 0");
          require(m.xi > 0.0 && m.kappa >= 0.0, "rough_heston: xi must be > 0 and kappa >= 0");
          require(m.theta >= 0.0, "rough_heston: theta must be >= 0");
          require(!std::holds_alternative<TailMDP>(regime), "rough_heston: no tail MDP");
        } else {
          const std::size_t n = m.factors;
          require(n >= 1, "multi_rough_bergomi: need at least one factor");
          require(m.L.size() == n * n && m.a.size() == n && m.y0.size() == n && m.rho.size() == n &&
                      m.hurst.size() == n,
                  "multi_rough_bergomi: parameter sizes must match the factor count");
          for (std::size_t i = 0; i < n; ++i) {
            detail::check_hurst(m.hurst[i], "multi_rough_bergomi");
            if (i > 0) require(m.hurst[i] >= m.hurst[i - 1], "multi_rough_bergomi: H must be sorted ascending");
            for (std::size_t j = i + 1; j < n; ++j) require(m.l(i, j) == 0.0, "multi_rough_bergomi: L must be lower triangular");
          }
          double s = 0.0;
          for (double r : m.rho) s += r * r;
          require(s < 1.0, "multi_rough_bergomi: sum of rho^2 must be < 1");
          require(is_small_time(regime), "multi_rough_bergomi: tail rescalings are not available");
        }
      },
      model);
  const double e = regime_epsilon(regime);
  require(e > 0.0 && std::isfinite(e), "regime: epsilon must be > 0");
  if (auto* r = std::get_if<SmallTimeMDP>(&regime))
    require(r->beta > 0.0 && r->beta < hurst(), "regime: small-time MDP needs beta in (0, H)");
  if (auto* r = std::get_if<TailMDP>(&regime)) {
    require(r->beta > 0.0 && r->beta < 1.0, "regime: tail MDP needs beta in (0, 1)");
    require(std::holds_alternative<RoughSteinStein>(model), "regime: tail MDP is only available for rough Stein-Stein");
  }
}

// Variance Sigma, vol-of-vol zeta and the mean-reversion field of the
// single-factor models, with derivatives.
struct VolCoefficients {
  std::function<double(double)> Sigma, dSigma, zeta, dzeta;
  std::function<double(double)> vol, dvol;  // signed square root of Sigma (y for Stein-Stein)
  double kappa = 0.0, theta = 0.0;  // drift kappa (theta - y); zero for Bergomi
  KernelSpec drift_kernel = KernelSpec::zero();
  KernelSpec vol_kernel = KernelSpec::zero();
  double drift_degree = 0.0;  // homogeneity of the drift kernel
  bool sqrt_state = false;
  double rho = 0.0, y0 = 0.0, hurst = 0.5;
};

inline VolCoefficients vol_coefficients(const ModelSpec& spec) {
  VolCoefficients c;
  if (auto* m = std::get_if<RoughSteinStein>(&spec.model)) {
    const double xi = m->xi;
    c.Sigma = [](double y) { return y * y; };
    c.dSigma = [](double y) { return 2.0 * y; };
    c.vol = [](double y) { return y; };
    c.dvol = [](double) { return 1.0; };
    c.zeta = [xi](double) { return xi; };
    c.dzeta = [](double) { return 0.0; };
    c.kappa = m->kappa;
    c.theta = m->theta;
    c.drift_kernel = KernelSpec::constant(1.0);
    c.vol_kernel = KernelSpec::power_law(m->hurst);
    c.rho = m->rho;
    c.y0 = m->y0;
    c.hurst = m->hurst;
  } else if (auto* m = std::get_if<RoughBergomi>(&spec.model)) {
    c.Sigma = [](double y) { return std::exp(y); };
    c.dSigma = [](double y) { return std::exp(y); };
    c.vol = [](double y) { return std::exp(0.5 * y); };
    c.dvol = [](double y) { return 0.5 * std::exp(0.5 * y); };
    c.zeta = [](double) { return 1.0; };
    c.dzeta = [](double) { return 0.0; };
    c.vol_kernel = KernelSpec::power_law(m->hurst);
    c.rho = m->rho;
    c.y0 = m->y0;
    c.hurst = m->hurst;
  } else if (auto* m = std::get_if<RoughHeston>(&spec.model)) {
    const double xi = m->xi;
    c.Sigma = [](double y) { return std::max(y, 0.0); };
    c.dSigma = [](double y) { return y > 0.0 ? 1.0 : 0.0; };
    c.vol = [](double y) { return std::sqrt(std::max(y, 0.0)); };
    c.dvol = [](double y) { return y > 0.0 ? 0.5 / std::sqrt(y) : 0.0; };
    c.zeta = [xi](double y) { return xi * std::sqrt(std::max(y, 0.0)); };
    c.dzeta = [xi](double y) { return y > 0.0 ? 0.5 * xi / std::sqrt(y) : 0.0; };
    c.kappa = m->kappa;
    c.theta = m->theta;
    c.drift_kernel = KernelSpec::power_law(m->hurst);
    c.vol_kernel = KernelSpec::power_law(m->hurst);
    c.drift_degree = m->hurst - 0.5;
    c.sqrt_state = true;
    c.rho = m->rho;
    c.y0 = m->y0;
    c.hurst = m->hurst;
  } else {
    throw Error(ErrorCode::wrong_variant, "single-factor model expected");
  }
  return c;
}

// Deterministic mean state X-bar of the rescaled system as eps -> 0.
inline std::vector<double> mean_initial_state(const ModelSpec& spec) {
  std::vector<double> x(spec.state_dim(), 0.0);
  if (!is_small_time(spec.regime)) return x;
  if (auto* m = std::get_if<MultiRoughBergomi>(&spec.model)) {
    for (std::size_t i = 0; i < m->factors; ++i) x[1 + i] = m->y0[i];
  } else {
    x[1] = vol_coefficients(spec).y0;
  }
  return x;
}

// Limit equation of the LDP (small-time or tail). Components: 0 = X, 1.. = Y.
// Noise/control components: 0 = u (orthogonal driver), 1.. = v (vol drivers).
inline LimitProblem ldp_limit_problem(const ModelSpec& spec, const TimeGrid& grid, Control control,
                                      BranchPolicy branch = BranchPolicy::continue_positive) {
  spec.validate();
  LimitProblem p;
  p.grid = grid;
  p.control = std::move(control);
  p.branch = branch;
  p.noise_dim = spec.noise_dim();
  p.x0 = mean_initial_state(spec);
  const bool tail = !is_small_time(spec.regime);

  if (auto* m = std::get_if<MultiRoughBergomi>(&spec.model)) {
    const std::size_t n = m->factors, ms = m->leading_block();
    const auto M = *m;
    const double rb = M.rho_bar();
    p.drift_kernel.assign(1 + n, KernelSpec::zero());
    p.diffusion_kernel.assign(1, KernelSpec::constant(1.0));
    for (std::size_t i = 0; i < n; ++i) p.diffusion_kernel.push_back(KernelSpec::power_law(M.hurst[0]));
    p.drift = [](std::size_t, double, std::span<const double>, std::span<double> o) {
      std::fill(o.begin(), o.end(), 0.0);
    };
    p.diffusion = [M, n, ms, rb](std::size_t, double, std::span<const double> x, std::span<double> o) {
      const std::size_t q = n + 1;
      std::fill(o.begin(), o.end(), 0.0);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::exp(0.5 * x[1 + i]);
      o[0] = rb * s;
      for (std::size_t j = 0; j < n; ++j) o[1 + j] = M.rho[j] * s;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ms && j <= i; ++j) o[(1 + i) * q + 1 + j] = M.l(i, j);
    };
    p.drift_jacobian = [](std::size_t, double, std::span<const double>, std::span<double> o) {
      std::fill(o.begin(), o.end(), 0.0);
    };
    p.diffusion_jacobian = [M, n, rb](std::size_t, double, std::span<const double> x, std::span<double> o) {
      const std::size_t q = n + 1, d = n + 1;
      std::fill(o.begin(), o.end(), 0.0);
      for (std::size_t e = 0; e < n; ++e) {
        const double ds = 0.5 * std::exp(0.5 * x[1 + e]);
        o[(0 * q + 0) * d + 1 + e] = rb * ds;
        for (std::size_t j = 0; j < n; ++j) o[(0 * q + 1 + j) * d + 1 + e] = M.rho[j] * ds;
      }
    };
    p.nonnegative.assign(1 + n, false);
    return p;
  }

  const VolCoefficients c = vol_coefficients(spec);
  const double rb = std::sqrt(1.0 - c.rho * c.rho);
  const double rho = c.rho, kappa = c.kappa;
  // Small time: drift of X and of Y vanish in the limit. Tails: they survive.
  p.drift_kernel = {KernelSpec::constant(1.0), tail ? c.drift_kernel : KernelSpec::zero()};
  p.diffusion_kernel = {KernelSpec::constant(1.0), c.vol_kernel};
  const bool sqrt_vol = c.sqrt_state;
  auto Sigma = c.Sigma, dSigma = c.dSigma, zeta = c.zeta, dzeta = c.dzeta, vol = c.vol, dvol = c.dvol;
  p.drift = [tail, kappa, Sigma](std::size_t, double, std::span<const double> x, std::span<double> o) {
    if (!tail) {
      o[0] = o[1] = 0.0;
      return;
    }
    o[0] = -0.5 * Sigma(x[1]);
    o[1] = -kappa * x[1];
  };
  p.drift_jacobian = [tail, kappa, dSigma](std::size_t, double, std::span<const double> x, std::span<double> o) {
    std::fill(o.begin(), o.end(), 0.0);
    if (!tail) return;
    o[0 * 2 + 1] = -0.5 * dSigma(x[1]);
    o[1 * 2 + 1] = -kappa;
  };
  p.diffusion = [vol, zeta, rho, rb](std::size_t, double, std::span<const double> x, std::span<double> o) {
    const double s = vol(x[1]);
    o[0] = rb * s;
    o[1] = rho * s;
    o[2] = 0.0;
    o[3] = zeta(x[1]);
  };
  p.diffusion_jacobian = [dvol, dzeta, rho, rb](std::size_t, double, std::span<const double> x, std::span<double> o) {
    std::fill(o.begin(), o.end(), 0.0);
    const double ds = dvol(x[1]);
    o[(0 * 2 + 0) * 2 + 1] = rb * ds;
    o[(0 * 2 + 1) * 2 + 1] = rho * ds;
    o[(1 * 2 + 1) * 2 + 1] = dzeta(x[1]);
  };
  p.nonnegative = {false, sqrt_vol};
  return p;
}

// Linear MDP limit with coefficients frozen at the mean state. Components and
// controls are laid out as in ldp_limit_problem; x0 = 0.
inline LimitProblem mdp_limit_problem(const ModelSpec& spec, const TimeGrid& grid, Control control) {
  spec.validate();
  LimitProblem p;
  p.grid = grid;
  p.control = std::move(control);
  p.noise_dim = spec.noise_dim();
  p.x0.assign(spec.state_dim(), 0.0);
  p.nonnegative.assign(spec.state_dim(), false);
  const std::size_t d = spec.state_dim(), q = spec.noise_dim();
  std::vector<double> sig(d * q, 0.0), gradb(d * d, 0.0);

  if (auto* m = std::get_if<MultiRoughBergomi>(&spec.model)) {
    const std::size_t n = m->factors, ms = m->leading_block();
    double s0 = 0.0;
    for (double y : m->y0) s0 += std::exp(0.5 * y);
    sig[0] = m->rho_bar() * s0;
    for (std::size_t j = 0; j < n; ++j) sig[1 + j] = m->rho[j] * s0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < ms && j <= i; ++j) sig[(1 + i) * q + 1 + j] = m->l(i, j);
    p.drift_kernel.assign(d, KernelSpec::zero());
    p.diffusion_kernel.assign(1, KernelSpec::constant(1.0));
    for (std::size_t i = 0; i < n; ++i) p.diffusion_kernel.push_back(KernelSpec::power_law(m->hurst[0]));
  } else {
    const VolCoefficients c = vol_coefficients(spec);
    const bool tail = !is_small_time(spec.regime);
    const double rb = std::sqrt(1.0 - c.rho * c.rho);
    if (tail) {
      // Tail MDP (Stein-Stein volatility): Ybar = 0, only the Y block is live.
      sig[3] = c.zeta(0.0);
      gradb[3] = -c.kappa;
      p.drift_kernel = {KernelSpec::zero(), c.drift_kernel};
    } else {
      const double s0 = c.vol(c.y0);
      sig[0] = rb * s0;
      sig[1] = c.rho * s0;
      sig[3] = c.zeta(c.y0);
      p.drift_kernel = {KernelSpec::zero(), KernelSpec::zero()};
    }
    p.diffusion_kernel = {KernelSpec::constant(1.0), c.vol_kernel};
  }
  p.drift = [gradb, d](std::size_t, double, std::span<const double> x, std::span<double> o) {
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += gradb[c * d + e] * x[e];
      o[c] = s;
    }
  };
  p.drift_jacobian = [gradb](std::size_t, double, std::span<const double>, std::span<double> o) {
    std::copy(gradb.begin(), gradb.end(), o.begin());
  };
  p.diffusion = [sig](std::size_t, double, std::span<const double>, std::span<double> o) {
    std::copy(sig.begin(), sig.end(), o.begin());
  };
  p.diffusion_jacobian = [](std::size_t, double, std::span<const double>, std::span<double> o) {
    std::fill(o.begin(), o.end(), 0.0);
  };
  return p;
}

// Limit problem matching the model's regime.
inline LimitProblem limit_problem(const ModelSpec& spec, const TimeGrid& grid, Control control,
                                  BranchPolicy branch = BranchPolicy::continue_positive) {
  return is_mdp(spec.regime) ? mdp_limit_problem(spec, grid, std::move(control))
                             : ldp_limit_problem(spec, grid, std::move(control), branch);
}

inline GridFunction solve_mean_limit(const ModelSpec& spec, const TimeGrid& grid) {
  auto p = ldp_limit_problem(spec, grid, Control(grid, spec.noise_dim()));
  return solve_ldp_limit(p).path;
}

}  // namespace voldev
