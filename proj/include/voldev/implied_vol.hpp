#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "voldev/rate_functions.hpp"
#include "voldev/special.hpp"
#include "voldev/sve_sim.hpp"

namespace voldev {

enum class SmileSource { asymptotic_ldp, asymptotic_mdp, asymptotic_tail, monte_carlo };

inline const char* to_string(SmileSource s) {
  switch (s) {
    case SmileSource::asymptotic_ldp: return "asymptotic_ldp";
    case SmileSource::asymptotic_mdp: return "asymptotic_mdp";
    case SmileSource::asymptotic_tail: return "asymptotic_tail";
    case SmileSource::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

struct SmilePoint {
  double t = 0.0;
  double k = 0.0;  // log-moneyness of the quoted strike
  double implied_vol = 0.0;
  SmileSource source = SmileSource::asymptotic_ldp;
  std::optional<double> std_error;  // Monte Carlo only
  // Asymptotic LDP points: the implied vol at (t, k) is about implied_vol * normalization.
  double normalization = 1.0;
  std::string flag;  // "clipped" / "dropped" for Monte Carlo points
};

// Black-Scholes call, spot 1, strike e^k, zero rates.
inline double bs_call(double t, double k, double sigma) {
  if (!(t > 0.0) || sigma < 0.0) throw Error(ErrorCode::domain_error, "bs_call needs t > 0 and sigma >= 0");
  const double K = std::exp(k);
  const double s = sigma * std::sqrt(t);
  if (s == 0.0) return std::max(1.0 - K, 0.0);
  const double d1 = -k / s + 0.5 * s, d2 = d1 - s;
  // In the money the put plus parity keeps the time value's digits.
  if (k < 0.0) return K * normal_cdf(-d2) - normal_cdf(-d1) + (1.0 - K);
  return normal_cdf(d1) - K * normal_cdf(d2);
}

inline double bs_put(double t, double k, double sigma) {
  if (!(t > 0.0) || sigma < 0.0) throw Error(ErrorCode::domain_error, "bs_put needs t > 0 and sigma >= 0");
  const double K = std::exp(k);
  const double s = sigma * std::sqrt(t);
  if (s == 0.0) return std::max(K - 1.0, 0.0);
  const double d1 = -k / s + 0.5 * s, d2 = d1 - s;
  if (k > 0.0) return normal_cdf(d1) - K * normal_cdf(d2) + (K - 1.0);
  return K * normal_cdf(-d2) - normal_cdf(-d1);
}

inline double bs_vega(double t, double k, double sigma) {
  const double s = sigma * std::sqrt(t);
  if (s == 0.0) return 0.0;
  return normal_pdf(-k / s + 0.5 * s) * std::sqrt(t);
}

// Root of bs_call(t, k, .) = price by safeguarded Newton, price tolerance 1e-10.
inline double implied_vol(double price, double t, double k) {
  if (!(t > 0.0)) throw Error(ErrorCode::domain_error, "implied_vol needs t > 0");
  const double intrinsic = std::max(1.0 - std::exp(k), 0.0);
  if (!(price > intrinsic) || !(price < 1.0))
    throw Error(ErrorCode::price_out_of_bounds,
                "price " + std::to_string(price) + " outside (" + std::to_string(intrinsic) + ", 1)");
  // Work with the out-of-the-money side.
  const bool put = k < 0.0;
  const double target = put ? price - (1.0 - std::exp(k)) : price;
  auto value = [&](double v) { return put ? bs_put(t, k, v) : bs_call(t, k, v); };
  double hi = 1.0;
  while (value(hi) < target) {
    hi *= 2.0;
    if (hi > 1e6) throw Error(ErrorCode::price_out_of_bounds, "price too close to the spot");
  }
  // Newton inside a shrinking bracket, bisecting whenever a step leaves it.
  double lo = 0.0, s = 0.5 * hi;
  for (int it = 0; it < 300; ++it) {
    const double f = value(s) - target;
    if (f == 0.0) break;
    (f < 0.0 ? lo : hi) = s;
    const double v = bs_vega(t, k, s);
    double next = v > 0.0 ? s - f / v : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 4.0 * std::numeric_limits<double>::epsilon() * s) {
      s = next;
      break;
    }
    s = next;
  }
  if (std::abs(bs_call(t, k, s) - price) > 1e-10)
    throw Error(ErrorCode::no_convergence, "implied vol did not reach the price tolerance");
  return s;
}

struct SmileOptions {
  TerminalRateOptions rate{0, 1.0, 128, 4.0, {}};
  std::size_t grid_points = 17;
  double grid_span = 8.0;
};

namespace detail {

// inf over a geometric grid {a, ..., span*a} (a > 0, mirrored for a < 0) of the
// terminal X-rate at the configured horizon; a lone evaluation at a when the
// rate is known to be monotone.
inline double grid_infimum(const ModelSpec& spec, double a, const SmileOptions& opt, bool monotone) {
  const std::size_t m = monotone ? 1 : opt.grid_points;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double x = m == 1 ? a : a * std::pow(opt.grid_span, static_cast<double>(i) / (m - 1));
    double r;
    try {
      r = ldp_rate_terminal(spec, x, opt.rate).value;
    } catch (const Error& e) {
      throw Error(ErrorCode::rate_unavailable, std::string("rate at x = ") + std::to_string(x) + ": " + e.what());
    }
    best = std::min(best, r);
  }
  return best;
}

inline bool uncorrelated(const ModelSpec& spec) {
  return std::visit(
      [](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, MultiRoughBergomi>) {
          for (double r : m.rho)
            if (r != 0.0) return false;
          return true;
        } else {
          return m.rho == 0.0;
        }
      },
      spec.model);
}

}  // namespace detail

// Small-time LDP smile: sigma^2 = k^2 / (2 inf_{x >= k} I^X_1(x)); the quoted
// strike is k t^{1/2-H} and the implied vol there blows up like t^{H-1/2}.
inline SmilePoint smile_ldp(ModelSpec spec, double k, double t, const SmileOptions& opt = {}) {
  if (k == 0.0) throw Error(ErrorCode::domain_error, "smile_ldp needs k != 0");
  if (!(t > 0.0)) throw Error(ErrorCode::domain_error, "smile_ldp needs t > 0");
  spec.regime = SmallTimeLDP{1.0};
  const double H = spec.hurst();
  SmileOptions o = opt;
  o.rate.component = 0;
  o.rate.horizon = 1.0;
  const double inf = detail::grid_infimum(spec, k, o, detail::uncorrelated(spec));
  SmilePoint p;
  p.t = t;
  p.k = k * std::pow(t, 0.5 - H);
  p.implied_vol = std::isinf(inf) ? 0.0 : std::abs(k) / std::sqrt(2.0 * inf);
  p.normalization = std::pow(t, H - 0.5);
  p.source = SmileSource::asymptotic_ldp;
  return p;
}

// Small-time MDP smile: strike independent, sigma^2 = Sigma(y0).
inline SmilePoint smile_mdp(const ModelSpec& spec, double k, double t, double beta) {
  if (k == 0.0) throw Error(ErrorCode::domain_error, "smile_mdp needs k != 0");
  const double H = spec.hurst();
  if (!(beta > 0.0 && beta < H)) throw Error(ErrorCode::domain_error, "beta must lie in (0, H)");
  ModelSpec s = spec;
  s.regime = SmallTimeMDP{1.0, beta};
  const double S = detail::sigma_at_mean(s);
  if (!(S > 0.0)) throw Error(ErrorCode::degenerate_coefficients, "Sigma(y0) = 0");
  SmilePoint p;
  p.t = t;
  p.k = k * std::pow(t, 0.5 - beta);
  p.implied_vol = std::sqrt(S);
  p.source = SmileSource::asymptotic_mdp;
  return p;
}

// Large-strike smile: sigma^2 t / k -> 1 / (2 inf_{y >= 1} I^X_t(y)).
inline SmilePoint smile_tail(ModelSpec spec, double t, double k, const SmileOptions& opt = {}) {
  if (!(t > 0.0)) throw Error(ErrorCode::domain_error, "smile_tail needs t > 0");
  if (!(k > 0.0)) throw Error(ErrorCode::domain_error, "smile_tail needs k > 0");
  spec.regime = TailLDP{1.0};
  SmileOptions o = opt;
  o.rate.component = 0;
  o.rate.horizon = t;
  const double inf = detail::grid_infimum(spec, 1.0, o, false);
  SmilePoint p;
  p.t = t;
  p.k = k;
  p.implied_vol = std::isinf(inf) ? 0.0 : std::sqrt(k / (2.0 * t * inf));
  p.source = SmileSource::asymptotic_tail;
  return p;
}

struct McSmileOptions {
  std::size_t n_steps = 32;
  std::size_t threads = 0;
};

struct McPrices {
  std::vector<double> call, put, call_se, put_se;
  double forward = 0.0, forward_se = 0.0;  // E e^{X_t}
};

// Plain Monte Carlo calls and puts on the unscaled model at maturity t.
inline McPrices mc_prices(ModelSpec spec, double t, const std::vector<double>& strikes, std::size_t n_paths,
                          std::uint64_t seed, const McSmileOptions& opt = {}) {
  spec.regime = SmallTimeLDP{1.0};
  Simulator sim(spec, TimeGrid::uniform(t, opt.n_steps));
  const std::size_t m = strikes.size(), last = opt.n_steps * sim.dim();
  std::vector<double> terminal(n_paths);
  for_each_path(sim, n_paths, seed, opt.threads,
                [&](std::size_t p, std::span<const double> path, double) { terminal[p] = path[last]; });
  McPrices out;
  out.call.assign(m, 0.0);
  out.put.assign(m, 0.0);
  out.call_se.assign(m, 0.0);
  out.put_se.assign(m, 0.0);
  double f1 = 0.0, f2 = 0.0;
  std::vector<double> c2(m, 0.0), p2(m, 0.0);
  for (double x : terminal) {
    const double s = std::exp(x);
    f1 += s;
    f2 += s * s;
    for (std::size_t j = 0; j < m; ++j) {
      const double K = std::exp(strikes[j]);
      const double c = std::max(s - K, 0.0), q = std::max(K - s, 0.0);
      out.call[j] += c;
      c2[j] += c * c;
      out.put[j] += q;
      p2[j] += q * q;
    }
  }
  const double n = static_cast<double>(n_paths);
  auto se = [n](double s1, double s2) { return std::sqrt(std::max(s2 / n - (s1 / n) * (s1 / n), 0.0) / (n - 1.0)); };
  for (std::size_t j = 0; j < m; ++j) {
    out.call_se[j] = se(out.call[j], c2[j]);
    out.put_se[j] = se(out.put[j], p2[j]);
    out.call[j] /= n;
    out.put[j] /= n;
  }
  out.forward_se = se(f1, f2);
  out.forward = f1 / n;
  return out;
}

// Monte Carlo smile: out-of-the-money option per strike (put below the money,
// priced through parity), inverted to implied vol with delta-method errors.
inline std::vector<SmilePoint> mc_smile(const ModelSpec& spec, double t, const std::vector<double>& strikes,
                                        std::size_t n_paths, std::uint64_t seed, const McSmileOptions& opt = {}) {
  if (n_paths < 2) throw Error(ErrorCode::domain_error, "mc_smile needs at least 2 paths");
  const McPrices pr = mc_prices(spec, t, strikes, n_paths, seed, opt);
  std::vector<SmilePoint> out;
  for (std::size_t j = 0; j < strikes.size(); ++j) {
    const double k = strikes[j];
    const bool use_put = k < 0.0;
    double price = use_put ? pr.put[j] + 1.0 - std::exp(k) : pr.call[j];
    const double se = use_put ? pr.put_se[j] : pr.call_se[j];
    SmilePoint p;
    p.t = t;
    p.k = k;
    p.source = SmileSource::monte_carlo;
    const double intrinsic = std::max(1.0 - std::exp(k), 0.0);
    if (price <= intrinsic) {
      price = intrinsic + 1e-12;
      p.flag = "clipped";
    }
    try {
      p.implied_vol = implied_vol(price, t, k);
      const double vega = bs_vega(t, k, p.implied_vol);
      p.std_error = vega > 0.0 ? se / vega : std::numeric_limits<double>::infinity();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::price_out_of_bounds) throw;
      p.implied_vol = std::numeric_limits<double>::quiet_NaN();
      p.flag = "dropped";
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace voldev
