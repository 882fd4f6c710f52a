#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>

#include "voldev/grid.hpp"
#include "voldev/quadrature.hpp"

namespace voldev {

class FracOrder {
 public:
  explicit FracOrder(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::domain_error, "fractional order must lie in (0, 1]");
  }
  double value() const { return alpha_; }

 private:
  double alpha_;
};

// I^alpha f on the nodes of f's grid, piecewise-linear product integration.
inline GridFunction rl_integral(const GridFunction& f, FracOrder alpha) {
  if (f.dim() != 1) throw Error(ErrorCode::domain_error, "rl_integral expects a scalar function");
  ProductWeights w(KernelSpec::riemann_liouville(alpha.value()), f.grid());
  return GridFunction(f.grid(), w.apply(f.values()));
}

// D^alpha f = f(0) t^{-alpha} / Gamma(1-alpha) + D^alpha (f - f(0)), the second
// term by inverting the product-integration weights of I^alpha (forward
// substitution, derivative held constant on the first interval). Node 0
// carries +inf when f(0) != 0; otherwise it copies node 1.
inline GridFunction rl_derivative(const GridFunction& f, FracOrder alpha, double f0) {
  if (f.dim() != 1) throw Error(ErrorCode::domain_error, "rl_derivative expects a scalar function");
  const TimeGrid& g = f.grid();
  const std::size_t n = g.n_steps();
  const double a = alpha.value();
  GridFunction out(g, 1);
  if (a == 1.0) {
    for (std::size_t i = 1; i <= n; ++i) out(i) = (f(i) - f(i - 1)) / g.step(i - 1);
    out(0) = out(1);
    return out;
  }
  ProductWeights w(KernelSpec::riemann_liouville(a), g);
  w.hold_first_interval();
  const double g1 = boost::math::tgamma(1.0 - a);
  for (std::size_t i = 1; i <= n; ++i) {
    CompensatedSum s;
    s.add(f(i) - f0);
    for (std::size_t j = 1; j < i; ++j) s.add(-w(i, j) * out(j));
    out(i) = s.value() / w(i, i);
  }
  if (f0 != 0.0)
    for (std::size_t i = 1; i <= n; ++i) out(i) += f0 * std::pow(g[i], -a) / g1;
  out(0) = f0 != 0.0 ? std::numeric_limits<double>::infinity() : out(1);
  return out;
}

// Trapezoid weights of the grid, zeroing node 0 when the integrand is not finite there.
inline std::vector<double> trapezoid_weights(const TimeGrid& g) {
  std::vector<double> w(g.size(), 0.0);
  for (std::size_t m = 0; m < g.n_steps(); ++m) {
    w[m] += 0.5 * g.step(m);
    w[m + 1] += 0.5 * g.step(m);
  }
  return w;
}

// 1/2 \int_0^T |v|^2 dt by the trapezoid rule.
inline double energy(const GridFunction& v) {
  const auto w = trapezoid_weights(v.grid());
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < v.dim(); ++c) sq += v(i, c) * v(i, c);
    if (i == 0 && !std::isfinite(sq)) continue;
    e += w[i] * sq;
  }
  return 0.5 * e;
}

// Second-order nodal derivative (one-sided at the ends).
inline GridFunction node_derivative(const GridFunction& f) {
  const TimeGrid& g = f.grid();
  const std::size_t n = g.n_steps();
  GridFunction out(g, f.dim());
  for (std::size_t c = 0; c < f.dim(); ++c) {
    if (n == 1) {
      out(0, c) = out(1, c) = (f(1, c) - f(0, c)) / g.step(0);
      continue;
    }
    for (std::size_t i = 1; i < n; ++i) {
      const double h0 = g.step(i - 1), h1 = g.step(i);
      out(i, c) = (h0 * h0 * f(i + 1, c) - h1 * h1 * f(i - 1, c) + (h1 * h1 - h0 * h0) * f(i, c)) / (h0 * h1 * (h0 + h1));
    }
    {
      const double h0 = g.step(0), h1 = g.step(1);
      out(0, c) = (-(2 * h0 + h1) * h1 * f(0, c) + (h0 + h1) * (h0 + h1) * f(1, c) - h0 * h0 * f(2, c)) /
                  (h0 * h1 * (h0 + h1));
    }
    {
      const double h0 = g.step(n - 2), h1 = g.step(n - 1);
      out(n, c) = (h1 * h1 * f(n - 2, c) - (h0 + h1) * (h0 + h1) * f(n - 1, c) + (2 * h1 + h0) * h0 * f(n, c)) /
                  (h0 * h1 * (h0 + h1));
    }
  }
  return out;
}

}  // namespace voldev
