#pragma once

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "voldev/error.hpp"

namespace voldev {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

namespace detail {

// Plain Gauss series, |w| < 1.
inline double hyp2f1_series(double a, double b, double c, double w) {
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 100000; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * w;
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum) || term == 0.0) return sum;
  }
  throw Error(ErrorCode::no_convergence, "hypergeometric series");
}

}  // namespace detail

// Gauss 2F1(a, b; c; z) for z <= 0.
// Pfaff maps z to w = z/(z-1) in [0, 1); for w > 1/2 the series is continued
// around w = 1 so both pieces converge geometrically.
inline double hyp2f1_nonpositive(double a, double b, double c, double z) {
  if (z > 0.0) throw Error(ErrorCode::domain_error, "hyp2f1_nonpositive needs z <= 0");
  const double w = z / (z - 1.0);
  const double pre = std::pow(1.0 - z, -a);
  const double bb = c - b;
  if (w <= 0.5) return pre * detail::hyp2f1_series(a, bb, c, w);
  const double s = c - a - bb;
  if (std::abs(s - std::round(s)) < 1e-9) return pre * detail::hyp2f1_series(a, bb, c, w);
  using boost::math::tgamma;
  const double one = 1.0 - w;
  const double A = tgamma(c) * tgamma(s) / (tgamma(c - a) * tgamma(c - bb));
  const double B = tgamma(c) * tgamma(-s) / (tgamma(a) * tgamma(bb));
  double first = A * detail::hyp2f1_series(a, bb, 1.0 - s, one);
  double second = 0.0;
  if (std::isfinite(B) && B != 0.0)
    second = B * std::pow(one, s) * detail::hyp2f1_series(c - a, c - bb, s + 1.0, one);
  return pre * (first + second);
}

}  // namespace voldev
