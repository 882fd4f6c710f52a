#pragma once

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "voldev/error.hpp"
#include "voldev/special.hpp"

namespace voldev {

// Volterra kernels. Scalar convolution kernels share the form
// scale * u^p * exp(-lambda u); fbm is the Molchan-Golosov kernel; matrix
// kernels are upper-triangular grids of scalar convolution kernels.
class KernelSpec {
 public:
  enum class Kind { zero, constant, power_law, raw_power, gamma, fbm, matrix };

  static KernelSpec zero() { return KernelSpec(Kind::zero); }

  static KernelSpec constant(double c) {
    KernelSpec k(Kind::constant);
    k.scale_ = c;
    return k;
  }

  // t^{H-1/2} / Gamma(H+1/2). H > -1/2 is accepted so Riemann-Liouville
  // operators of any order in (0, 1] can reuse it.
  static KernelSpec power_law(double hurst) {
    if (!(hurst > -0.5 && hurst <= 1.0)) throw Error(ErrorCode::domain_error, "power_law needs H in (-1/2, 1]");
    KernelSpec k(Kind::power_law);
    k.hurst_ = hurst;
    k.power_ = hurst - 0.5;
    k.scale_ = 1.0 / boost::math::tgamma(hurst + 0.5);
    return k;
  }

  static KernelSpec riemann_liouville(double alpha) { return power_law(alpha - 0.5); }

  static KernelSpec raw_power(double alpha) {
    if (!(alpha > -0.5)) throw Error(ErrorCode::domain_error, "raw_power needs alpha > -1/2");
    KernelSpec k(Kind::raw_power);
    k.power_ = alpha;
    return k;
  }

  static KernelSpec gamma(double hurst, double lambda) {
    if (!(hurst > 0.0 && hurst <= 1.0)) throw Error(ErrorCode::domain_error, "gamma kernel needs H in (0, 1]");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::domain_error, "gamma kernel needs lambda >= 0");
    KernelSpec k(Kind::gamma);
    k.hurst_ = hurst;
    k.power_ = hurst - 0.5;
    k.lambda_ = lambda;
    k.scale_ = 1.0 / boost::math::tgamma(hurst + 0.5);
    return k;
  }

  static KernelSpec fbm(double hurst) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw Error(ErrorCode::domain_error, "fbm kernel needs H in (0, 1)");
    KernelSpec k(Kind::fbm);
    k.hurst_ = hurst;
    k.power_ = hurst - 0.5;
    k.scale_ = 1.0 / boost::math::tgamma(hurst + 0.5);
    return k;
  }

  // Row-major dim x dim entries; entries below the diagonal must be zero.
  static KernelSpec matrix(std::size_t dim, std::vector<KernelSpec> entries) {
    if (dim == 0 || entries.size() != dim * dim) throw Error(ErrorCode::domain_error, "matrix kernel shape");
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        const auto& e = entries[i * dim + j];
        if (e.kind() == Kind::matrix || e.kind() == Kind::fbm)
          throw Error(ErrorCode::wrong_variant, "matrix entries must be scalar convolution kernels");
        if (j < i && e.kind() != Kind::zero)
          throw Error(ErrorCode::domain_error, "matrix kernel must be upper triangular");
      }
    KernelSpec k(Kind::matrix);
    k.dim_ = dim;
    k.entries_ = std::move(entries);
    return k;
  }

  Kind kind() const { return kind_; }
  bool is_scalar_convolution() const { return kind_ != Kind::fbm && kind_ != Kind::matrix; }
  bool is_constant() const { return kind_ == Kind::constant || kind_ == Kind::zero || (power_ == 0.0 && lambda_ == 0.0 && is_scalar_convolution()); }
  bool is_singular() const { return is_scalar_convolution() && kind_ != Kind::zero && power_ < 0.0; }
  double hurst() const { return hurst_; }
  double power() const { return power_; }
  double lambda() const { return lambda_; }
  double scale() const { return scale_; }
  std::size_t dim() const { return kind_ == Kind::matrix ? dim_ : 1; }
  const KernelSpec& entry(std::size_t i, std::size_t j) const { return entries_.at(i * dim_ + j); }

  // gamma in the L2 regularity assumption.
  double regularity_exponent() const {
    switch (kind_) {
      case Kind::zero: return 2.0;
      case Kind::constant: return 1.0;
      case Kind::raw_power: return 1.0 + 2.0 * power_;
      case Kind::power_law:
      case Kind::gamma:
      case Kind::fbm: return 2.0 * hurst_;
      case Kind::matrix: {
        double g = 2.0;
        for (const auto& e : entries_)
          if (e.kind() != Kind::zero) g = std::min(g, e.regularity_exponent());
        return g;
      }
    }
    return 0.0;
  }

  std::optional<double> homogeneity_degree() const {
    switch (kind_) {
      case Kind::constant: return 0.0;
      case Kind::power_law:
      case Kind::raw_power:
      case Kind::fbm: return power_;
      default: return std::nullopt;
    }
  }

  // Convolution kernel value K(t).
  double operator()(double t) const {
    if (!is_scalar_convolution()) throw Error(ErrorCode::wrong_variant, "kernel is not a scalar convolution kernel");
    if (t < 0.0) throw Error(ErrorCode::domain_error, "kernel argument must be >= 0");
    if (kind_ == Kind::zero) return 0.0;
    if (t == 0.0) {
      if (power_ < 0.0) throw Error(ErrorCode::singular_at_zero, "kernel is singular at 0");
      return power_ == 0.0 ? scale_ : 0.0;
    }
    double v = scale_ * (power_ == 0.0 ? 1.0 : std::pow(t, power_));
    if (lambda_ != 0.0) v *= std::exp(-lambda_ * t);
    return v;
  }

  // Non-convolution value K(t, s), 0 < s < t.
  double operator()(double t, double s) const {
    if (kind_ != Kind::fbm) {
      if (!(s < t)) throw Error(ErrorCode::domain_error, "need s < t");
      return (*this)(t - s);
    }
    if (!(s > 0.0 && s < t)) throw Error(ErrorCode::domain_error, "fbm kernel needs 0 < s < t");
    const double H = hurst_;
    return scale_ * std::pow(t - s, power_) * hyp2f1_nonpositive(H - 0.5, 0.5 - H, H + 0.5, 1.0 - t / s);
  }

  // \int_lo^hi u^order K(u) du for scalar convolution kernels.
  double moment(int order, double lo, double hi) const {
    if (!is_scalar_convolution()) throw Error(ErrorCode::wrong_variant, "moment needs a scalar convolution kernel");
    if (kind_ == Kind::zero || hi <= lo) return 0.0;
    return scale_ * power_moment(power_ + order, lambda_, lo, hi);
  }

  // \int_0^t K(u)^2 du.
  double l2_norm_sq(double t) const {
    if (!is_scalar_convolution()) throw Error(ErrorCode::wrong_variant, "l2_norm_sq needs a scalar convolution kernel");
    if (kind_ == Kind::zero || t <= 0.0) return 0.0;
    if (!(2.0 * power_ > -1.0)) throw Error(ErrorCode::domain_error, "kernel is not square integrable");
    return scale_ * scale_ * power_moment(2.0 * power_, 2.0 * lambda_, 0.0, t);
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::zero: return "zero";
      case Kind::constant: return "constant";
      case Kind::power_law: return "power_law";
      case Kind::raw_power: return "raw_power";
      case Kind::gamma: return "gamma";
      case Kind::fbm: return "fbm";
      case Kind::matrix: return "matrix";
    }
    return "";
  }

 private:
  explicit KernelSpec(Kind k) : kind_(k) {}

  // \int_lo^hi u^q exp(-lam u) du, q > -1.
  static double power_moment(double q, double lam, double lo, double hi) {
    const double e = q + 1.0;
    if (lam == 0.0) {
      if (lo == 0.0) return std::pow(hi, e) / e;
      return (std::pow(hi, e) - std::pow(lo, e)) / e;
    }
    using boost::math::tgamma_lower;
    return std::pow(lam, -e) * (tgamma_lower(e, lam * hi) - (lo > 0.0 ? tgamma_lower(e, lam * lo) : 0.0));
  }

  Kind kind_;
  double hurst_ = 0.5;
  double power_ = 0.0;
  double lambda_ = 0.0;
  double scale_ = 1.0;
  std::size_t dim_ = 1;
  std::vector<KernelSpec> entries_;
};

struct RegularityReport {
  std::vector<double> h;
  std::vector<double> value;
  double fitted_slope = 0.0;
  double gamma_claim = 0.0;
  bool pass = false;
};

namespace detail {

inline double increment_energy(const KernelSpec& k, double h, double horizon) {
  if (k.kind() == KernelSpec::Kind::zero) return 0.0;
  if (k.is_constant() && k.kind() != KernelSpec::Kind::raw_power) return k.l2_norm_sq(h);
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [&](double t) {
    if (t <= 0.0) return 0.0;
    const double d = k(t + h) - k(t);
    return d * d;
  };
  double tail = ts.integrate(f, 0.0, std::min(h, horizon), 1e-12);
  if (horizon > h) tail += ts.integrate(f, h, horizon, 1e-12);
  return k.l2_norm_sq(h) + tail;
}

}  // namespace detail

// Fits the slope of log(\int_0^h |K|^2 + \int_0^T |K(t+h)-K(t)|^2) against log h.
inline RegularityReport check_regularity(const KernelSpec& k, double gamma_claim, const std::vector<double>& h_grid,
                                         double horizon = 1.0, double tolerance = 0.05) {
  if (k.kind() == KernelSpec::Kind::fbm) throw Error(ErrorCode::wrong_variant, "regularity check needs a convolution kernel");
  if (h_grid.size() < 2) throw Error(ErrorCode::domain_error, "need at least two h values");
  RegularityReport r;
  r.h = h_grid;
  r.gamma_claim = gamma_claim;
  for (double h : h_grid) {
    double v = 0.0;
    if (k.kind() == KernelSpec::Kind::matrix) {
      for (std::size_t i = 0; i < k.dim(); ++i)
        for (std::size_t j = 0; j < k.dim(); ++j) v += detail::increment_energy(k.entry(i, j), h, horizon);
    } else {
      v = detail::increment_energy(k, h, horizon);
    }
    r.value.push_back(v);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(h_grid.size());
  for (std::size_t i = 0; i < h_grid.size(); ++i) {
    const double x = std::log(h_grid[i]), y = std::log(r.value[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  r.fitted_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  r.pass = r.fitted_slope >= gamma_claim - tolerance;
  return r;
}

}  // namespace voldev
