#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voldev/grid.hpp"
#include "voldev/kernels.hpp"

namespace voldev {

// Neumaier compensated sum; the history sums of the limit solvers cancel to
// near zero on paths that touch a square-root boundary.
struct CompensatedSum {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

enum class Interpolation { piecewise_linear, left_constant };

// Product-integration weights w(i, j) with
//   \int_0^{t_i} K(t_i - s) f(s) ds  ~  sum_j w(i, j) f(t_j)
// for piecewise-linear (or left-constant) interpolation of f between nodes.
// Uniform grids store one row of lag coefficients, other grids a triangle.
class ProductWeights {
 public:
  ProductWeights() = default;

  ProductWeights(const KernelSpec& kernel, const TimeGrid& grid, Interpolation interp = Interpolation::piecewise_linear)
      : n_(grid.n_steps()), uniform_(grid.is_uniform()), interp_(interp) {
    if (!kernel.is_scalar_convolution())
      throw Error(ErrorCode::wrong_variant, "product weights need a scalar convolution kernel");
    zero_ = kernel.kind() == KernelSpec::Kind::zero;
    if (uniform_) {
      const double dt = grid.dt();
      left_.resize(n_);
      right_.resize(n_);
      for (std::size_t k = 0; k < n_; ++k)
        shape(kernel, static_cast<double>(k) * dt, static_cast<double>(k + 1) * dt, left_[k], right_[k]);
    } else {
      left_.resize(n_ * (n_ + 1) / 2);
      right_.resize(left_.size());
      for (std::size_t i = 1; i <= n_; ++i)
        for (std::size_t m = 0; m < i; ++m) {
          const std::size_t idx = tri(i, m);
          shape(kernel, grid[i] - grid[m + 1], grid[i] - grid[m], left_[idx], right_[idx]);
        }
    }
  }

  std::size_t n_steps() const { return n_; }
  bool is_zero() const { return zero_; }

  // Carry f on [t_0, t_1] at its node-1 value, for integrands whose node-0
  // sample misses a finite limit at 0+.
  void hold_first_interval() { hold_first_ = true; }
  bool holds_first_interval() const { return hold_first_; }

  // \int_{t_m}^{t_{m+1}} K(t_i - s) ds for m < i.
  double interval_mass(std::size_t i, std::size_t m) const {
    const std::size_t idx = uniform_ ? i - m - 1 : tri(i, m);
    return left_[idx] + right_[idx];
  }

  double operator()(std::size_t i, std::size_t j) const {
    if (j > i || i == 0) return 0.0;
    if (interp_ == Interpolation::left_constant) return j < i ? interval_mass(i, j) : 0.0;
    auto left = [&](std::size_t m) { return uniform_ ? left_[i - m - 1] : left_[tri(i, m)]; };
    if (hold_first_ && j == 0) return 0.0;
    double w = 0.0;
    if (j < i) w += left(j);
    if (j >= 1) w += uniform_ ? right_[i - j] : right_[tri(i, j - 1)];
    if (hold_first_ && j == 1) w += left(0);
    return w;
  }

  // sum_{j < i} w(i, j) f_j, reading f_j = data[j * stride + offset]; the
  // diagonal term is left to the caller.
  double history(std::size_t i, const double* data, std::size_t stride, std::size_t offset = 0) const {
    if (zero_ || i == 0) return 0.0;
    double s = 0.0;
    for (std::size_t j = 0; j < i; ++j) s += (*this)(i, j) * data[j * stride + offset];
    return s;
  }

  void history(std::size_t i, const double* data, std::size_t stride, std::size_t offset, CompensatedSum& acc) const {
    if (zero_ || i == 0) return;
    for (std::size_t j = 0; j < i; ++j) acc.add((*this)(i, j) * data[j * stride + offset]);
  }

  std::vector<double> apply(std::span<const double> f) const {
    std::vector<double> out(n_ + 1, 0.0);
    if (zero_) return out;
    for (std::size_t i = 1; i <= n_; ++i) out[i] = history(i, f.data(), 1) + (*this)(i, i) * f[i];
    return out;
  }

 private:
  static std::size_t tri(std::size_t i, std::size_t m) { return (i - 1) * i / 2 + m; }

  // Left-node and right-node coefficients of one interval: u = t_i - s runs
  // over [lo, hi], the left node of the interval sits at u = hi.
  static void shape(const KernelSpec& k, double lo, double hi, double& left, double& right) {
    const double h = hi - lo;
    if (k.kind() == KernelSpec::Kind::zero) {
      left = right = 0.0;
      return;
    }
    if (lo > 0.0 && h <= lo) {
      using GL = boost::math::quadrature::gauss<double, 15>;
      const auto& x = GL::abscissa();
      const auto& w = GL::weights();
      double a = 0.0, b = 0.0;
      auto add = [&](double z, double wt) {
        const double u = lo + 0.5 * h * (1.0 + z);
        const double kv = k(u) * wt * 0.5 * h;
        const double frac = (u - lo) / h;
        a += kv * frac;
        b += kv * (1.0 - frac);
      };
      add(0.0, w[0]);
      for (std::size_t q = 1; q < x.size(); ++q) {
        add(x[q], w[q]);
        add(-x[q], w[q]);
      }
      left = a;
      right = b;
      return;
    }
    const double m0 = k.moment(0, lo, hi);
    const double m1 = k.moment(1, lo, hi);
    left = (m1 - lo * m0) / h;
    right = (hi * m0 - m1) / h;
  }

  std::size_t n_ = 0;
  bool uniform_ = true;
  bool zero_ = false;
  bool hold_first_ = false;
  Interpolation interp_ = Interpolation::piecewise_linear;
  std::vector<double> left_, right_;
};

}  // namespace voldev
