#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <cstdint>
#include <span>
#include <memory>
#include <optional>
#include <vector>

#include "voldev/models.hpp"
#include "voldev/parallel.hpp"
#include "voldev/rng.hpp"

namespace voldev {

struct PathEnsemble {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::size_t dim = 0;
  std::vector<double> paths;        // path-major, then node, then component
  std::vector<double> log_weights;  // empty for plain simulation
  std::uint64_t seed = 0;

  double operator()(std::size_t path, std::size_t node, std::size_t c = 0) const {
    return paths[(path * grid.size() + node) * dim + c];
  }
};

// Joint law of (dW_0..dW_{n-1}, G_1..G_n) with G_i = \int_0^{t_i} K(t_i-u) dW_u.
class GaussianVolterraFactor {
 public:
  GaussianVolterraFactor(const KernelSpec& k, const TimeGrid& g) : mass_(k, g, Interpolation::left_constant) {
    const std::size_t n = g.n_steps();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (std::size_t j = 0; j < n; ++j) C(j, j) = g.step(j);
    boost::math::quadrature::tanh_sinh<double> ts;
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t j = 0; j < i; ++j) C(n + i - 1, j) = C(j, n + i - 1) = mass_.interval_mass(i, j);
      C(n + i - 1, n + i - 1) = k.l2_norm_sq(g[i]);
      for (std::size_t l = 1; l < i; ++l) {
        const double d = g[i] - g[l];
        double c;
        if (k.is_constant()) {
          c = k(1.0) * k(1.0) * g[l];
        } else {
          c = ts.integrate([&](double w) { return w <= 0.0 ? 0.0 : k(w + d) * k(w); }, 0.0, g[l], 1e-13);
        }
        C(n + i - 1, n + l - 1) = C(n + l - 1, n + i - 1) = c;
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) {
      C.diagonal().array() += 1e-12 * C.trace() / static_cast<double>(2 * n);
      llt.compute(C);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::factorization_failure, "Volterra covariance is not positive definite");
    }
    L_ = llt.matrixL();
  }

  // out = L z, first n entries dW, last n entries G_1..G_n.
  void sample(const double* z, double* out) const {
    const Eigen::Index m = L_.rows();
    for (Eigen::Index r = 0; r < m; ++r) {
      double s = 0.0;
      const double* row = L_.data() + r * m;
      for (Eigen::Index c = 0; c <= r; ++c) s += row[c] * z[c];
      out[r] = s;
    }
  }

  const ProductWeights& mass() const { return mass_; }

 private:
  ProductWeights mass_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> L_;
};

// Full truncation: the square-root argument never sees a negative state.
inline double heston_step_policy(double y_prev, double increment) {
  return y_prev + std::sqrt(std::max(y_prev, 0.0)) * increment;
}

// Simulates the rescaled model of a ModelSpec (optionally under a Girsanov
// shift by a control) on a fixed grid. Each path is a pure function of
// (seed, path index).
class Simulator {
 public:
  Simulator(ModelSpec spec, TimeGrid grid, std::optional<Control> control = std::nullopt)
      : spec_(std::move(spec)), grid_(std::move(grid)) {
    spec_.validate();
    n_ = grid_.n_steps();
    const std::size_t q = spec_.noise_dim();
    if (control) {
      if (!(control->grid() == grid_) || control->dim() != q)
        throw Error(ErrorCode::domain_error, "control must live on the simulation grid with one entry per driver");
      control_ = std::move(control);
    }
    eps_ = regime_epsilon(spec_.regime);
    theta_ = spec_.noise_scale();
    hmdp_ = spec_.mdp_scale();
    shift_ = is_mdp(spec_.regime) ? hmdp_ : 1.0 / theta_;
    small_ = is_small_time(spec_.regime);
    mean_ = mean_initial_state(spec_);

    if (auto* m = std::get_if<MultiRoughBergomi>(&spec_.model)) {
      for (std::size_t j = 0; j < m->factors; ++j) {
        if (j > 0 && m->hurst[j] == m->hurst[j - 1]) {
          factors_.push_back(factors_.back());
        } else {
          factors_.push_back(std::make_shared<GaussianVolterraFactor>(KernelSpec::power_law(m->hurst[j]), grid_));
        }
      }
    } else {
      coef_ = vol_coefficients(spec_);
      if (coef_.sqrt_state) {
        mass_ = ProductWeights(coef_.vol_kernel, grid_, Interpolation::left_constant);
        pair_chol_.resize(3 * n_);
        for (std::size_t j = 0; j < n_; ++j) {
          const double h = grid_.step(j);
          const double c = mass_.interval_mass(j + 1, j), v = coef_.vol_kernel.l2_norm_sq(h);
          const double l11 = std::sqrt(h), l21 = c / l11;
          pair_chol_[3 * j] = l11;
          pair_chol_[3 * j + 1] = l21;
          pair_chol_[3 * j + 2] = std::sqrt(std::max(v - l21 * l21, 0.0));
        }
      } else {
        factors_.push_back(std::make_shared<GaussianVolterraFactor>(coef_.vol_kernel, grid_));
      }
    }
  }

  const TimeGrid& grid() const { return grid_; }
  std::size_t dim() const { return spec_.state_dim(); }
  bool controlled() const { return control_.has_value(); }

  // Writes one path ((n+1) * dim values) and returns its Girsanov log weight.
  double path(std::uint64_t seed, std::size_t index, std::span<double> out) const {
    PhiloxStream rng(seed, index);
    const std::size_t n = n_, d = dim();
    thread_local std::vector<double> z, dw, g, dbp;
    double logw = 0.0;
    auto ctl = [&](std::size_t j, std::size_t k) { return control_ ? (*control_)(j, k) : 0.0; };
    auto draw = [&](std::vector<double>& v, std::size_t m) {
      v.resize(m);
      for (auto& x : v) x = rng.normal();
    };
    auto girsanov = [&](const double* raw, std::size_t k) {
      if (!control_) return;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = ctl(j, k);
        logw += -shift_ * v * raw[j] - 0.5 * shift_ * shift_ * v * v * grid_.step(j);
      }
    };

    if (auto* m = std::get_if<MultiRoughBergomi>(&spec_.model)) {
      const std::size_t f = m->factors;
      std::vector<double> dW(f * n), G(f * (n + 1), 0.0);
      for (std::size_t j = 0; j < f; ++j) {
        draw(z, 2 * n);
        g.resize(2 * n);
        factors_[j]->sample(z.data(), g.data());
        girsanov(g.data(), 1 + j);
        for (std::size_t s = 0; s < n; ++s) dW[j * n + s] = g[s] + shift_ * ctl(s, 1 + j) * grid_.step(s);
        for (std::size_t i = 1; i <= n; ++i) {
          double sh = 0.0;
          if (control_)
            for (std::size_t s = 0; s < i; ++s) sh += factors_[j]->mass().interval_mass(i, s) * ctl(s, 1 + j);
          G[j * (n + 1) + i] = g[n + i - 1] + shift_ * sh;
        }
      }
      draw(dbp, n);
      for (std::size_t s = 0; s < n; ++s) dbp[s] *= std::sqrt(grid_.step(s));
      girsanov(dbp.data(), 0);
      const double H1 = m->hurst[0];
      const double cx = std::pow(eps_, H1 + 0.5), rb = m->rho_bar();
      double x = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        const double t = grid_[i];
        double S = 0.0, V = 0.0;
        for (std::size_t a = 0; a < f; ++a) {
          double y = m->y0[a] - m->a[a] * std::pow(eps_ * t, 2.0 * H1);
          for (std::size_t b = 0; b <= a; ++b) y += std::pow(eps_, m->hurst[b]) * m->l(a, b) * G[b * (n + 1) + i];
          out[i * d + 1 + a] = y;
          S += std::exp(0.5 * y);
          V += std::exp(y);
        }
        out[i * d] = x;
        if (i == n) break;
        double dB = rb * (dbp[i] + shift_ * ctl(i, 0) * grid_.step(i));
        for (std::size_t b = 0; b < f; ++b) dB += m->rho[b] * dW[b * n + i];
        x += -0.5 * cx * V * grid_.step(i) + theta_ * S * dB;
      }
      finish(out);
      return logw;
    }

    const VolCoefficients& c = coef_;
    const double rho = c.rho, rb = std::sqrt(1.0 - rho * rho);
    // Rescaled coefficients of the volatility equation.
    const double y_start = small_ ? c.y0 : (c.sqrt_state ? eps_ * eps_ * c.y0 : eps_ * c.y0);
    const double th = small_ ? c.theta : (c.sqrt_state ? eps_ * eps_ * c.theta : eps_ * c.theta);
    const double cd = small_ ? std::pow(eps_, 1.0 + c.drift_degree) : 1.0;
    const double cx = small_ ? std::pow(eps_, c.hurst + 0.5) : 1.0;
    thread_local std::vector<double> Y;
    Y.assign(n + 1, 0.0);
    dw.resize(n);

    if (c.sqrt_state) {
      // Hybrid Euler: exact Gaussian pair on the newest interval, kernel
      // averages against the increments on older ones.
      draw(z, 2 * n);
      std::vector<double> N(n);
      for (std::size_t j = 0; j < n; ++j) {
        dw[j] = pair_chol_[3 * j] * z[2 * j];
        N[j] = pair_chol_[3 * j + 1] * z[2 * j] + pair_chol_[3 * j + 2] * z[2 * j + 1];
      }
      girsanov(dw.data(), 1);
      std::vector<double> F(n);  // forcing of the far-lag sum
      Y[0] = y_start;
      for (std::size_t i = 1; i <= n; ++i) {
        const std::size_t j = i - 1;
        const double yp = std::max(Y[j], 0.0), h = grid_.step(j), v = ctl(j, 1);
        const double b = cd * c.kappa * (th - yp);
        const double sq = theta_ * c.zeta(yp);
        F[j] = b + sq * (dw[j] / h + shift_ * v);
        double s = y_start;
        for (std::size_t l = 0; l + 1 < i; ++l) s += mass_.interval_mass(i, l) * F[l];
        const double a = mass_.interval_mass(i, j);
        s += a * b + sq * (N[j] + shift_ * v * a);
        Y[i] = s;
      }
    } else if (auto* bg = std::get_if<RoughBergomi>(&spec_.model)) {
      draw(z, 2 * n);
      g.resize(2 * n);
      factors_[0]->sample(z.data(), g.data());
      for (std::size_t j = 0; j < n; ++j) dw[j] = g[j];
      girsanov(dw.data(), 1);
      Y[0] = c.y0;
      for (std::size_t i = 1; i <= n; ++i) {
        double sh = 0.0;
        if (control_)
          for (std::size_t s = 0; s < i; ++s) sh += factors_[0]->mass().interval_mass(i, s) * ctl(s, 1);
        Y[i] = c.y0 + theta_ * (g[n + i - 1] + shift_ * sh) - bg->a * std::pow(eps_ * grid_[i], 2.0 * c.hurst);
      }
    } else {
      // Stein-Stein: Gaussian noise, Markov drift with a constant kernel.
      const double xi = std::get<RoughSteinStein>(spec_.model).xi;
      draw(z, 2 * n);
      g.resize(2 * n);
      factors_[0]->sample(z.data(), g.data());
      for (std::size_t j = 0; j < n; ++j) dw[j] = g[j];
      girsanov(dw.data(), 1);
      Y[0] = y_start;
      double drift = 0.0;
      for (std::size_t i = 1; i <= n; ++i) {
        drift += grid_.step(i - 1) * cd * c.kappa * (th - Y[i - 1]);
        double sh = 0.0;
        if (control_)
          for (std::size_t s = 0; s < i; ++s) sh += factors_[0]->mass().interval_mass(i, s) * ctl(s, 1);
        Y[i] = y_start + drift + theta_ * xi * (g[n + i - 1] + shift_ * sh);
      }
    }

    draw(dbp, n);
    for (std::size_t s = 0; s < n; ++s) dbp[s] *= std::sqrt(grid_.step(s));
    girsanov(dbp.data(), 0);
    double x = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      out[i * d] = x;
      out[i * d + 1] = Y[i];
      if (i == n) break;
      const double h = grid_.step(i);
      const double dB = rb * (dbp[i] + shift_ * ctl(i, 0) * h) + rho * (dw[i] + shift_ * ctl(i, 1) * h);
      x += -0.5 * cx * c.Sigma(Y[i]) * h + theta_ * c.vol(Y[i]) * dB;
    }
    finish(out);
    return logw;
  }

 private:
  // MDP regimes report eta = (state - mean) / (theta h).
  void finish(std::span<double> out) const {
    if (!is_mdp(spec_.regime)) return;
    const std::size_t d = dim();
    const double s = 1.0 / (theta_ * hmdp_);
    for (std::size_t i = 0; i <= n_; ++i)
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] = (out[i * d + c] - mean_[c]) * s;
  }

  ModelSpec spec_;
  TimeGrid grid_;
  std::optional<Control> control_;
  std::size_t n_ = 0;
  double eps_ = 1.0, theta_ = 1.0, hmdp_ = 1.0, shift_ = 1.0;
  bool small_ = true;
  std::vector<double> mean_;
  VolCoefficients coef_;
  std::vector<std::shared_ptr<GaussianVolterraFactor>> factors_;
  ProductWeights mass_;
  std::vector<double> pair_chol_;
};

// Streams paths to visit(index, path span, log weight); visit may run on
// several threads at once but each index is visited exactly once.
template <class Visit>
void for_each_path(const Simulator& sim, std::size_t n_paths, std::uint64_t seed, std::size_t threads, Visit&& visit) {
  const std::size_t len = sim.grid().size() * sim.dim();
  const std::size_t workers = std::min(resolve_threads(threads), std::max<std::size_t>(n_paths, 1));
  std::vector<std::vector<double>> buf(workers, std::vector<double>(len));
  parallel_for(n_paths, workers, [&](std::size_t p, std::size_t w) {
    const double lw = sim.path(seed, p, buf[w]);
    visit(p, std::span<const double>(buf[w]), lw);
  });
}

inline PathEnsemble simulate(const ModelSpec& model, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                             std::size_t threads = 0) {
  if (n_paths == 0) throw Error(ErrorCode::domain_error, "n_paths must be >= 1");
  Simulator sim(model, grid);
  PathEnsemble e{grid, n_paths, sim.dim(), std::vector<double>(n_paths * grid.size() * sim.dim()), {}, seed};
  const std::size_t len = grid.size() * sim.dim();
  parallel_for(n_paths, threads, [&](std::size_t p, std::size_t) {
    sim.path(seed, p, std::span<double>(e.paths.data() + p * len, len));
  });
  return e;
}

inline PathEnsemble simulate_controlled(const ModelSpec& model, const Control& v, const TimeGrid& grid,
                                        std::size_t n_paths, std::uint64_t seed, std::size_t threads = 0) {
  if (n_paths == 0) throw Error(ErrorCode::domain_error, "n_paths must be >= 1");
  Simulator sim(model, grid, v);
  PathEnsemble e{grid, n_paths, sim.dim(), std::vector<double>(n_paths * grid.size() * sim.dim()),
                 std::vector<double>(n_paths), seed};
  const std::size_t len = grid.size() * sim.dim();
  parallel_for(n_paths, threads, [&](std::size_t p, std::size_t) {
    e.log_weights[p] = sim.path(seed, p, std::span<double>(e.paths.data() + p * len, len));
  });
  return e;
}

}  // namespace voldev
