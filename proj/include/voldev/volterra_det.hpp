#pragma once

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "voldev/grid.hpp"
#include "voldev/quadrature.hpp"

namespace voldev {

// f(node, t, x, out). Drift fills d values, diffusion d*m values (row = component).
using FieldFn = std::function<void(std::size_t, double, std::span<const double>, std::span<double>)>;

enum class BranchPolicy { continue_positive, absorb_at_zero };
enum class BranchTaken { unique, positive_continuation, absorbed };

inline const char* to_string(BranchTaken b) {
  switch (b) {
    case BranchTaken::unique: return "unique";
    case BranchTaken::positive_continuation: return "positive_continuation";
    case BranchTaken::absorbed: return "absorbed";
  }
  return "";
}

// x^c(t) = x0^c + \int_0^t K_b^c(t-s) b^c(s, x_s) ds + \int_0^t K_s^c(t-s) sum_k sigma^{ck}(s, x_s) v^k_s ds
struct LimitProblem {
  TimeGrid grid;
  std::vector<KernelSpec> drift_kernel;      // per component
  std::vector<KernelSpec> diffusion_kernel;  // per component
  std::size_t noise_dim = 1;
  std::vector<double> x0;
  FieldFn drift;
  FieldFn diffusion;
  // Optional state Jacobians: drift d*d as (c, e); diffusion d*m*d as ((c*m + k), e).
  FieldFn drift_jacobian;
  FieldFn diffusion_jacobian;
  std::vector<bool> nonnegative;  // components evaluated through a square root
  Control control;
  BranchPolicy branch = BranchPolicy::continue_positive;

  std::size_t dim() const { return x0.size(); }
};

struct SolverOptions {
  double tol = 1e-10;
  std::size_t max_iterations = 500;
  double zero_tol = 1e-14;
};

struct SolveReport {
  GridFunction path;
  double residual = 0.0;
  std::size_t picard_iterations = 0;
  BranchTaken branch_taken = BranchTaken::unique;
  std::vector<double> residual_history;  // global sweeps only
};

// Weight tables for each component, shared by solver, defect and adjoint.
struct LimitWeights {
  std::vector<ProductWeights> drift, diffusion;

  explicit LimitWeights(const LimitProblem& p) {
    if (p.drift_kernel.size() != p.dim() || p.diffusion_kernel.size() != p.dim())
      throw Error(ErrorCode::domain_error, "one drift and one diffusion kernel per component");
    for (std::size_t c = 0; c < p.dim(); ++c) {
      drift.emplace_back(p.drift_kernel[c], p.grid);
      diffusion.emplace_back(p.diffusion_kernel[c], p.grid);
      // A square-root state started at 0 has sigma(x_0) v_0 = 0 while the
      // forcing tends to a finite limit; hold it at its node-1 value.
      if (c < p.nonnegative.size() && p.nonnegative[c] && p.x0[c] == 0.0) diffusion.back().hold_first_interval();
    }
  }
};

namespace detail {

inline void check_problem(const LimitProblem& p) {
  if (p.dim() == 0) throw Error(ErrorCode::domain_error, "empty state");
  if (!(p.control.grid() == p.grid)) throw Error(ErrorCode::domain_error, "control grid differs from problem grid");
  if (p.control.dim() != p.noise_dim) throw Error(ErrorCode::domain_error, "control dimension differs from noise dimension");
  if (!p.drift || !p.diffusion) throw Error(ErrorCode::domain_error, "missing coefficient callbacks");
}

// Per-node forcing: fb[c] = b^c(x), fs[c] = sum_k sigma^{ck}(x) v^k.
struct Forcing {
  std::vector<double> fb, fs;  // node-major, d per node
  std::vector<double> sig;     // scratch d*m

  Forcing(std::size_t nodes, std::size_t d, std::size_t m) : fb(nodes * d, 0.0), fs(nodes * d, 0.0), sig(d * m) {}

  void eval(const LimitProblem& p, std::size_t i, std::span<const double> x) {
    const std::size_t d = p.dim(), m = p.noise_dim;
    const double t = p.grid[i];
    p.drift(i, t, x, std::span<double>(fb.data() + i * d, d));
    p.diffusion(i, t, x, sig);
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += sig[c * m + k] * p.control(i, k);
      fs[i * d + c] = s;
    }
  }
};

}  // namespace detail

// Marching solver: node by node, a damped fixed-point iteration on the
// diagonal term with the history sum frozen.
inline SolveReport solve_ldp_limit(const LimitProblem& p, const SolverOptions& opt = {}) {
  detail::check_problem(p);
  const std::size_t d = p.dim(), n = p.grid.n_steps();
  LimitWeights W(p);
  std::vector<bool> nonneg = p.nonnegative;
  nonneg.resize(d, false);

  SolveReport rep;
  rep.path = GridFunction(p.grid, d);
  detail::Forcing F(n + 1, d, p.noise_dim);
  for (std::size_t c = 0; c < d; ++c) rep.path(0, c) = p.x0[c];
  F.eval(p, 0, rep.path.node(0));

  std::vector<double> hist(d), x(d), gx(d), diag_b(d), diag_s(d);
  std::size_t total_iter = 0;
  bool continued = false, absorbed = false;

  auto project = [&](std::vector<double>& y) {
    for (std::size_t c = 0; c < d; ++c) {
      if (nonneg[c] && std::abs(y[c]) <= opt.zero_tol) y[c] = 0.0;
      if (!nonneg[c] || y[c] >= 0.0) continue;
      if (p.branch == BranchPolicy::absorb_at_zero) {
        y[c] = 0.0;
      } else if (y[c] < -opt.tol) {
        throw Error(ErrorCode::negative_argument, "square-root coefficient evaluated at a negative state");
      } else {
        y[c] = 0.0;
      }
    }
  };

  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      CompensatedSum acc;
      acc.add(p.x0[c]);
      W.drift[c].history(i, F.fb.data(), d, c, acc);
      W.diffusion[c].history(i, F.fs.data(), d, c, acc);
      hist[c] = acc.value();
      diag_b[c] = W.drift[c](i, i);
      diag_s[c] = W.diffusion[c](i, i);
    }
    bool seeded = false;
    for (std::size_t c = 0; c < d; ++c) {
      const double prev = rep.path(i - 1, c);
      double pred = i >= 2 ? prev + (prev - rep.path(i - 2, c)) * p.grid.step(i - 1) / p.grid.step(i - 2) : prev;
      if (nonneg[c]) {
        pred = std::max(pred, 0.0);
        if (prev <= opt.zero_tol) {
          if (p.branch == BranchPolicy::continue_positive) {
            pred = 1.0 + std::abs(hist[c]);
            seeded = true;
          } else {
            pred = 0.0;
          }
        }
      }
      x[c] = pred;
    }
    double theta = 1.0, last = INFINITY;
    std::vector<double> last_step(d, 0.0);
    bool ok = false;
    double r = INFINITY, scale = 1.0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
      ++total_iter;
      F.eval(p, i, x);
      r = 0.0;
      double mag = 0.0;
      scale = 1.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double tb = diag_b[c] * F.fb[i * d + c], tsig = diag_s[c] * F.fs[i * d + c];
        gx[c] = hist[c] + tb + tsig;
        r = std::max(r, std::abs(gx[c] - x[c]));
        mag = std::max(mag, std::abs(x[c]) + std::abs(hist[c]) + std::abs(tb) + std::abs(tsig));
        scale = std::max(scale, std::abs(x[c]));
      }
      if (!std::isfinite(r)) throw Error(ErrorCode::no_convergence, "non-finite iterate at node " + std::to_string(i));
      // Iterate down to rounding level; the tolerance is only the acceptance bar.
      if (r <= 8.0 * std::numeric_limits<double>::epsilon() * mag) {
        x = gx;
        project(x);
        ok = true;
        break;
      }
      // Damp only oscillating iterates; monotone climbs off zero may grow the residual.
      bool reversed = false;
      for (std::size_t c = 0; c < d; ++c) reversed = reversed || (gx[c] - x[c]) * last_step[c] < 0.0;
      if (r > last && reversed) theta = std::max(theta * 0.5, 1.0 / 1024.0);
      last = r;
      for (std::size_t c = 0; c < d; ++c) {
        last_step[c] = gx[c] - x[c];
        x[c] += theta * last_step[c];
      }
      project(x);
    }
    if (!ok && r <= opt.tol * scale) ok = true;
    if (!ok) throw Error(ErrorCode::no_convergence, "fixed-point iteration stalled at node " + std::to_string(i));
    for (std::size_t c = 0; c < d; ++c) {
      if (nonneg[c] && seeded && rep.path(i - 1, c) <= opt.zero_tol && x[c] > opt.zero_tol) continued = true;
      if (nonneg[c] && p.branch == BranchPolicy::absorb_at_zero && rep.path(i - 1, c) > opt.zero_tol && x[c] == 0.0)
        absorbed = true;
      rep.path(i, c) = x[c];
    }
    F.eval(p, i, x);
  }
  rep.picard_iterations = total_iter;
  rep.branch_taken = continued ? BranchTaken::positive_continuation
                               : (absorbed ? BranchTaken::absorbed : BranchTaken::unique);
  // Residual of the full discrete system.
  double res = 0.0;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double rhs = p.x0[c] + W.drift[c].history(i, F.fb.data(), d, c) + W.drift[c](i, i) * F.fb[i * d + c] +
                         W.diffusion[c].history(i, F.fs.data(), d, c) + W.diffusion[c](i, i) * F.fs[i * d + c];
      res = std::max(res, std::abs(rep.path(i, c) - rhs));
    }
  rep.residual = res;
  return rep;
}

// Global Picard sweeps x <- x0 + W F(x) starting from x0; records sup-norm step sizes.
inline SolveReport solve_ldp_limit_global(const LimitProblem& p, const SolverOptions& opt = {}) {
  detail::check_problem(p);
  const std::size_t d = p.dim(), n = p.grid.n_steps();
  LimitWeights W(p);
  std::vector<bool> nonneg = p.nonnegative;
  nonneg.resize(d, false);
  SolveReport rep;
  GridFunction x(p.grid, d);
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t c = 0; c < d; ++c) x(i, c) = p.x0[c];
  detail::Forcing F(n + 1, d, p.noise_dim);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    for (std::size_t i = 0; i <= n; ++i) F.eval(p, i, x.node(i));
    GridFunction next(p.grid, d);
    double step = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double v = p.x0[c] + W.drift[c].history(i, F.fb.data(), d, c) + W.drift[c](i, i) * F.fb[i * d + c] +
                   W.diffusion[c].history(i, F.fs.data(), d, c) + W.diffusion[c](i, i) * F.fs[i * d + c];
        if (nonneg[c] && v < 0.0) {
          if (p.branch == BranchPolicy::continue_positive && v < -opt.tol)
            throw Error(ErrorCode::negative_argument, "global iterate went negative at node " + std::to_string(i));
          v = 0.0;
        }
        next(i, c) = v;
        step = std::max(step, std::abs(v - x(i, c)));
      }
    x = std::move(next);
    rep.residual_history.push_back(step);
    rep.picard_iterations = it + 1;
    if (!std::isfinite(step)) break;
    if (step <= opt.tol) {
      rep.path = x;
      rep.residual = step;
      return rep;
    }
  }
  throw Error(ErrorCode::no_convergence, "global Picard iteration did not converge");
}

// Max residual of a candidate path against the discrete system of p.
inline double limit_defect(const LimitProblem& p, const GridFunction& path) {
  const std::size_t d = p.dim(), n = p.grid.n_steps();
  LimitWeights W(p);
  detail::Forcing F(n + 1, d, p.noise_dim);
  for (std::size_t i = 0; i <= n; ++i) F.eval(p, i, path.node(i));
  double res = 0.0;
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double rhs = p.x0[c] + W.drift[c].history(i, F.fb.data(), d, c) + W.drift[c](i, i) * F.fb[i * d + c] +
                         W.diffusion[c].history(i, F.fs.data(), d, c) + W.diffusion[c](i, i) * F.fs[i * d + c];
      res = std::max(res, std::abs(path(i, c) - rhs));
    }
  return res;
}

// Re-substitutes a path with a quadrature that shares no code with the
// product weights: each interval is split in two panels, integrated by
// Gauss-Legendre, and the panel touching a kernel singularity by tanh-sinh.
// The forcing is the piecewise-linear interpolant of its nodal values.
inline double certify_defect(const LimitProblem& p, const GridFunction& path, std::size_t check_nodes = 32) {
  const std::size_t d = p.dim(), n = p.grid.n_steps();
  detail::Forcing F(n + 1, d, p.noise_dim);
  for (std::size_t i = 0; i <= n; ++i) F.eval(p, i, path.node(i));
  using GL = boost::math::quadrature::gauss<double, 15>;
  boost::math::quadrature::tanh_sinh<double> ts;

  auto conv = [&](const KernelSpec& k, std::size_t i, const std::vector<double>& f, std::size_t c) {
    if (k.kind() == KernelSpec::Kind::zero) return 0.0;
    const double t = p.grid[i];
    double total = 0.0;
    for (std::size_t m = 0; m < i; ++m) {
      const double a = p.grid[m], b = p.grid[m + 1], h = b - a;
      const double fa = f[m * d + c], fb = f[(m + 1) * d + c];
      auto g = [&](double s) { return k(t - s) * (fa + (fb - fa) * (s - a) / h); };
      const double mid = 0.5 * (a + b);
      for (auto [lo, hi] : {std::pair{a, mid}, std::pair{mid, b}}) {
        if (hi == t && k.is_singular()) {
          total += ts.integrate([&](double s) { return s >= t ? 0.0 : g(s); }, lo, hi);
        } else {
          total += GL::integrate(g, lo, hi);
        }
      }
    }
    return total;
  };

  double res = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, n / check_nodes);
  for (std::size_t i = stride; i <= n; i += stride)
    for (std::size_t c = 0; c < d; ++c) {
      const double rhs = p.x0[c] + conv(p.drift_kernel[c], i, F.fb, c) + conv(p.diffusion_kernel[c], i, F.fs, c);
      res = std::max(res, std::abs(path(i, c) - rhs));
    }
  return res;
}

// Linear MDP limit psi = \int K (grad_b psi + sigma v) with psi(0) = 0.
// grad_b holds d*d values per node, sigma d*m, v m.
inline GridFunction solve_mdp_limit(const KernelSpec& kernel, const GridFunction& grad_b, const GridFunction& sigma,
                                    const Control& v, const SolverOptions& opt = {}) {
  const std::size_t m = v.dim();
  const std::size_t d = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(grad_b.dim()))));
  if (d * d != grad_b.dim() || sigma.dim() != d * m)
    throw Error(ErrorCode::domain_error, "inconsistent MDP coefficient dimensions");
  LimitProblem p;
  p.grid = v.grid();
  p.drift_kernel.assign(d, kernel);
  p.diffusion_kernel.assign(d, kernel);
  p.noise_dim = m;
  p.x0.assign(d, 0.0);
  p.control = v;
  p.drift = [&grad_b, d](std::size_t i, double, std::span<const double> x, std::span<double> out) {
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += grad_b(i, c * d + e) * x[e];
      out[c] = s;
    }
  };
  p.diffusion = [&sigma, d, m](std::size_t i, double, std::span<const double>, std::span<double> out) {
    for (std::size_t q = 0; q < d * m; ++q) out[q] = sigma(i, q);
  };
  return solve_ldp_limit(p, opt).path;
}

// The zero-control limit: the mean path the deviations are measured from.
inline GridFunction solve_mean_limit(LimitProblem p, const SolverOptions& opt = {}) {
  p.control = Control(p.grid, p.noise_dim);
  return solve_ldp_limit(p, opt).path;
}

}  // namespace voldev
