#pragma once

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "voldev/frac_calculus.hpp"
#include "voldev/parallel.hpp"
#include "voldev/volterra_det.hpp"

namespace voldev {

// sum_k coef_k x^{comp_k}(t_{node_k}) = target
struct LinearConstraint {
  struct Term {
    std::size_t node, comp;
    double coef;
  };
  std::vector<Term> terms;
  double target = 0.0;

  double value(const GridFunction& path) const {
    double s = -target;
    for (const auto& t : terms) s += t.coef * path(t.node, t.comp);
    return s;
  }

  static LinearConstraint terminal(const TimeGrid& g, std::size_t comp, double target) {
    return {{{g.n_steps(), comp, 1.0}}, target};
  }
};

struct VariationalOptions {
  std::vector<double> penalties{1e2, 1e4, 1e6};
  std::size_t multiplier_updates = 12;
  double feasibility_tol = 1e-4;
  std::size_t max_iterations = 2000;
  std::vector<double> starts{-2.0, -1.0, 0.0, 1.0, 2.0};
  std::size_t threads = 0;
  SolverOptions limit;
};

struct VariationalResult {
  double value = std::numeric_limits<double>::infinity();
  Control control;
  GridFunction path;
  double violation = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

inline void fd_jacobian(const FieldFn& f, std::size_t i, double t, std::span<const double> x, std::size_t out_dim,
                        std::span<double> jac) {
  const std::size_t d = x.size();
  std::vector<double> xp(x.begin(), x.end()), fp(out_dim), fm(out_dim);
  for (std::size_t e = 0; e < d; ++e) {
    const double h = 1e-7 * std::max(1.0, std::abs(x[e]));
    xp[e] = x[e] + h;
    f(i, t, xp, fp);
    xp[e] = x[e] - h;
    f(i, t, xp, fm);
    xp[e] = x[e];
    for (std::size_t r = 0; r < out_dim; ++r) jac[r * d + e] = (fp[r] - fm[r]) / (2.0 * h);
  }
}

// Gradient of sum_{i,c} g(i,c) x^c_i with respect to the nodal controls,
// by the exact adjoint of the discrete product-integration system.
inline GridFunction control_gradient(const LimitProblem& p, const LimitWeights& W, const GridFunction& path,
                                     const GridFunction& g) {
  const std::size_t d = p.dim(), m = p.noise_dim, n = p.grid.n_steps();
  std::vector<double> lam((n + 1) * d, 0.0), P((n + 1) * d, 0.0), Q((n + 1) * d, 0.0);
  std::vector<double> sig(d * m), jb(d * d), js(d * m * d);
  GridFunction grad(p.grid, m);
  Eigen::MatrixXd A(d, d);
  Eigen::VectorXd rhs(d);

  for (std::size_t j = n + 1; j-- > 0;) {
    const double t = p.grid[j];
    auto x = path.node(j);
    p.diffusion(j, t, x, sig);
    if (j >= 1) {
      if (p.drift_jacobian) p.drift_jacobian(j, t, x, jb);
      else fd_jacobian(p.drift, j, t, x, d, jb);
      if (p.diffusion_jacobian) p.diffusion_jacobian(j, t, x, js);
      else fd_jacobian(p.diffusion, j, t, x, d * m, js);
      A.setIdentity();
      for (std::size_t e = 0; e < d; ++e) {
        double r = g(j, e);
        for (std::size_t c = 0; c < d; ++c) {
          double dfs = 0.0;
          for (std::size_t k = 0; k < m; ++k) dfs += p.control(j, k) * js[(c * m + k) * d + e];
          r += P[j * d + c] * jb[c * d + e] + Q[j * d + c] * dfs;
          A(e, c) -= W.drift[c](j, j) * jb[c * d + e] + W.diffusion[c](j, j) * dfs;
        }
        rhs(e) = r;
      }
      const Eigen::VectorXd l = A.partialPivLu().solve(rhs);
      for (std::size_t c = 0; c < d; ++c) lam[j * d + c] = l(c);
    }
    for (std::size_t k = 0; k < m; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double w = Q[j * d + c] + (j >= 1 ? lam[j * d + c] * W.diffusion[c](j, j) : 0.0);
        s += w * sig[c * m + k];
      }
      grad(j, k) = s;
    }
    if (j == 0) break;
    // Push lambda_j into the accumulators of earlier columns.
    for (std::size_t c = 0; c < d; ++c) {
      const double l = lam[j * d + c];
      if (l == 0.0) continue;
      for (std::size_t i = 0; i < j; ++i) {
        if (!W.drift[c].is_zero()) P[i * d + c] += l * W.drift[c](j, i);
        if (!W.diffusion[c].is_zero()) Q[i * d + c] += l * W.diffusion[c](j, i);
      }
    }
  }
  return grad;
}

// Augmented Lagrangian of the energy in the whitened variables z = sqrt(w) v.
class EnergyObjective : public ceres::FirstOrderFunction {
 public:
  EnergyObjective(const LimitProblem& base, const LimitWeights& W, const std::vector<LinearConstraint>& cons,
                  const std::vector<double>& sqw, const std::vector<double>& lambda, double mu,
                  const SolverOptions& lim)
      : base_(base), W_(W), cons_(cons), sqw_(sqw), lambda_(lambda), mu_(mu), lim_(lim) {}

  int NumParameters() const override { return static_cast<int>(sqw_.size() * base_.noise_dim); }

  bool Evaluate(const double* z, double* cost, double* gradient) const override {
    const std::size_t m = base_.noise_dim, N = sqw_.size();
    LimitProblem p = base_;
    double e = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        e += 0.5 * z[i * m + k] * z[i * m + k];
        p.control(i, k) = z[i * m + k] / sqw_[i];
      }
    GridFunction path;
    try {
      path = solve_ldp_limit(p, lim_).path;
    } catch (const Error&) {
      return false;
    }
    double c_cost = 0.0;
    GridFunction g(p.grid, p.dim());
    for (std::size_t r = 0; r < cons_.size(); ++r) {
      const double c = cons_[r].value(path);
      c_cost += lambda_[r] * c + 0.5 * mu_ * c * c;
      for (const auto& t : cons_[r].terms) g(t.node, t.comp) += t.coef * (lambda_[r] + mu_ * c);
    }
    *cost = e + c_cost;
    if (!std::isfinite(*cost)) return false;
    if (gradient) {
      const GridFunction gv = control_gradient(p, W_, path, g);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < m; ++k) gradient[i * m + k] = z[i * m + k] + gv(i, k) / sqw_[i];
    }
    return true;
  }

 private:
  const LimitProblem& base_;
  const LimitWeights& W_;
  const std::vector<LinearConstraint>& cons_;
  const std::vector<double>& sqw_;
  const std::vector<double>& lambda_;
  double mu_;
  SolverOptions lim_;
};

inline VariationalResult minimize_from(const LimitProblem& base, const LimitWeights& W,
                                       const std::vector<LinearConstraint>& cons, const Control& start,
                                       const VariationalOptions& opt) {
  const std::size_t m = base.noise_dim, N = base.grid.size();
  auto tw = trapezoid_weights(base.grid);
  std::vector<double> sqw(N);
  for (std::size_t i = 0; i < N; ++i) sqw[i] = std::sqrt(tw[i]);
  std::vector<double> z(N * m), lambda(cons.size(), 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < m; ++k) z[i * m + k] = start(i, k) * sqw[i];

  VariationalResult res;
  LimitProblem p = base;
  auto evaluate = [&] {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = 0; k < m; ++k) p.control(i, k) = z[i * m + k] / sqw[i];
    res.path = solve_ldp_limit(p, opt.limit).path;
    res.control = p.control;
    res.violation = 0.0;
    for (const auto& c : cons) res.violation = std::max(res.violation, std::abs(c.value(res.path)));
    res.value = energy(res.control);
  };

  ceres::GradientProblemSolver::Options so;
  so.line_search_direction_type = ceres::LBFGS;
  so.max_num_iterations = static_cast<int>(opt.max_iterations);
  so.function_tolerance = 1e-15;
  so.gradient_tolerance = 1e-12;
  so.parameter_tolerance = 1e-14;
  so.logging_type = ceres::SILENT;

  auto run = [&](double mu) {
    ceres::GradientProblem problem(new EnergyObjective(base, W, cons, sqw, lambda, mu, opt.limit));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(so, problem, z.data(), &summary);
    res.iterations += summary.iterations.size();
    evaluate();
    for (std::size_t r = 0; r < cons.size(); ++r) lambda[r] += mu * cons[r].value(res.path);
  };

  evaluate();
  double scale = 1.0;
  for (const auto& c : cons) scale = std::max(scale, std::abs(c.target));
  for (double mu : opt.penalties) run(mu);
  for (std::size_t u = 0; u < opt.multiplier_updates && res.violation > 1e-10 * scale; ++u) run(opt.penalties.back());
  res.converged = res.violation <= opt.feasibility_tol;
  return res;
}

}  // namespace detail

// Minimum control energy 1/2 \int |v|^2 subject to linear constraints on the
// limit path, over nodal controls. Starts are constant controls s * start_scale.
inline VariationalResult minimize_energy(const LimitProblem& base, const std::vector<LinearConstraint>& cons,
                                         double start_scale, const VariationalOptions& opt = {}) {
  detail::check_problem(base);
  LimitWeights W(base);
  std::vector<VariationalResult> runs(opt.starts.size());
  std::vector<bool> ok(opt.starts.size(), false);
  parallel_for(opt.starts.size(), opt.threads, [&](std::size_t s, std::size_t) {
    Control start(base.grid, base.noise_dim);
    for (std::size_t i = 0; i < base.grid.size(); ++i)
      for (std::size_t k = 0; k < base.noise_dim; ++k) start(i, k) = opt.starts[s] * start_scale;
    try {
      runs[s] = detail::minimize_from(base, W, cons, start, opt);
      ok[s] = true;
    } catch (const Error&) {
    }
  });
  std::size_t best = runs.size();
  for (std::size_t s = 0; s < runs.size(); ++s) {
    if (!ok[s]) continue;
    if (best == runs.size()) {
      best = s;
      continue;
    }
    const auto& a = runs[s];
    const auto& b = runs[best];
    // Feasible runs beat infeasible ones; then lower value, then lower index.
    if (a.converged != b.converged ? a.converged : a.value < b.value) best = s;
  }
  if (best == runs.size()) throw Error(ErrorCode::solver_failure, "every start failed to produce a limit path");
  return runs[best];
}

}  // namespace voldev
