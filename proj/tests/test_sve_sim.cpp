#include <gtest/gtest.h>

#include <cmath>

#include "voldev/sve_sim.hpp"

using namespace voldev;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0, se = 0.0;
};

template <class F>
Moments moments(std::size_t n, F&& f) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = f(i);
    s += x;
    s2 += x * x;
  }
  Moments m;
  m.mean = s / n;
  m.var = (s2 - n * m.mean * m.mean) / (n - 1);
  m.se = std::sqrt(m.var / n);
  return m;
}

}  // namespace

TEST(Rng, PhiloxKnownAnswer) {
  PhiloxStream r(0, 0);
  const auto b = r.next_block();
  EXPECT_EQ(b[0], 0x6627e8d5u);
  EXPECT_EQ(b[1], 0xe169c58du);
  EXPECT_EQ(b[2], 0xbc57ac4cu);
  EXPECT_EQ(b[3], 0x9b00dbd8u);
}

TEST(Simulator, VolterraFactorVariance) {
  // Y_1 - y0 = G_1 with Var = \int_0^1 K^2 = 2.25459...
  ModelSpec spec{RoughBergomi{0.0, 0.0, 0.0, 0.1}, SmallTimeLDP{1.0}};
  const std::size_t n = 20000;
  auto e = simulate(spec, TimeGrid::uniform(1.0, 16), n, 7, 1);
  auto m = moments(n, [&](std::size_t p) { return e(p, 16, 1); });
  EXPECT_NEAR(m.mean, 0.0, 4.0 * m.se);
  EXPECT_NEAR(m.var, 2.25459464007214850108, 4.0 * 2.2546 * std::sqrt(2.0 / n));
}

TEST(Simulator, SpotIsMartingale) {
  ModelSpec spec{RoughBergomi{0.0, -0.7, std::log(0.04), 0.3}, SmallTimeLDP{1.0}};
  const std::size_t n = 20000;
  auto e = simulate(spec, TimeGrid::uniform(1.0, 32), n, 11, 1);
  auto m = moments(n, [&](std::size_t p) { return std::exp(e(p, 32, 0)); });
  EXPECT_NEAR(m.mean, 1.0, 4.0 * m.se);
}

TEST(Simulator, HestonMeanReversion) {
  // H = 1/2 is classical CIR: E Y_T = theta + (y0 - theta) e^{-kappa T}.
  ModelSpec spec{RoughHeston{1.0, 0.04, 0.1, 0.0, 0.04, 0.5}, SmallTimeLDP{1.0}};
  const std::size_t n = 4000, steps = 200;
  auto e = simulate(spec, TimeGrid::uniform(20.0, steps), n, 3, 1);
  auto m = moments(n, [&](std::size_t p) { return e(p, steps, 1); });
  EXPECT_NEAR(m.mean, 0.04, 3.0 * m.se);
}

TEST(Simulator, HestonStepPolicy) {
  EXPECT_EQ(heston_step_policy(0.0, -0.3), 0.0);
  EXPECT_EQ(heston_step_policy(0.04, 0.0), 0.04);
  EXPECT_NEAR(heston_step_policy(0.04, 0.1), 0.06, 1e-15);
}

TEST(Simulator, ConstantKernelShiftIsAdditive) {
  // H = 1/2: K = 1, zeta = 1, so the controlled Y is the plain Y plus c t.
  ModelSpec spec{RoughBergomi{0.0, 0.0, 0.0, 0.5}, SmallTimeLDP{0.01}};
  auto grid = TimeGrid::uniform(1.0, 16);
  Control v(grid, 2);
  for (std::size_t i = 0; i <= 16; ++i) v(i, 1) = 0.7;
  auto a = simulate(spec, grid, 20, 3, 1);
  auto b = simulate_controlled(spec, v, grid, 20, 3, 1);
  for (std::size_t p = 0; p < 20; ++p)
    for (std::size_t i = 0; i <= 16; ++i) EXPECT_NEAR(b(p, i, 1), a(p, i, 1) + 0.7 * grid[i], 1e-12);
}

TEST(Simulator, RoughHestonMeanMatchesLimit) {
  // The mean of Y solves the deterministic drift equation.
  RoughHeston h{1.0, 0.04, 0.2, 0.0, 0.1, 0.3};
  ModelSpec spec{h, SmallTimeLDP{1.0}};
  const std::size_t steps = 64, n = 8000;
  auto grid = TimeGrid::uniform(1.0, steps);
  auto e = simulate(spec, grid, n, 5, 1);
  auto m = moments(n, [&](std::size_t p) { return e(p, steps, 1); });

  LimitProblem p;
  p.grid = grid;
  p.drift_kernel = {KernelSpec::power_law(0.3)};
  p.diffusion_kernel = {KernelSpec::zero()};
  p.noise_dim = 1;
  p.x0 = {0.1};
  p.drift = [](std::size_t, double, std::span<const double> x, std::span<double> o) { o[0] = 0.04 - x[0]; };
  p.diffusion = [](std::size_t, double, std::span<const double>, std::span<double> o) { o[0] = 0.0; };
  p.control = Control(grid, 1);
  auto ref = solve_ldp_limit(p).path(steps, 0);
  EXPECT_NEAR(m.mean, ref, 4.0 * m.se + 2e-3);
}

TEST(Simulator, ZeroControlIsIdentity) {
  ModelSpec spec{RoughSteinStein{}, SmallTimeLDP{0.1}};
  auto grid = TimeGrid::uniform(1.0, 16);
  auto a = simulate(spec, grid, 50, 9, 1);
  auto b = simulate_controlled(spec, Control(grid, 2), grid, 50, 9, 1);
  EXPECT_EQ(a.paths, b.paths);
  for (double w : b.log_weights) EXPECT_EQ(w, 0.0);
}

TEST(Simulator, ThreadCountDoesNotChangePaths) {
  ModelSpec spec{RoughHeston{}, SmallTimeLDP{0.5}};
  auto grid = TimeGrid::uniform(1.0, 32);
  auto a = simulate(spec, grid, 64, 21, 1);
  auto b = simulate(spec, grid, 64, 21, 3);
  EXPECT_EQ(a.paths, b.paths);
}

TEST(Simulator, GirsanovReweightingIsUnbiased) {
  ModelSpec spec{RoughSteinStein{1.0, 0.2, 0.3, -0.5, 0.2, 0.2}, SmallTimeLDP{0.05}};
  auto grid = TimeGrid::uniform(1.0, 16);
  Control v(grid, 2);
  for (std::size_t i = 0; i <= 16; ++i) {
    v(i, 0) = 0.1;
    v(i, 1) = -0.2 * grid[i];
  }
  const std::size_t n = 40000;
  auto a = simulate(spec, grid, n, 1, 1);
  auto b = simulate_controlled(spec, v, grid, n, 2, 1);
  auto f = [](double x) { return x * x; };
  auto ma = moments(n, [&](std::size_t p) { return f(a(p, 16, 0)); });
  auto mb = moments(n, [&](std::size_t p) { return std::exp(b.log_weights[p]) * f(b(p, 16, 0)); });
  EXPECT_NEAR(ma.mean, mb.mean, 4.0 * std::hypot(ma.se, mb.se));
  auto mw = moments(n, [&](std::size_t p) { return std::exp(b.log_weights[p]); });
  EXPECT_NEAR(mw.mean, 1.0, 4.0 * mw.se);
}

TEST(Simulator, ControlledMeanConvergesToLimit) {
  ModelSpec base{RoughSteinStein{1.0, 0.2, 0.3, -0.5, 0.2, 0.2}, SmallTimeLDP{1.0}};
  auto grid = TimeGrid::uniform(1.0, 32);
  Control v(grid, 2);
  for (std::size_t i = 0; i <= 32; ++i) {
    v(i, 0) = 0.5;
    v(i, 1) = 1.0 - grid[i];
  }
  auto lim = solve_ldp_limit(ldp_limit_problem(base, grid, v)).path;
  double prev = 1e300;
  for (double eps : {0.1, 0.05, 0.025}) {
    ModelSpec spec = base;
    spec.regime = SmallTimeLDP{eps};
    const std::size_t n = 2000;
    auto e = simulate_controlled(spec, v, grid, n, 4, 1);
    double sup = 0.0;
    for (std::size_t i = 0; i <= 32; ++i) {
      double m = 0.0;
      for (std::size_t p = 0; p < n; ++p) m += e(p, i, 1);
      sup = std::max(sup, std::abs(m / n - lim(i, 1)));
    }
    EXPECT_LT(sup, prev) << eps;
    prev = sup;
  }
}

TEST(Simulator, ControlledPathsConcentrateOnLimit) {
  ModelSpec base{RoughSteinStein{1.0, 0.2, 0.3, -0.5, 0.2, 0.2}, SmallTimeLDP{1.0}};
  auto grid = TimeGrid::uniform(1.0, 32);
  Control v(grid, 2);
  for (std::size_t i = 0; i <= 32; ++i) {
    v(i, 0) = 0.5;
    v(i, 1) = 1.0 - grid[i];
  }
  auto lim = solve_ldp_limit(ldp_limit_problem(base, grid, v)).path;
  double prev = 1e300;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    ModelSpec spec = base;
    spec.regime = SmallTimeLDP{eps};
    auto e = simulate_controlled(spec, v, grid, 400, 4, 1);
    double s2 = 0.0;
    for (std::size_t p = 0; p < 400; ++p)
      for (std::size_t c = 0; c < 2; ++c) s2 += std::pow(e(p, 32, c) - lim(32, c), 2);
    const double rms = std::sqrt(s2 / 400);
    EXPECT_LT(rms, 0.5 * prev);
    prev = rms;
  }
  EXPECT_LT(prev, 0.05);
}
