#include <gtest/gtest.h>

#include <cmath>

#include "voldev/volterra_det.hpp"

using namespace voldev;

namespace {

// x = 1 + \int sqrt(x) v, v = -1 on [0, 2) and +1 on [2, 4].
LimitProblem feller(std::size_t n, BranchPolicy policy) {
  LimitProblem p;
  p.grid = TimeGrid::uniform(4.0, n);
  p.drift_kernel = {KernelSpec::zero()};
  p.diffusion_kernel = {KernelSpec::constant(1.0)};
  p.noise_dim = 1;
  p.x0 = {1.0};
  p.drift = [](std::size_t, double, std::span<const double>, std::span<double> o) { o[0] = 0.0; };
  p.diffusion = [](std::size_t, double, std::span<const double> x, std::span<double> o) {
    o[0] = std::sqrt(std::max(x[0], 0.0));
  };
  p.nonnegative = {true};
  p.control = Control(p.grid, 1);
  for (std::size_t i = 0; i <= n; ++i) p.control(i) = p.grid[i] < 2.0 ? -1.0 : 1.0;
  p.branch = policy;
  return p;
}

}  // namespace

TEST(VolterraDet, FellerContinuePositive) {
  const auto p = feller(4096, BranchPolicy::continue_positive);
  const auto rep = solve_ldp_limit(p);
  double err = 0.0;
  for (std::size_t i = 0; i <= 4096; ++i) {
    const double t = p.grid[i];
    err = std::max(err, std::abs(rep.path(i) - (t - 2) * (t - 2) / 4));
  }
  EXPECT_LT(err, 1e-8);
  EXPECT_EQ(rep.branch_taken, BranchTaken::positive_continuation);
  EXPECT_LT(certify_defect(p, rep.path), 1e-9);
}

TEST(VolterraDet, FellerAbsorbed) {
  const auto p = feller(4096, BranchPolicy::absorb_at_zero);
  const auto rep = solve_ldp_limit(p);
  double err = 0.0;
  for (std::size_t i = 0; i <= 4096; ++i) {
    const double t = p.grid[i];
    const double exact = t < 2.0 ? (t - 2) * (t - 2) / 4 : 0.0;
    err = std::max(err, std::abs(rep.path(i) - exact));
  }
  EXPECT_LT(err, 1e-8);
  EXPECT_EQ(rep.branch_taken, BranchTaken::absorbed);
}

TEST(VolterraDet, GlobalPicardLeavesFellerDomain) {
  // The first global sweep gives 1 - t, negative past t = 1.
  const auto p = feller(256, BranchPolicy::continue_positive);
  EXPECT_THROW(solve_ldp_limit_global(p), Error);
}

TEST(VolterraDet, MdpLimitMatchesMittagLeffler) {
  // Reference values from tests/oracles/volterra_oracles.py.
  const std::size_t n = 2048;
  const auto g = TimeGrid::uniform(1.0, n);
  GridFunction gb(g, 1), sig(g, 1);
  Control v(g, 1);
  for (std::size_t i = 0; i <= n; ++i) {
    gb(i) = -1.0;
    sig(i) = 0.5;
    v(i) = 1.0;
  }
  const auto psi = solve_mdp_limit(KernelSpec::power_law(0.1), gb, sig, v);
  EXPECT_NEAR(psi(n), 0.293336329528446851691, 2e-4);
  EXPECT_NEAR(psi(n / 2), 0.233533158662469906344, 2e-4);
}

TEST(VolterraDet, MdpLimitRefinement) {
  // Errors shrink under grid refinement (Richardson-type check).
  auto solve = [](std::size_t n) {
    const auto g = TimeGrid::uniform(1.0, n);
    GridFunction gb(g, 1), sig(g, 1);
    Control v(g, 1);
    for (std::size_t i = 0; i <= n; ++i) {
      gb(i) = -2.0;
      sig(i) = 1.0;
      v(i) = 1.0;
    }
    return solve_mdp_limit(KernelSpec::power_law(0.3), gb, sig, v)(n);
  };
  const double exact = 0.405101653818147168806;
  const double e1 = std::abs(solve(256) - exact), e2 = std::abs(solve(1024) - exact);
  EXPECT_LT(e2, e1);
  EXPECT_LT(e2, 1e-4);
}

TEST(VolterraDet, GlobalPicardContracts) {
  // Lipschitz linear problem: sweep sizes decrease.
  LimitProblem p;
  p.grid = TimeGrid::uniform(1.0, 128);
  p.drift_kernel = {KernelSpec::power_law(0.2)};
  p.diffusion_kernel = {KernelSpec::power_law(0.2)};
  p.noise_dim = 1;
  p.x0 = {0.3};
  p.drift = [](std::size_t, double, std::span<const double> x, std::span<double> o) { o[0] = -0.8 * x[0]; };
  p.diffusion = [](std::size_t, double, std::span<const double> x, std::span<double> o) { o[0] = std::cos(x[0]); };
  p.control = Control(p.grid, 1);
  for (std::size_t i = 0; i <= 128; ++i) p.control(i) = 1.0;
  const auto g = solve_ldp_limit_global(p);
  for (std::size_t k = 3; k < g.residual_history.size(); ++k)
    EXPECT_LE(g.residual_history[k], g.residual_history[k - 1] * 1.0000001);
  const auto m = solve_ldp_limit(p);
  double diff = 0.0;
  for (std::size_t i = 0; i <= 128; ++i) diff = std::max(diff, std::abs(g.path(i) - m.path(i)));
  EXPECT_LT(diff, 1e-9);
  EXPECT_LT(m.residual, 1e-9);
}

TEST(VolterraDet, ConstantDiffusionIsExact) {
  // x = y0 + \int K v with v constant: x(t) = y0 + v t^{H+1/2}/Gamma(H+3/2).
  LimitProblem p;
  p.grid = TimeGrid::uniform(1.0, 512);
  p.drift_kernel = {KernelSpec::zero()};
  p.diffusion_kernel = {KernelSpec::power_law(0.1)};
  p.noise_dim = 1;
  p.x0 = {-1.0};
  p.drift = [](std::size_t, double, std::span<const double>, std::span<double> o) { o[0] = 0.0; };
  p.diffusion = [](std::size_t, double, std::span<const double>, std::span<double> o) { o[0] = 1.0; };
  p.control = Control(p.grid, 1);
  for (std::size_t i = 0; i <= 512; ++i) p.control(i) = 0.7;
  const auto r = solve_ldp_limit(p);
  EXPECT_NEAR(r.path(512), -1.0 + 0.7 / std::tgamma(1.6), 1e-13);
  EXPECT_LT(certify_defect(p, r.path), 1e-9);
}
