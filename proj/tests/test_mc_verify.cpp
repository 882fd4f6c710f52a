#include <gtest/gtest.h>

#include <cmath>

#include "voldev/mc_verify.hpp"

using namespace voldev;

namespace {

// ||K||^2 on [0, 1] for H = 0.1, from tests/oracles/rate_oracles.py.
constexpr double kMass = 2.25459464007214850107596705618;

ModelSpec gaussian_y(double eps) {
  ModelSpec s;
  s.model = RoughBergomi{0.0, 0.0, 0.0, 0.1};
  s.regime = SmallTimeLDP{eps};
  return s;
}

DeviationExperiment experiment(double threshold, std::vector<double> eps, std::size_t n) {
  DeviationExperiment ex;
  ex.model = gaussian_y(eps.front());
  ex.event = {1, Direction::ge, threshold, std::nullopt};
  ex.epsilons = std::move(eps);
  ex.n_paths = n;
  ex.seed = 42;
  ex.grid = TimeGrid::uniform(1.0, 64);
  return ex;
}

}  // namespace

TEST(McVerify, GaussianEventProbability) {
  const auto ex = experiment(1.0, {0.5}, 200000);
  const auto e = estimate_event_prob(ex, 0.5);
  EXPECT_NEAR(e.p_hat, 0.237679383451765315341625050619, 4.0 * e.std_error);
}

TEST(McVerify, ImportanceSamplingIsUnbiasedAndCheaper) {
  const double eps = 0.5, c = 3.0 * std::pow(eps, 0.1) * std::sqrt(kMass);
  auto plain = experiment(c, {eps}, 100000);
  auto is = plain;
  is.is_control = build_is_control(with_epsilon(is.model, eps), is.event, is.grid);
  const auto a = estimate_event_prob(plain, eps), b = estimate_event_prob(is, eps);
  EXPECT_NEAR(a.p_hat, b.p_hat, 4.0 * std::hypot(a.std_error, b.std_error));
  EXPECT_NEAR(b.p_hat, 0.5 * std::erfc(3.0 / std::sqrt(2.0)), 4.0 * b.std_error);
  EXPECT_GE(a.sample_variance / b.sample_variance, 10.0);
}

TEST(McVerify, SlopeMatchesExactProbabilityFit) {
  auto ex = experiment(1.0, {1e-2, 1e-4, 1e-6, 1e-8}, 20000);
  ex.is_control = build_is_control(ex.model, ex.event, ex.grid);
  // The exact tail probabilities fitted on the same speeds give 0.264076;
  // the rate itself is 0.221769, the gap being the log-prefactor.
  ex.reference_rate = 0.264076352618543;
  const auto r = ldp_slope(ex);
  ASSERT_TRUE(r.relative_gap);
  EXPECT_LT(*r.relative_gap, 0.02);
}

TEST(McVerify, SureEventHasZeroIntercept) {
  auto ex = experiment(-INFINITY, {0.2, 0.1, 0.05}, 1000);
  const auto e = estimate_event_prob(ex, 0.1);
  EXPECT_EQ(e.p_hat, 1.0);
  EXPECT_EQ(e.std_error, 0.0);
  const auto r = ldp_slope(ex);
  EXPECT_EQ(r.intercept, 0.0);
}

TEST(McVerify, FewHitsThrow) {
  auto ex = experiment(10.0, {0.2, 0.1, 0.05}, 1000);
  try {
    ldp_slope(ex);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_hits);
  }
}

TEST(McVerify, ValidatesSweep) {
  EXPECT_THROW(experiment(1.0, {0.1, 0.2}, 1000).validate(), Error);
  EXPECT_THROW(experiment(1.0, {0.1}, 999).validate(), Error);
}

TEST(McVerify, ThresholdAtMeanGivesZeroControl) {
  const auto m = gaussian_y(0.1);
  const auto g = TimeGrid::uniform(1.0, 32);
  const auto v = build_is_control(m, {1, Direction::ge, 0.0, std::nullopt}, g);
  for (std::size_t i = 0; i <= 32; ++i) EXPECT_EQ(v(i, 1), 0.0);
}

TEST(McVerify, ClosedFormControlHitsBoundary) {
  const auto m = gaussian_y(0.1);
  const auto g = TimeGrid::uniform(1.0, 64);
  const auto v = build_is_control(m, {1, Direction::ge, 0.8, std::nullopt}, g);
  // Left-constant controls, as the simulator applies them.
  ProductWeights A(KernelSpec::power_law(0.1), g, Interpolation::left_constant);
  double y = 0.0;
  for (std::size_t j = 0; j < 64; ++j) y += A.interval_mass(64, j) * v(j, 1);
  EXPECT_NEAR(y, 0.8, 1e-12);
}

TEST(McVerify, ProxiesStayBounded) {
  ModelSpec m = gaussian_y(0.2);
  const auto lv = moment_proxies(m, TimeGrid::uniform(1.0, 64), {0.2, 0.1, 0.05}, 4000, 7);
  ASSERT_EQ(lv.size(), 3u);
  for (std::size_t i = 1; i < lv.size(); ++i) {
    EXPECT_LE(lv[i].moment4, 2.0 * lv[0].moment4);
    EXPECT_LE(lv[i].holder, 2.0 * lv[0].holder);
  }
}

TEST(McVerify, MedianEventDoesNotDecay) {
  auto ex = experiment(0.0, {1e-2, 1e-4, 1e-6, 1e-8}, 10000);
  const auto r = ldp_slope(ex);
  EXPECT_NEAR(r.intercept, 0.0, 0.02);
}

TEST(McVerify, DeepSweepRecoversGaussianRate) {
  // Graded nodes let the piecewise-constant control reach the whole Gaussian
  // direction; on a coarse uniform grid the deep levels decay at the
  // discrete Cameron-Martin rate instead.
  auto ex = experiment(1.0, {1e-10, 1e-20, 1e-30, 1e-40}, 5000);
  ex.grid = TimeGrid::graded_to_horizon(1.0, 64, 8.0);
  ex.is_control = build_is_control(ex.model, ex.event, ex.grid);
  ex.reference_rate = 1.0 / (2.0 * kMass);
  const auto r = ldp_slope(ex);
  EXPECT_LT(*r.relative_gap, 0.02);
  EXPECT_TRUE(std::isfinite(r.intercept));
}

TEST(McVerify, HestonSolverControlIsUnbiased) {
  ModelSpec m;
  m.model = RoughHeston{1.0, 0.04, 0.3, -0.5, 0.04, 0.1};
  m.regime = SmallTimeLDP{0.05};
  DeviationExperiment ex;
  ex.model = m;
  ex.event = {0, Direction::ge, 0.3, std::nullopt};
  ex.epsilons = {0.05};
  ex.n_paths = 40000;
  ex.seed = 3;
  ex.grid = TimeGrid::uniform(1.0, 32);
  const auto plain = estimate_event_prob(ex, 0.05);
  ex.is_control = build_is_control(m, ex.event, ex.grid);
  const auto is = estimate_event_prob(ex, 0.05);
  ASSERT_GE(plain.hits, 20u);
  EXPECT_NEAR(plain.p_hat, is.p_hat, 4.0 * std::hypot(plain.std_error, is.std_error));
  EXPECT_LT(is.std_error, plain.std_error);
}
