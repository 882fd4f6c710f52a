#include <gtest/gtest.h>

#include <cmath>

#include "voldev/implied_vol.hpp"

using namespace voldev;

TEST(BlackScholes, ReferenceValues) {
  EXPECT_EQ(bs_call(1.0, 0.0, 0.0), 0.0);
  EXPECT_NEAR(bs_call(1.0, 0.0, 0.2), 2.0 * normal_cdf(0.1) - 1.0, 1e-15);
  EXPECT_NEAR(bs_call(1.0, 0.0, 0.2), 0.0796556745, 1e-9);
  EXPECT_NEAR(bs_call(1.0, -10.0, 0.2), 1.0 - std::exp(-10.0), 1e-12);
}

TEST(BlackScholes, MonotoneInVolConvexInStrike) {
  for (double t : {0.5, 1.0})
    for (double k = -0.3; k <= 0.3; k += 0.1) {
      EXPECT_LT(bs_call(t, k, 0.1), bs_call(t, k, 0.2));
      const double h = 0.05;
      // Convexity in the strike K = e^k.
      const double K0 = std::exp(k - h), K1 = std::exp(k), K2 = std::exp(k + h);
      const double c0 = bs_call(t, k - h, 0.3), c1 = bs_call(t, k, 0.3), c2 = bs_call(t, k + h, 0.3);
      EXPECT_GE((c2 - c1) / (K2 - K1), (c1 - c0) / (K1 - K0));
    }
}

TEST(ImpliedVol, RoundTripLattice) {
  for (double t : {0.1, 0.5, 2.0})
    for (double k : {-0.2, 0.0, 0.2})
      for (double s : {0.1, 0.3, 0.8}) {
        const double price = bs_call(t, k, s);
        const double iv = implied_vol(price, t, k);
        EXPECT_NEAR(bs_call(t, k, iv), price, 1e-10);
        // The vol is only pinned where the price carries it.
        if (bs_vega(t, k, s) > 1e-4) EXPECT_NEAR(iv, s, 1e-8) << t << " " << k << " " << s;
      }
  EXPECT_NEAR(implied_vol(0.0796556745, 1.0, 0.0), 0.2, 1e-8);
  EXPECT_THROW(implied_vol(0.0, 1.0, 0.0), Error);
  EXPECT_THROW(implied_vol(1.0 - std::exp(-0.2), 1.0, -0.2), Error);
}

TEST(Smile, MdpIsStrikeIndependent) {
  ModelSpec spec{RoughHeston{1.0, 0.04, 0.3, -0.5, 0.04, 0.3}, SmallTimeLDP{}};
  for (double k : {0.1, 0.5, 1.0}) EXPECT_NEAR(smile_mdp(spec, k, 0.01, 0.15).implied_vol, 0.2, 1e-15);
  EXPECT_NEAR(mdp_rate_terminal_x(ModelSpec{spec.model, SmallTimeMDP{1.0, 0.15}}, 0.3), 0.09 / 0.08, 1e-15);
}

TEST(Smile, LdpFlatForConstantVolatility) {
  // Sigma = y0^2 constant, zeta = 0, H = 1/2: Black-Scholes with sigma = y0.
  ModelSpec spec{RoughSteinStein{0.0, 0.0, 0.0, 0.0, 0.25, 0.5}, SmallTimeLDP{}};
  SmileOptions opt;
  opt.rate.n_steps = 64;
  for (double k : {0.1, -0.2}) {
    auto p = smile_ldp(spec, k, 0.5, opt);
    EXPECT_NEAR(p.implied_vol, 0.25, 1e-6) << k;
    EXPECT_EQ(p.normalization, 1.0);
  }
}

TEST(Smile, LdpSymmetricWithoutCorrelation) {
  ModelSpec spec{RoughBergomi{0.0, 0.0, std::log(0.04), 0.3}, SmallTimeLDP{}};
  SmileOptions opt;
  opt.rate.n_steps = 64;
  const double a = smile_ldp(spec, 0.2, 0.1, opt).implied_vol, b = smile_ldp(spec, -0.2, 0.1, opt).implied_vol;
  EXPECT_NEAR(a, b, 1e-6 * a);
}

TEST(Smile, GaussianTailPrefactor) {
  // Black-Scholes (H = 1/2): t log P(X_t >= k) -> -k^2 / (2 sigma^2).
  const double sigma = 0.3, k = 0.05, t = 1e-4;
  const double z = (k + 0.5 * sigma * sigma * t) / (sigma * std::sqrt(t));
  const double lp = std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
  const double ref = -k * k / (2 * sigma * sigma);
  EXPECT_NEAR(t * lp, ref, 0.05 * std::abs(ref));
}

TEST(Smile, TailConstantVolatilityIsDegenerate) {
  ModelSpec spec{RoughSteinStein{0.0, 0.0, 0.0, 0.0, 0.25, 0.5}, TailLDP{}};
  SmileOptions opt;
  opt.rate.n_steps = 32;
  opt.grid_points = 3;
  EXPECT_EQ(smile_tail(spec, 1.0, 5.0, opt).implied_vol, 0.0);
  EXPECT_EQ(smile_tail(spec, 1.0, 9.0, opt).implied_vol, 0.0);
}

TEST(Smile, TailSteinSteinPositive) {
  ModelSpec spec{RoughSteinStein{1.0, 0.2, 0.5, 0.0, 0.2, 0.3}, TailLDP{}};
  SmileOptions opt;
  opt.rate.n_steps = 64;
  opt.grid_points = 5;
  auto p = smile_tail(spec, 1.0, 10.0, opt);
  EXPECT_GT(p.implied_vol, 0.0);
  EXPECT_TRUE(std::isfinite(p.implied_vol));
}

TEST(McSmile, FlatForConstantVolatility) {
  ModelSpec spec{RoughSteinStein{0.0, 0.0, 0.0, 0.0, 0.25, 0.5}, SmallTimeLDP{}};
  auto pts = mc_smile(spec, 0.5, {-0.2, 0.0, 0.2}, 40000, 17);
  for (const auto& p : pts) {
    ASSERT_TRUE(p.std_error.has_value());
    EXPECT_NEAR(p.implied_vol, 0.25, 4.0 * *p.std_error) << p.k;
  }
}

TEST(McSmile, PutCallParity) {
  ModelSpec spec{RoughBergomi{0.0, -0.7, std::log(0.04), 0.2}, SmallTimeLDP{}};
  const std::vector<double> ks{-0.1, 0.05};
  auto pr = mc_prices(spec, 0.25, ks, 20000, 5);
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const double resid = pr.call[j] - pr.put[j] - (1.0 - std::exp(ks[j]));
    EXPECT_LT(std::abs(resid), 3.0 * pr.forward_se + 1e-12);
  }
}
