#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "voldev/rate_functions.hpp"

using namespace voldev;
using boost::math::tgamma;

namespace {

constexpr double kL2PowerLaw01 = 2.25459464007214850108;

double sup_gap(const GridFunction& a, const GridFunction& b, std::size_t skip = 3) {
  double s = 0.0;
  for (std::size_t i = skip; i < a.size(); ++i)
    for (std::size_t c = 0; c < a.dim(); ++c) s = std::max(s, std::abs(a(i, c) - b(i, c)));
  return s;
}

GridFunction fn(const TimeGrid& g, std::function<double(double)> f) { return GridFunction::from_function(g, f); }

}  // namespace

TEST(RatePair, NullControlsCostNothing) {
  ModelSpec spec{RoughSteinStein{}, SmallTimeLDP{}};
  auto g = TimeGrid::uniform(1.0, 256);
  auto r = ldp_rate_pair(spec, fn(g, [](double) { return 0.0; }), fn(g, [](double) { return 0.2; }));
  EXPECT_EQ(r.value, 0.0);
}

TEST(RatePair, BergomiPowerPath) {
  const double H = 0.1, c = 0.7, y0 = -1.0;
  ModelSpec spec{RoughBergomi{0.0, 0.0, y0, H}, SmallTimeLDP{}};
  auto g = TimeGrid::uniform(1.0, 2048);
  auto r = ldp_rate_pair(spec, fn(g, [](double) { return 0.0; }),
                         fn(g, [&](double t) { return y0 + c * std::pow(t, H + 0.5); }));
  const double exact = 0.5 * c * c * std::pow(tgamma(H + 1.5), 2);
  EXPECT_NEAR(r.value, exact, 1e-3 * exact);
}

TEST(RatePair, SteinSteinLinearSpot) {
  ModelSpec spec{RoughSteinStein{1.0, 0.2, 0.3, 0.0, 0.2, 0.1}, SmallTimeLDP{}};
  auto g = TimeGrid::uniform(2.0, 512);
  auto r = ldp_rate_pair(spec, fn(g, [](double t) { return 0.2 * t; }), fn(g, [](double) { return 0.2; }));
  EXPECT_NEAR(r.value, 1.0, 1e-12);
}

TEST(RatePair, JumpIsNotAbsolutelyContinuous) {
  ModelSpec spec{RoughSteinStein{}, SmallTimeLDP{}};
  auto g = TimeGrid::uniform(1.0, 1024);
  auto r = ldp_rate_pair(spec, fn(g, [](double t) { return t < 0.5 ? 0.0 : 0.3; }), fn(g, [](double) { return 0.2; }));
  EXPECT_TRUE(std::isinf(r.value));
  auto wrong_start = ldp_rate_pair(spec, fn(g, [](double) { return 0.0; }), fn(g, [](double) { return 0.3; }));
  EXPECT_TRUE(std::isinf(wrong_start.value));
}

TEST(RatePair, CorrelatedVanishingZetaIsNotApplicable) {
  ModelSpec spec{RoughSteinStein{1.0, 0.2, 0.0, -0.5, 0.2, 0.1}, SmallTimeLDP{}};
  auto g = TimeGrid::uniform(1.0, 64);
  EXPECT_THROW(ldp_rate_pair(spec, fn(g, [](double) { return 0.0; }), fn(g, [](double) { return 0.2; })), Error);
}

TEST(HestonRate, PowerPath) {
  const double H = 0.3, c = 0.1, y0 = 0.04, xi = 0.5;
  ModelSpec spec{RoughHeston{1.0, 0.04, xi, 0.0, y0, H}, SmallTimeLDP{}};
  auto g = TimeGrid::uniform(1.0, 2048);
  auto phi = fn(g, [](double) { return 0.0; });
  auto vphi = fn(g, [&](double t) { return y0 + c * std::pow(t, H + 0.5); });
  auto r0 = heston_rate(spec, phi, vphi, 0.0);
  // 1/2 \int_0^1 (c Gamma(H+3/2))^2 / (xi^2 (y0 + c t^{0.8})) dt
  const double exact = 0.5 * std::pow(c * tgamma(H + 1.5) / xi, 2) * 11.5834967257367295701;
  EXPECT_NEAR(r0.value, exact, 1e-3 * exact);
  auto rd = heston_rate(spec, phi, vphi, 1e-3);
  EXPECT_LE(std::abs(rd.value - r0.value), 1e-2);
  ASSERT_TRUE(rd.richardson.has_value());
  EXPECT_LT(std::abs(*rd.richardson - r0.value), std::abs(rd.value - r0.value));
  auto neg = fn(g, [](double t) { return 0.04 - t; });
  EXPECT_THROW(heston_rate(spec, phi, neg, 0.0), Error);
}

TEST(TailRate, SteinSteinPowerPath) {
  const double H = 0.2, c = 0.5, xi = 0.4;
  ModelSpec spec{RoughSteinStein{0.0, 0.0, xi, 0.0, 0.2, H}, TailLDP{}};
  auto g = TimeGrid::uniform(1.0, 2048);
  auto vphi = fn(g, [&](double t) { return c * std::pow(t, H + 0.5); });
  auto phi = fn(g, [&](double t) { return -0.25 * c * c * std::pow(t, 2 * H + 2) / (H + 1); });
  auto r = tail_rate_steinstein(spec, phi, vphi);
  const double exact = 0.5 * std::pow(c * tgamma(H + 1.5) / xi, 2);
  EXPECT_NEAR(r.value, exact, 1e-3 * exact);
}

TEST(TailRate, HestonPowerPathMatchesTrapezoid) {
  const double H = 0.3, c = 0.5, xi = 0.4;
  ModelSpec spec{RoughHeston{0.0, 0.04, xi, 0.0, 0.04, H}, TailLDP{}};
  auto g = TimeGrid::uniform(1.0, 2048);
  auto vphi = fn(g, [&](double t) { return c * std::pow(t, H + 0.5); });
  auto phi = fn(g, [&](double t) { return -0.5 * c * std::pow(t, H + 1.5) / (H + 1.5); });
  auto r = tail_rate_heston(spec, phi, vphi, 0.0);
  GridFunction v(g, 1);
  for (std::size_t i = 1; i < g.size(); ++i)
    v(i) = c * tgamma(H + 1.5) * std::pow(g[i], -(H + 0.5) / 2) / (xi * std::sqrt(c));
  EXPECT_NEAR(r.value, energy(v), 2e-3 * energy(v));
  auto rd = tail_rate_heston(spec, phi, vphi, 1e-3);
  EXPECT_LE(std::abs(rd.value - r.value), 1e-2 * r.value);
  ASSERT_TRUE(rd.richardson.has_value());
  EXPECT_LE(std::abs(*rd.richardson - r.value), 1e-2);
}

TEST(TailRate, SteinSteinMatchesTailMdpOnY) {
  RoughSteinStein m{0.7, 0.2, 0.4, 0.0, 0.2, 0.2};
  auto g = TimeGrid::uniform(1.0, 512);
  auto zero = fn(g, [](double) { return 0.0; });
  auto vphi = fn(g, [](double t) { return 0.3 * std::sin(2.0 * t); });
  auto a = tail_rate_steinstein(ModelSpec{m, TailLDP{}}, zero, vphi);
  auto b = mdp_rate_pair(ModelSpec{m, TailMDP{}}, zero, vphi);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR((*a.optimal_control)(i, 1), (*b.optimal_control)(i, 1), 1e-10);
}

TEST(MdpRate, LinearSpotAndScaling) {
  RoughHeston h{1.0, 0.04, 0.3, -0.6, 0.04, 0.3};
  ModelSpec spec{h, SmallTimeMDP{1.0, 0.1}};
  auto g = TimeGrid::uniform(1.0, 512);
  spec.model = RoughHeston{1.0, 0.04, 0.3, 0.0, 0.04, 0.3};
  auto r = mdp_rate_pair(spec, fn(g, [](double t) { return 0.1 * t; }), fn(g, [](double) { return 0.04; }));
  EXPECT_NEAR(r.value, 0.125, 1e-12);
  EXPECT_NEAR(mdp_rate_terminal_x(spec, 0.1), 0.125, 1e-15);
  EXPECT_EQ(mdp_rate_terminal_y(2.0), 2.0);

  spec.model = h;
  auto phi = fn(g, [](double t) { return 0.3 * t * t - 0.1 * t; });
  auto vphi = fn(g, [](double t) { return 0.04 + 0.2 * std::pow(t, 0.8) - 0.1 * t; });
  const double c = 2.5;
  auto cphi = fn(g, [&](double t) { return c * (0.3 * t * t - 0.1 * t); });
  auto cvphi = fn(g, [&](double t) { return 0.04 + c * (0.2 * std::pow(t, 0.8) - 0.1 * t); });
  const double base = mdp_rate_pair(spec, phi, vphi).value;
  EXPECT_NEAR(mdp_rate_pair(spec, cphi, cvphi).value, c * c * base, 1e-10 * c * c * base);
}

TEST(MdpRate, DegenerateCoefficients) {
  ModelSpec spec{RoughHeston{1.0, 0.04, 0.3, 0.0, 0.0, 0.3}, SmallTimeMDP{1.0, 0.1}};
  auto g = TimeGrid::uniform(1.0, 16);
  EXPECT_THROW(mdp_rate_pair(spec, fn(g, [](double) { return 0.0; }), fn(g, [](double) { return 0.0; })), Error);
  EXPECT_THROW(mdp_rate_terminal_x(spec, 0.1), Error);
}

TEST(MultifactorMdp, TwoFactorForwardSubstitution) {
  MultiRoughBergomi m;
  m.L = {1.0, 0.0, 0.5, 2.0};
  m.y0 = {-1.0, -2.0};
  m.rho = {-0.3, -0.2};
  ModelSpec spec{m, SmallTimeMDP{1.0, 0.05}};
  auto g = TimeGrid::uniform(1.0, 1024);
  auto phi = fn(g, [](double t) { return 0.2 * t; });
  GridFunction vphi(g, 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    vphi(i, 0) = -1.0 + 0.3 * std::pow(g[i], 0.6);
    vphi(i, 1) = -2.0 - 0.1 * std::pow(g[i], 0.6);
  }
  auto r = multifactor_mdp_rate(spec, phi, vphi);
  const double G = tgamma(1.6);
  const double v1 = 0.3 * G, v2 = (-0.1 * G - 0.5 * v1) / 2.0;
  for (std::size_t i = 5; i < g.size(); i += 97) {
    EXPECT_NEAR((*r.optimal_control)(i, 1), v1, 2e-3);
    EXPECT_NEAR((*r.optimal_control)(i, 2), v2, 2e-3);
  }
  auto zero = multifactor_mdp_rate(spec, fn(g, [](double) { return 0.0; }),
                                   GridFunction::stack({fn(g, [](double) { return -1.0; }), fn(g, [](double) { return -2.0; })}));
  EXPECT_EQ(zero.value, 0.0);

  m.hurst = {0.1, 0.3};
  m.L = {1.0, 0.0, 0.0, 1.0};
  ModelSpec split{m, SmallTimeMDP{1.0, 0.05}};
  EXPECT_TRUE(std::isinf(multifactor_mdp_rate(split, phi, vphi).value));
  m.L = {0.0, 0.0, 0.0, 1.0};
  EXPECT_THROW(multifactor_mdp_rate(ModelSpec{m, SmallTimeMDP{1.0, 0.05}}, phi, vphi), Error);
}

// Controls recovered by each inversion regenerate the input path.
TEST(RoundTrip, ClosedFormControlsRegeneratePaths) {
  auto g = TimeGrid::uniform(1.0, 2048);
  {
    RoughSteinStein m{1.0, 0.2, 0.3, -0.4, 0.2, 0.1};
    ModelSpec spec{m, SmallTimeLDP{}};
    auto phi = fn(g, [](double t) { return 0.3 * t - 0.1 * t * t; });
    auto vphi = fn(g, [](double t) { return 0.2 + 0.15 * std::pow(t, 0.6) + 0.05 * t; });
    auto r = ldp_rate_pair(spec, phi, vphi);
    auto path = solve_ldp_limit(ldp_limit_problem(spec, g, *r.optimal_control)).path;
    EXPECT_LT(sup_gap(path, *r.optimal_path), 1e-3) << "ldp pair";
  }
  {
    RoughHeston m{1.0, 0.04, 0.3, -0.5, 0.04, 0.3};
    ModelSpec spec{m, SmallTimeLDP{}};
    auto phi = fn(g, [](double t) { return 0.1 * t; });
    auto vphi = fn(g, [](double t) { return 0.04 + 0.05 * std::pow(t, 0.8) + 0.02 * t * t; });
    auto r = heston_rate(spec, phi, vphi, 1e-4);
    auto path = solve_ldp_limit(ldp_limit_problem(spec, g, *r.optimal_control)).path;
    EXPECT_LT(sup_gap(path, *r.optimal_path), 1e-3) << "heston";
  }
  {
    RoughSteinStein m{0.8, 0.2, 0.4, -0.3, 0.2, 0.2};
    ModelSpec spec{m, TailLDP{}};
    auto vphi = fn(g, [](double t) { return 0.5 * std::pow(t, 0.7) + 0.2 * t; });
    auto phi = fn(g, [](double t) { return 0.4 * t + 0.1 * t * t; });
    auto r = tail_rate_steinstein(spec, phi, vphi);
    auto path = solve_ldp_limit(ldp_limit_problem(spec, g, *r.optimal_control)).path;
    EXPECT_LT(sup_gap(path, *r.optimal_path), 1e-3) << "tail stein-stein";
  }
  {
    RoughHeston m{0.5, 0.04, 0.4, -0.3, 0.04, 0.3};
    ModelSpec spec{m, TailLDP{}};
    auto vphi = fn(g, [](double t) { return 0.5 * std::pow(t, 0.8) + 0.3 * t; });
    auto phi = fn(g, [](double t) { return 0.2 * t; });
    auto r = tail_rate_heston(spec, phi, vphi, 1e-4);
    auto path = solve_ldp_limit(ldp_limit_problem(spec, g, *r.optimal_control)).path;
    EXPECT_LT(sup_gap(path, *r.optimal_path), 1e-3) << "tail heston";
  }
  {
    RoughHeston m{1.0, 0.04, 0.3, -0.5, 0.04, 0.3};
    ModelSpec spec{m, SmallTimeMDP{1.0, 0.1}};
    auto phi = fn(g, [](double t) { return 0.3 * t - 0.2 * t * t; });
    auto vphi = fn(g, [](double t) { return 0.04 + 0.1 * std::pow(t, 0.8); });
    auto r = mdp_rate_pair(spec, phi, vphi);
    auto path = solve_ldp_limit(mdp_limit_problem(spec, g, *r.optimal_control)).path;
    GridFunction dev = *r.optimal_path;
    for (std::size_t i = 0; i < g.size(); ++i) dev(i, 1) -= 0.04;
    EXPECT_LT(sup_gap(path, dev), 1e-3) << "mdp";
  }
}

TEST(TerminalRate, CameronMartinGaussianMarginal) {
  ModelSpec spec{RoughBergomi{0.0, 0.0, 0.0, 0.1}, SmallTimeLDP{}};
  TerminalRateOptions opt;
  opt.component = 1;
  const TimeGrid g = terminal_grid(1.0, opt.n_steps, opt.grading);
  ProductWeights w(KernelSpec::power_law(0.1), g);
  const auto tw = trapezoid_weights(g);
  double q = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) q += w(g.n_steps(), j) * w(g.n_steps(), j) / tw[j];
  for (double y : {0.5, 1.0, 2.0}) {
    auto r = ldp_rate_terminal(spec, y, opt);
    EXPECT_NEAR(r.value, y * y / (2.0 * q), 1e-6 * r.value) << y;
    EXPECT_NEAR(r.value, y * y / (2.0 * kL2PowerLaw01), 1e-2 * r.value) << y;
    EXPECT_LT(r.constraint_violation, 1e-8);
  }
  EXPECT_EQ(ldp_rate_terminal(spec, 0.0, opt).value, 0.0);
}

TEST(TerminalRate, MdpFormulasMatchMinimizer) {
  RoughHeston h{1.0, 0.04, 0.3, 0.0, 0.04, 0.3};
  ModelSpec spec{h, SmallTimeMDP{1.0, 0.1}};
  TerminalRateOptions opt;
  const double x = 0.1;
  auto rx = ldp_rate_terminal(spec, x, opt);
  EXPECT_NEAR(rx.value, mdp_rate_terminal_x(spec, x), 1e-2 * rx.value);
  opt.component = 1;
  const double scale = 0.3 * 0.2 * std::sqrt(KernelSpec::power_law(0.3).l2_norm_sq(1.0));
  auto ry = ldp_rate_terminal(spec, 1.5 * scale, opt);
  EXPECT_NEAR(ry.value, mdp_rate_terminal_y(1.5), 1e-2 * ry.value);
  EXPECT_NEAR(mdp_rate_terminal_y(spec, 1.5 * scale), mdp_rate_terminal_y(1.5), 1e-12);
}

TEST(TerminalRate, MonotoneInTargetWithoutCorrelation) {
  ModelSpec spec{RoughSteinStein{1.0, 0.2, 0.3, 0.0, 0.2, 0.1}, SmallTimeLDP{}};
  TerminalRateOptions opt;
  opt.n_steps = 128;
  double prev = 0.0;
  for (double x : {0.05, 0.1, 0.2, 0.4}) {
    auto r = ldp_rate_terminal(spec, x, opt);
    EXPECT_GE(r.value, prev) << x;
    prev = r.value;
  }
}
