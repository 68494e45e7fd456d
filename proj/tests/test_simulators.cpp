#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cde/errors.hpp"
#include "cde/evaluation.hpp"
#include "cde/moments.hpp"
#include "cde/simulators.hpp"

namespace cde {
namespace {

// n = 1e4 Kolmogorov-Smirnov critical value at the 1% level.
constexpr double kKsCritical = 1.628 / 100.0;

std::vector<std::unique_ptr<Simulator>> all_simulators() {
  std::vector<std::unique_ptr<Simulator>> out;
  for (const auto& name : simulator_names()) out.push_back(make_simulator(name));
  return out;
}

double mass(const Simulator& sim, double x) {
  const std::vector<double> xv = {x};
  return integrate([&](double y) { return sim.pdf(xv, std::span<const double>(&y, 1)); }, sim.support(xv), 10000);
}

TEST(Econ, PointValues) {
  EXPECT_NEAR(econ_pdf(0.0, 0.0), 0.398942, 1e-6);
  EXPECT_NEAR(econ_pdf(1.0, 1.0), 0.199471, 1e-6);
  EXPECT_NEAR(econ_pdf(1.0, 1.0), 1.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi)), 1e-15);
  EXPECT_THROW(econ_pdf(-0.1, 0.0), DomainError);
}

TEST(Econ, Normalized) {
  const EconDensity sim;
  for (double x : {0.0, 0.5, 2.0}) EXPECT_NEAR(mass(sim, x), 1.0, 1e-8);
}

TEST(Econ, SamplesAreHalfNormalWithCenteredNoise) {
  const EconDensity sim;
  const auto d = sim.sample(100000, 3);
  double resid = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_GE(d.x(i, 0), 0.0);
    resid += d.y(i, 0) - d.x(i, 0) * d.x(i, 0);
    scale += 1.0 + d.x(i, 0);
  }
  const double n = static_cast<double>(d.size());
  EXPECT_LT(std::abs(resid / n), 4.0 * (scale / n) / std::sqrt(n));
  EXPECT_EQ(sim.sample(50, 8).y, sim.sample(50, 8).y);
}

TEST(ArmaJump, ConditionalMeanAndNoJumpLimit) {
  const ArmaJumpParams p;
  const auto g = armajump_conditional(p, 0.0);
  EXPECT_NEAR(g.closed_form_moments().mean[0], 0.07, 1e-15);
  ArmaJumpParams nojump;
  nojump.p = 0.0;
  const auto single = armajump_conditional(nojump, 0.3);
  for (double y : {0.0, 0.1, 0.2}) {
    EXPECT_NEAR(single.pdf(y), normal_pdf(y, 0.1 * 0.8 + 0.2 * 0.3, 0.05), 1e-12);
  }
}

TEST(ArmaJump, MatchesHandWrittenMixture) {
  const ArmaJump sim;
  for (double x : {-0.1, 0.05, 0.3}) {
    for (double y = -0.4; y <= 0.5; y += 0.01) {
      const double expected = std::log(0.9 * std::exp(-0.5 * std::pow((y - (0.08 + 0.2 * x)) / 0.05, 2)) /
                                           (0.05 * std::sqrt(2 * std::numbers::pi)) +
                                       0.1 * std::exp(-0.5 * std::pow((y - 0.2 * (x - 0.1)) / 0.15, 2)) /
                                           (0.15 * std::sqrt(2 * std::numbers::pi)));
      const std::vector<double> xv = {x}, yv = {y};
      EXPECT_NEAR(sim.log_pdf(xv, yv), expected, 1e-13);
    }
  }
}

TEST(ArmaJump, NegativeSkewAtDefaults) {
  const ArmaJump sim;
  for (double x : {0.0, 0.1}) {
    const std::vector<double> xv = {x};
    const auto m = numeric_moments_1d([&](double y) { return sim.pdf(xv, std::span<const double>(&y, 1)); },
                                      sim.support(xv));
    EXPECT_LT(*m.skewness, 0.0);
    EXPECT_GT(*m.excess_kurtosis, 0.0);
  }
}

TEST(ArmaJump, InvalidParameters) {
  EXPECT_THROW(make_simulator("arma_jump", {{"p", 1.5}}), ConfigError);
  EXPECT_THROW(make_simulator("arma_jump", {{"sigma", 0.0}}), ConfigError);
  EXPECT_THROW(make_simulator("arma_jump", {{"alpha", 1.0}}), ConfigError);
  EXPECT_THROW(make_simulator("arma_jump", {{"sigmaa", 1.0}}), ConfigError);
}

TEST(SkewNormal, ZeroShapeReducesToGaussian) {
  SkewNormalParams p;
  p.alpha_low = p.alpha_high = 0.0;
  for (double x : {-1.0, 0.3}) {
    EXPECT_NEAR(skewnormal_pdf(p, x, p.location(x)), 1.0 / (p.scale(x) * std::sqrt(2.0 * std::numbers::pi)), 1e-12);
    EXPECT_NEAR(skewnormal_pdf(p, x, 0.07), normal_pdf(0.07, p.location(x), p.scale(x)), 1e-12);
  }
}

TEST(SkewNormal, Normalized) {
  const SkewNormal sim;
  for (double x : {-1.0, 0.0, 1.0}) EXPECT_NEAR(mass(sim, x), 1.0, 1e-7);
}

TEST(SkewNormal, SkewnessRisesTowardZero) {
  const SkewNormal sim;
  auto skew = [&](double x) {
    const std::vector<double> xv = {x};
    return *numeric_moments_1d([&](double y) { return sim.pdf(xv, std::span<const double>(&y, 1)); },
                               sim.support(xv))
                .skewness;
  };
  EXPECT_LT(skew(-1.0), skew(1.0));
  EXPECT_LE(skew(1.0), 0.0);
}

TEST(SkewNormal, TailLogDensityStaysFinite) {
  const SkewNormalParams p;
  const double far_right = skewnormal_log_pdf(p, 0.0, 3.0);
  EXPECT_TRUE(std::isfinite(far_right));
  EXPECT_LT(far_right, -1000.0);
}

TEST(SkewNormal, UnconditionalVolatilityIsSmall) {
  const auto d = SkewNormal().sample(100000, 1);
  const auto m = mean_std(d.y.column(0));
  EXPECT_GT(m.std, 0.04);
  EXPECT_LT(m.std, 0.08);
}

TEST(Gmm, IdenticalXComponentsKeepPriorWeights) {
  auto p = FactorizedGmmParams::random(4, 1, 1, 2);
  for (std::size_t k = 0; k < 4; ++k) {
    p.x_means(k, 0) = 0.5;
    p.x_scales(k, 0) = 1.0;
  }
  for (double x : {-3.0, 0.0, 4.0}) {
    const std::vector<double> xv = {x};
    const auto g = factorized_gmm_conditional(p, xv);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g.weight(k), p.weights[k], 1e-14);
  }
}

TEST(Gmm, DominantComponentAtItsXMean) {
  FactorizedGmmParams p;
  p.weights = {0.3, 0.7};
  p.x_means = Matrix(2, 1, {-10.0, 10.0});
  p.x_scales = Matrix(2, 1, {0.5, 0.5});
  p.y_means = Matrix(2, 1, {1.0, 2.0});
  p.y_scales = Matrix(2, 1, {1.0, 1.0});
  const std::vector<double> x = {-10.0};
  EXPECT_NEAR(factorized_gmm_conditional(p, x).weight(0), 1.0, 1e-12);
}

TEST(Gmm, WeightsMatchJointQuadrature) {
  const auto p = FactorizedGmmParams::random(5, 1, 1, 7);
  for (double x : {-2.0, 0.0, 1.5}) {
    const std::vector<double> xv = {x};
    const auto g = factorized_gmm_conditional(p, xv);
    std::vector<double> per(5);
    double total = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      // integral over y of w_k N(y) N(x) for component k alone
      const double my = p.y_means(k, 0), sy = p.y_scales(k, 0);
      per[k] = integrate(
          [&](double y) {
            return p.weights[k] * normal_pdf(y, my, sy) * normal_pdf(x, p.x_means(k, 0), p.x_scales(k, 0));
          },
          {my - 12 * sy, my + 12 * sy}, 2000);
      total += per[k];
    }
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(g.weight(k), per[k] / total, 1e-8);
  }
}

TEST(Gmm, WeightUnderflowIsReported) {
  FactorizedGmmParams p;
  p.weights = {1.0};
  p.x_means = Matrix(1, 1, 0.0);
  p.x_scales = Matrix(1, 1, 1e-3);
  p.y_means = Matrix(1, 1, 0.0);
  p.y_scales = Matrix(1, 1, 1.0);
  const std::vector<double> far = {1e200};
  EXPECT_THROW(factorized_gmm_conditional(p, far), DomainError);
}

TEST(Gmm, JsonRoundTrip) {
  const auto p = FactorizedGmmParams::random(5, 2, 1, 11);
  const auto back = FactorizedGmmParams::from_json(nlohmann::json::parse(p.to_json().dump()));
  EXPECT_EQ(back.to_json(), p.to_json());
  EXPECT_EQ(FactorizedGmmParams::from_json({{"param_seed", 11}, {"x_dim", 2}}).to_json(), p.to_json());
}

TEST(Percentiles, HalfNormalMedian) {
  const EconDensity sim;
  // Phi^{-1}(0.75)
  EXPECT_NEAR(sim.x_percentile(0.5), 0.6744897501960817, 0.01);
  EXPECT_LT(sim.x_percentile(0.1), sim.x_percentile(0.9));
  EXPECT_EQ(sim.x_percentile(0.3), EconDensity().x_percentile(0.3));
  EXPECT_THROW(sim.x_percentile(1.0), ConfigError);
}

TEST(AllSimulators, NormalizedAndNonNegativeOverPercentileRange) {
  for (const auto& sim : all_simulators()) {
    const double lo = sim->x_percentile(0.01), hi = sim->x_percentile(0.99);
    for (int i = 0; i < 10; ++i) {
      const double x = lo + (hi - lo) * i / 9.0;
      EXPECT_NEAR(mass(*sim, x), 1.0, 1e-6) << sim->name() << " at x = " << x;
      const std::vector<double> xv = {x};
      const auto s = sim->support(xv);
      for (double y = s.lo; y <= s.hi; y += s.width() / 97.0) {
        EXPECT_GE(sim->pdf(xv, std::span<const double>(&y, 1)), 0.0);
      }
    }
  }
}

TEST(AllSimulators, ConditionalSamplesMatchPdf) {
  for (const auto& sim : all_simulators()) {
    for (double q : {0.2, 0.5, 0.8}) {
      const std::vector<double> x = {sim->x_percentile(q)};
      Rng rng(derive_seed(5, sim->name()));
      const auto s = sim->sample_conditional(x, 10000, rng);
      EXPECT_LT(ks_statistic_conditional(*sim, x, s.column(0)), kKsCritical) << sim->name();
    }
  }
}

TEST(AllSimulators, JointSamplesAgreeWithConditional) {
  // Samples whose x falls in a narrow window approximate p(y | x0).
  for (const auto& sim : all_simulators()) {
    const auto d = sim->sample(400000, 21);
    const std::vector<double> x0 = {sim->x_percentile(0.5)};
    const double half_width = 0.01 * (sim->x_percentile(0.9) - sim->x_percentile(0.1));
    std::vector<double> ys;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (std::abs(d.x(i, 0) - x0[0]) < half_width) ys.push_back(d.y(i, 0));
    }
    ASSERT_GT(ys.size(), 1000u) << sim->name();
    const double crit = 1.628 / std::sqrt(static_cast<double>(ys.size()));
    EXPECT_LT(ks_statistic_conditional(*sim, x0, ys), crit + 0.01) << sim->name();
  }
}

TEST(AllSimulators, DeterministicSampling) {
  for (const auto& sim : all_simulators()) {
    const auto a = sim->sample(300, 4), b = sim->sample(300, 4), c = sim->sample(300, 5);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.y, b.y);
    EXPECT_NE(a.y, c.y);
  }
}

TEST(Factory, UnknownNameListsValidOnes) {
  try {
    make_simulator("foo");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("arma_jump"), std::string::npos);
  }
  EXPECT_THROW(make_simulator("econ", {{"a", 1}}), ConfigError);
}

TEST(Oracle, RoundTripsThroughJson) {
  const auto oracle = OracleEstimator(make_simulator("skew_normal", {{"a", 0.2}}));
  const auto back = OracleEstimator::from_json(oracle.to_json());
  const std::vector<double> x = {0.3}, y = {0.01};
  EXPECT_EQ(back->log_pdf(x, y), oracle.log_pdf(x, y));
}

}  // namespace
}  // namespace cde
