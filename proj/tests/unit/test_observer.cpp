#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "probe/observer.hpp"
#include "support.hpp"

using namespace probe;

namespace {

struct NominalModel {
  CantileverParams params;
  DiscreteStateSpace dss;
  NoiseParams noise;
};

NominalModel nominal_model() {
  NominalModel m;
  m.params.sample_rate_hz = 32.0 * m.params.f0_hz;
  m.dss = discretize_zoh(build_continuous(m.params), m.params.sample_period());
  const double w0 = m.params.omega0();
  const double unit = 2.0 * w0 * w0 / m.params.quality;
  m.noise.thermal_variance = 0.1 * unit * unit;
  m.noise.measurement_variance = 1e-3;
  return m;
}

/// Simulates the noisy model and returns (y, g) with zero dither.
std::pair<Signal, Signal> noisy_run(const NominalModel& m, std::size_t n, std::uint64_t seed) {
  const Signal eta = testkit::gaussian_noise(n, m.noise.thermal_variance, seed);
  const Signal w = testkit::gaussian_noise(n, m.noise.measurement_variance, seed + 1);
  Signal y(n);
  Vec2 x = Vec2::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    y[k] = m.dss.H * x + w[k];
    x = m.dss.F * x + m.dss.G * eta[k];
  }
  return {y, Signal(n, 0.0)};
}

}  // namespace

TEST(Observer, NoProcessNoiseGivesZeroGain) {
  auto m = nominal_model();
  m.noise.thermal_variance = 0.0;
  const auto obs = design_kalman(m.dss, m.noise);
  EXPECT_EQ(obs.error_covariance.norm(), 0.0);
  EXPECT_EQ(obs.gain.norm(), 0.0);
  EXPECT_DOUBLE_EQ(obs.innovation_variance, m.noise.measurement_variance);
}

TEST(Observer, ScalarSurrogateMatchesIterationOracle) {
  DiscreteStateSpace dss;
  dss.F << 0.5, 0.0, 0.0, 0.0;
  dss.G << 1.0, 0.0;
  dss.H << 1.0, 0.0;
  dss.sample_period = 1.0;
  NoiseParams noise{1.0, 1.0};
  double p = 0.0;
  for (int i = 0; i < 200; ++i) p = 0.25 * (p - p * p / (p + 1.0)) + 1.0;
  const auto obs = design_kalman(dss, noise);
  EXPECT_NEAR(obs.error_covariance(0, 0), p, 1e-12);
  EXPECT_NEAR(p, (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0, 1e-12);
  EXPECT_NEAR(obs.innovation_variance, p + 1.0, 1e-12);
  EXPECT_NEAR(obs.gain(0), 0.5 * p / (p + 1.0), 1e-12);
}

TEST(Observer, NominalDesignSolvesRiccatiEquation) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  EXPECT_LT(obs.dare_residual, 1e-10);
  EXPECT_LT(dare_residual(m.dss, m.noise, obs.error_covariance), 1e-10);
  EXPECT_NEAR(obs.innovation_variance,
              (m.dss.H * obs.error_covariance * m.dss.H.transpose())(0, 0) + m.noise.measurement_variance, 1e-15);
  EXPECT_GT(obs.innovation_variance, m.noise.measurement_variance);
  Eigen::EigenSolver<Mat2> es(m.dss.F - obs.gain * m.dss.H);
  EXPECT_LT(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
}

TEST(Observer, DetectsNonConvergence) {
  const auto m = nominal_model();
  DareOptions opt;
  opt.max_iterations = 3;
  try {
    design_kalman(m.dss, m.noise, opt);
    FAIL() << "expected non-convergence";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos);
  }
}

TEST(Observer, ProfileMatchesPowerIteration) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  const Signal g = innovation_profile(obs, m.dss, 6);
  EXPECT_EQ(g[0], 0.0);
  const Mat2 a = m.dss.F - obs.gain * m.dss.H;
  Vec2 x(0.0, 1.0);
  for (std::size_t k = 1; k <= 5; ++k) {
    x = a * x;
    EXPECT_DOUBLE_EQ(g[k], m.dss.H * x);
  }
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(g[k], obs.gamma[k]);
}

TEST(Observer, EffectiveLengthIsAboutTwoDozenCycles) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  const double cycles = static_cast<double>(obs.effective_length) / 32.0;
  EXPECT_GT(cycles, 18.0);
  EXPECT_LT(cycles, 30.0);
  // The stored profile runs well past the effective length.
  EXPECT_GT(obs.gamma.size(), obs.effective_length);
  EXPECT_EQ(effective_length(obs.gamma), obs.effective_length);
}

TEST(Observer, EffectiveLengthExamples) {
  EXPECT_EQ(effective_length(Signal(10, 0.0)), 0u);
  Signal geo(40);
  for (std::size_t k = 0; k < geo.size(); ++k) geo[k] = std::pow(0.5, static_cast<double>(k));
  EXPECT_EQ(effective_length(geo, 1e-3), 10u);
  EXPECT_THROW(effective_length(geo, 0.0), ConfigError);
  EXPECT_THROW(effective_length(geo, 1.0), ConfigError);
}

TEST(Observer, ExactModelGivesZeroInnovation) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  const std::size_t n = 5000;
  Signal g(n);
  Signal y(n);
  const Vec2 x0(3.0, -2e5);
  Vec2 x = x0;
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = 1e9 * std::sin(0.2 * static_cast<double>(k));
    y[k] = m.dss.H * x;
    x = m.dss.F * x + m.dss.G * g[k];
  }
  const Signal e = run_observer(m.dss, obs, y, g, x0);
  for (double v : e) EXPECT_EQ(v, 0.0);
}

TEST(Observer, InjectedJumpReproducesProfile) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  const std::size_t n = 3000;
  const std::size_t theta = 100;
  const double nu = 2.5e5;
  Signal y(n);
  Vec2 x = Vec2::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == theta) x(1) += nu;
    y[k] = m.dss.H * x;
    x = m.dss.F * x;
  }
  const Signal e = run_observer(m.dss, obs, y, Signal(n, 0.0));
  const Signal gamma = innovation_profile(obs, m.dss, n);
  double peak = 0.0;
  for (double g : gamma) peak = std::max(peak, std::abs(g * nu));
  for (std::size_t k = 0; k < n; ++k) {
    const double expect = k < theta ? 0.0 : gamma[k - theta] * nu;
    EXPECT_NEAR(e[k], expect, 1e-12 * peak) << "k = " << k;
  }
}

TEST(Observer, SuperpositionOfTwoJumps) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  const std::size_t n = 2000;
  auto run = [&](double a, double b) {
    Signal y(n);
    Vec2 x = Vec2::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == 50) x(1) += a;
      if (k == 83) x(1) += b;
      y[k] = m.dss.H * x;
      x = m.dss.F * x;
    }
    return run_observer(m.dss, obs, y, Signal(n, 0.0));
  };
  const Signal e1 = run(1e5, 0.0);
  const Signal e2 = run(0.0, -3e5);
  const Signal e12 = run(1e5, -3e5);
  double scale = 0.0;
  for (double v : e12) scale = std::max(scale, std::abs(v));
  for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(e12[k], e1[k] + e2[k], 1e-12 * scale);
}

TEST(Observer, NoiseOnlyInnovationIsWhiteWithVarianceV) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  const std::size_t burn = 20000;
  const std::size_t n = 100000;
  auto [y, g] = noisy_run(m, n + burn, 17);
  const Signal e_full = run_observer(m.dss, obs, y, g);
  const std::span<const double> e(e_full.data() + burn, n);
  double var = 0.0;
  for (double v : e) var += v * v;
  var /= static_cast<double>(n);
  EXPECT_NEAR(var / obs.innovation_variance, 1.0, 0.05);
  EXPECT_LE(testkit::whiteness_ratio(e), 1.0);
}

TEST(Observer, LengthMismatchIsRejected) {
  const auto m = nominal_model();
  const auto obs = design_kalman(m.dss, m.noise);
  EXPECT_THROW(run_observer(m.dss, obs, Signal(10), Signal(9)), ConfigError);
  NoiseParams bad{0.0, 0.0};
  EXPECT_THROW(bad.validate(), ConfigError);
}
