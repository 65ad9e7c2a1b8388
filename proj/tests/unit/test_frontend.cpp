#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "probe/frontend.hpp"
#include "probe/media.hpp"
#include "support.hpp"

using namespace probe;

namespace {

constexpr std::size_t kSpc = 32;

struct Chain {
  Signal gamma;
  double V = 0.0;
  WhitenedChannel channel;
};

const Chain& nominal_chain() {
  static const Chain c = [] {
    Chain out;
    CantileverParams params;
    params.sample_rate_hz = static_cast<double>(kSpc) * params.f0_hz;
    const auto dss = discretize_zoh(build_continuous(params), params.sample_period());
    const double w0 = params.omega0();
    const double unit = 2.0 * w0 * w0 / params.quality;
    const NoiseParams noise{0.1 * unit * unit, 1e-3};
    const auto obs = design_kalman(dss, noise);
    out.gamma.assign(obs.gamma.begin(), obs.gamma.begin() + static_cast<std::ptrdiff_t>(obs.effective_length));
    out.V = obs.innovation_variance;
    out.channel = make_whitened_channel(out.gamma, kSpc, out.V, 13);
    return out;
  }();
  return c;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Noise-free innovation of an impact train through the profile.
Signal impulse_response_trace(const Signal& nu, const Signal& gamma) {
  ImpactTrace t;
  t.nu = nu;
  return synthesize_innovation(t, gamma, 0.0, kSpc, 0);
}

}  // namespace

TEST(Frontend, SelfCorrelationPeakIsEnergy) {
  const auto& c = nominal_chain();
  Signal e = c.gamma;
  e.resize((c.gamma.size() / kSpc + 4) * kSpc, 0.0);
  const Signal z = matched_filter(e, c.gamma, kSpc);
  double energy = 0.0;
  for (double g : c.gamma) energy += g * g;
  const Signal R = autocorrelation(c.gamma, kSpc, 3);
  EXPECT_NEAR(z[0], energy, 1e-14 * energy);
  EXPECT_NEAR(R[0], energy, 1e-14 * energy);
}

TEST(Frontend, TwoImpactsMixThroughAutocorrelation) {
  const auto& c = nominal_chain();
  const double nu0 = 3.0;
  const double nu1 = -1.25;
  Signal nu(40, 0.0);
  nu[0] = nu0;
  nu[1] = nu1;
  const Signal e = impulse_response_trace(nu, c.gamma);
  const Signal z = matched_filter(e, c.gamma, kSpc);
  const Signal R = autocorrelation(c.gamma, kSpc, 2);
  EXPECT_NEAR(z[0], nu0 * R[0] + nu1 * R[1], 1e-12 * R[0]);
  EXPECT_NEAR(z[1], nu0 * R[1] + nu1 * R[0], 1e-12 * R[0]);
}

TEST(Frontend, MatchedNoiseCovarianceIsVR) {
  const auto& c = nominal_chain();
  const std::size_t cycles = 100000;
  const Signal e = testkit::gaussian_noise(cycles * kSpc, c.V, 99);
  const Signal z = matched_filter(e, c.gamma, kSpc);
  const std::size_t tail = c.gamma.size() / kSpc + 1;
  const std::size_t n = z.size() - tail;
  const Signal R = autocorrelation(c.gamma, kSpc, 3);
  for (std::size_t j = 0; j <= 3; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k + j < n; ++k) s += z[k] * z[k + j];
    s /= static_cast<double>(n - j);
    EXPECT_NEAR(s / (c.V * R[0]), R[j] / R[0], 0.05) << "lag " << j;
  }
}

TEST(Frontend, GridMismatchIsRejected) {
  EXPECT_THROW(matched_filter(Signal(33), Signal(8), 32), ConfigError);
  EXPECT_THROW(matched_filter(Signal(32), Signal(8), 0), ConfigError);
}

TEST(Frontend, SpikeProfileHasNoLagCorrelation) {
  Signal g(96, 0.0);
  g[5] = 2.0;
  const Signal R = autocorrelation(g, 32, 4);
  EXPECT_EQ(R[0], 4.0);
  for (std::size_t j = 1; j <= 4; ++j) EXPECT_EQ(R[j], 0.0);
}

TEST(Frontend, AutocorrelationToeplitzIsPositiveSemidefinite) {
  const auto& c = nominal_chain();
  const std::size_t J = c.gamma.size() / kSpc + 3;
  const Signal R = autocorrelation(c.gamma, kSpc, J);
  Eigen::MatrixXd T(J + 1, J + 1);
  for (std::size_t i = 0; i <= J; ++i)
    for (std::size_t k = 0; k <= J; ++k) T(i, k) = R[i > k ? i - k : k - i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * R[0]);
  // Past the profile span every lag is zero.
  EXPECT_EQ(R[J], 0.0);
}

TEST(Frontend, WhiteAutocorrelationFactorsToSingleTap) {
  const Signal h = spectral_factorize(Signal{9.0, 0.0, 0.0, 0.0});
  ASSERT_EQ(h.size(), 4u);
  EXPECT_NEAR(h[0], 3.0, 1e-12);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_NEAR(h[j], 0.0, 1e-12);
}

TEST(Frontend, OnePlusDelayFactor) {
  const Signal h = spectral_factorize(Signal{2.0, 1.0, 0.0});
  ASSERT_EQ(h.size(), 3u);
  EXPECT_NEAR(h[0], 1.0, 1e-6);
  EXPECT_NEAR(h[1], 1.0, 1e-6);
  EXPECT_NEAR(h[2], 0.0, 1e-6);
  EXPECT_NEAR(h[0] * h[0] + h[1] * h[1] + h[2] * h[2], 2.0, 1e-8);
  EXPECT_NEAR(h[0] * h[1] + h[1] * h[2], 1.0, 1e-8);
}

TEST(Frontend, NonUnitCircleFactorIsExact) {
  // (1 + 0.5 D)(1 + 0.5 D^-1) = 1.25 + 0.5 (D + D^-1).
  const Signal h = spectral_factorize(Signal{1.25, 0.5});
  EXPECT_NEAR(h[0], 1.0, 1e-12);
  EXPECT_NEAR(h[1], 0.5, 1e-12);
  EXPECT_NEAR(max_zero_modulus(h), 0.5, 1e-12);
}

TEST(Frontend, IndefiniteAutocorrelationNamesEigenvalue) {
  try {
    spectral_factorize(Signal{1.0, 2.0});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("indefinite"), std::string::npos) << e.what();
  }
  EXPECT_THROW(spectral_factorize(Signal{}), ConfigError);
}

TEST(Frontend, NominalChannelFactorization) {
  const auto& c = nominal_chain();
  const auto& ch = c.channel;
  ASSERT_EQ(ch.h.size(), ch.R.size());
  double energy = 0.0;
  for (double v : ch.h) energy += v * v;
  EXPECT_NEAR(energy / ch.R[0], 1.0, 1e-10);
  for (std::size_t k = 0; k < ch.R.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j + k < ch.h.size(); ++j) s += ch.h[j] * ch.h[j + k];
    EXPECT_NEAR(s, ch.R[k], 1e-8 * ch.R[0]) << "lag " << k;
  }
  EXPECT_GT(ch.h[0], 0.0);
  EXPECT_LE(ch.zero_modulus, 1.0);
  EXPECT_EQ(ch.zero_modulus, max_zero_modulus(ch.h));
  EXPECT_LE(ch.I, ch.m_I * ch.q);
  EXPECT_EQ(ch.m_I, 2u);
  EXPECT_EQ(ch.m_I, (ch.I + ch.q - 1) / ch.q);
}

TEST(Frontend, ConvolutionExamples) {
  const Signal y = convolve_causal(Signal{1.0, 0.0, 2.0, 0.0}, Signal{1.0, -1.0, 0.5});
  ASSERT_EQ(y.size(), 4u);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], -1.0);
  EXPECT_EQ(y[2], 2.5);
  EXPECT_EQ(y[3], -2.0);
}

TEST(Frontend, SingleImpactWhitensToTaps) {
  const auto& c = nominal_chain();
  const std::size_t cycles = 200;
  Signal nu(cycles, 0.0);
  nu[50] = 1.0;
  const Signal z = whiten(matched_filter(impulse_response_trace(nu, c.gamma), c.gamma, kSpc), c.channel);
  const double scale = max_abs(c.channel.h);
  for (std::size_t k = 0; k < cycles; ++k) {
    const double expect = (k >= 50 && k - 50 < c.channel.h.size()) ? c.channel.h[k - 50] : 0.0;
    EXPECT_NEAR(z[k], expect, 1e-8 * scale) << "k = " << k;
  }
}

TEST(Frontend, EndToEndChainEqualsFirConvolution) {
  const auto& c = nominal_chain();
  const std::size_t cycles = 600;
  const auto bits = generate_bits(cycles / 13, 17);
  const auto model = synthetic_impact_model(1, 13, 5e6);
  BitSequence padded(bits.size(), 0);
  for (std::size_t i = 1; i + 3 < bits.size(); ++i) padded[i] = bits[i];
  ImpactTrace imp = impacts_statistical(padded, model, 3);
  const Signal z = whiten(matched_filter(synthesize_innovation(imp, c.gamma, 0.0, kSpc, 0), c.gamma, kSpc),
                          c.channel);
  const Signal direct = convolve_causal(imp.nu, c.channel.h);
  ASSERT_EQ(z.size(), direct.size());
  const double scale = max_abs(direct);
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_NEAR(z[k], direct[k], 1e-8 * scale) << "k = " << k;
}

TEST(Frontend, WhitenedNoiseIsWhiteWithVarianceV) {
  const auto& c = nominal_chain();
  const std::size_t cycles = 100000;
  const Signal e = testkit::gaussian_noise(cycles * kSpc, c.V, 5);
  const Signal z_full = whiten(matched_filter(e, c.gamma, kSpc), c.channel);
  // Drop the tail where the matched filter runs past the trace.
  const std::span<const double> z(z_full.data(), cycles - 2 * c.gamma.size() / kSpc);
  double var = 0.0;
  for (double v : z) var += v * v;
  var /= static_cast<double>(z.size());
  EXPECT_NEAR(var / c.V, 1.0, 0.03);
  EXPECT_LE(testkit::whiteness_ratio(z), 1.0);
}

TEST(Frontend, CholeskyWhitenerAgreesAwayFromEnd) {
  const auto& c = nominal_chain();
  const std::size_t cycles = 400;
  const Signal e = testkit::gaussian_noise(cycles * kSpc, c.V, 8);
  const Signal zp = matched_filter(e, c.gamma, kSpc);
  const Signal a = whiten(zp, c.channel);
  const Signal b = whiten_cholesky(zp, c.channel.R);
  ASSERT_EQ(a.size(), b.size());
  const double scale = std::sqrt(c.V);
  for (std::size_t k = 0; k + 100 < cycles; ++k) EXPECT_NEAR(a[k], b[k], 1e-6 * scale) << "k = " << k;
}

TEST(Frontend, UnitCircleFactorCannotWhiten) {
  WhitenedChannel ch;
  ch.h = Signal{1.0, 1.0};
  ch.R = Signal{2.0, 1.0};
  ch.V = 1.0;
  ch.zero_modulus = max_zero_modulus(ch.h);
  EXPECT_THROW(whiten(Signal(10, 1.0), ch), NumericalError);
}
