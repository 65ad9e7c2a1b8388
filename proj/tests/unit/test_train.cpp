#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "probe/frontend.hpp"
#include "probe/media.hpp"
#include "probe/rng.hpp"
#include "probe/train.hpp"
#include "support.hpp"

using namespace probe;

namespace {

/// Cycle-rate channel z = h * nu + white noise with impacts drawn from `model`.
TrainingSet synthetic_set(const ImpactModel& model, const Signal& h, std::size_t traces, std::size_t bits_per_trace,
                          double sigma, std::uint64_t seed) {
  TrainingSet ts;
  ts.preamble_bits = 4;
  for (std::size_t t = 0; t < traces; ++t) {
    auto bits = generate_bits(bits_per_trace, derive_seed(seed, {t, 0}));
    std::fill(bits.begin(), bits.begin() + 4, 0);
    const auto imp = impacts_statistical(bits, model, derive_seed(seed, {t, 1}));
    Signal z = convolve_causal(imp.nu, h);
    const Signal n = testkit::gaussian_noise(z.size(), sigma * sigma, derive_seed(seed, {t, 2}));
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += n[k];
    ts.traces.push_back(std::move(z));
    ts.labels.push_back(std::move(bits));
  }
  return ts;
}

TrainingSet ramp_set(std::size_t traces, std::size_t bits_per_trace, double sigma, std::uint64_t seed) {
  return synthetic_set(synthetic_impact_model(1, 2, 1.0), Signal{1.0, 0.6, 0.25}, traces, bits_per_trace, sigma,
                       seed);
}

/// ISI-free channel whose '1' lands at `first` after a '0' and at `sustained` after a '1'.
TrainingSet memory_set(double first, double sustained, std::uint64_t seed) {
  ImpactModel m;
  m.m = 1;
  m.q = 2;
  m.mean_table = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, first), Eigen::VectorXd::Zero(2),
                  Eigen::VectorXd::Constant(2, sustained)};
  m.impact_cov = 0.01 * Eigen::MatrixXd::Identity(2, 2);
  return synthetic_set(m, Signal{1.0}, 4, 4000, 0.2, seed);
}

struct GaussianTransitions {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> chol;
};

GaussianTransitions known_transitions(std::size_t count, Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  GaussianTransitions g;
  for (std::size_t t = 0; t < count; ++t) {
    Eigen::VectorXd mu(dim);
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      mu(i) = 3.0 * n01(rng);
      for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = i == j ? 0.5 + std::abs(n01(rng)) : 0.3 * n01(rng);
    }
    g.means.push_back(mu);
    g.chol.push_back(l);
  }
  return g;
}

TransitionAccumulator sample_accumulator(const GaussianTransitions& g, unsigned m, unsigned m_I, std::size_t q,
                                         std::size_t per_transition, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  TransitionAccumulator acc(m, m_I, q);
  const auto dim = static_cast<Eigen::Index>(acc.window_dim());
  Eigen::VectorXd w(dim);
  Eigen::VectorXd u(dim);
  for (std::size_t k = 0; k < per_transition; ++k) {
    for (std::size_t t = 0; t < acc.transition_count(); ++t) {
      for (Eigen::Index i = 0; i < dim; ++i) u(i) = n01(rng);
      w = g.means[t] + g.chol[t] * u;
      acc.add_window(t, std::span<const double>(w.data(), static_cast<std::size_t>(dim)));
    }
  }
  return acc;
}

double min_eigenvalue(const Eigen::MatrixXd& c) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff();
}

}  // namespace

TEST(Train, MeansRecoveredWithinThreeStandardErrors) {
  const unsigned m = 1, m_I = 1;
  const std::size_t q = 2;
  const auto g = known_transitions(8, 4, 11);
  const std::size_t n = 10000;
  const auto acc = sample_accumulator(g, m, m_I, q, n, 12);
  const auto stats = finalize_trellis_stats(acc);
  for (std::size_t t = 0; t < acc.transition_count(); ++t) {
    ASSERT_EQ(acc.count(t), n);
    const Eigen::MatrixXd cov = g.chol[t] * g.chol[t].transpose();
    for (Eigen::Index i = 0; i < 4; ++i) {
      const double se = std::sqrt(cov(i, i) / static_cast<double>(n));
      EXPECT_NEAR(stats.means[t](i), g.means[t](i), 3.0 * se) << transition_label(t, 2) << " entry " << i;
    }
    // Shrunk covariance stays within a few percent of the truth.
    EXPECT_LT((stats.covs[t] - cov).norm() / cov.norm(), 0.05);
  }
}

TEST(Train, ConsistencyErrorShrinksAsRootN) {
  const auto g = known_transitions(8, 4, 21);
  double prev = std::numeric_limits<double>::infinity();
  double first = 0.0;
  double last = 0.0;
  for (std::size_t n : {100u, 1000u, 10000u}) {
    double err = 0.0;
    for (std::uint64_t rep = 0; rep < 8; ++rep) {
      const auto acc = sample_accumulator(g, 1, 1, 2, n, 100 + rep);
      for (std::size_t t = 0; t < acc.transition_count(); ++t) err += (acc.mean(t) - g.means[t]).squaredNorm();
    }
    err = std::sqrt(err);
    EXPECT_LT(err, prev) << "n = " << n;
    if (n == 100) first = err;
    last = err;
    prev = err;
  }
  EXPECT_NEAR(first / last, 10.0, 2.5);
}

TEST(Train, ConstantWindowsGiveScaledIdentity) {
  TransitionAccumulator acc(0, 1, 2);
  const std::size_t need = acc.window_dim() + 1;
  for (std::size_t t = 0; t < acc.transition_count(); ++t) {
    const Signal w{1.0 * t, 2.0, -3.0, 0.5 * t};
    for (std::size_t k = 0; k < need; ++k) acc.add_window(t, w);
  }
  const double shrink = 1e-3;
  const auto s = finalize_trellis_stats(acc, shrink);
  for (std::size_t t = 0; t < acc.transition_count(); ++t) {
    EXPECT_EQ(s.means[t](0), 1.0 * t);
    EXPECT_EQ(s.means[t](3), 0.5 * t);
    EXPECT_TRUE(s.covs[t].isApprox(shrink * Eigen::MatrixXd::Identity(4, 4), 1e-12));
  }
}

TEST(Train, ShrinkageFormula) {
  const auto g = known_transitions(4, 2, 5);
  const auto acc = sample_accumulator(g, 0, 0, 2, 500, 6);
  const double s = 0.2;
  const auto stats = finalize_trellis_stats(acc, s);
  for (std::size_t t = 0; t < acc.transition_count(); ++t) {
    const Eigen::MatrixXd c = acc.covariance(t);
    const Eigen::MatrixXd expect = (1.0 - s) * c + s * (c.trace() / 2.0) * Eigen::MatrixXd::Identity(2, 2);
    EXPECT_TRUE(stats.covs[t].isApprox(expect, 1e-12));
  }
  EXPECT_THROW(finalize_trellis_stats(acc, 0.0), ConfigError);
}

TEST(Train, MergedAccumulatorsMatchSinglePass) {
  const auto g = known_transitions(8, 4, 31);
  TransitionAccumulator all(1, 1, 2);
  TransitionAccumulator a(1, 1, 2);
  TransitionAccumulator b(1, 1, 2);
  std::mt19937_64 rng(32);
  std::normal_distribution<double> n01;
  Eigen::VectorXd w(4);
  for (int k = 0; k < 300; ++k) {
    for (std::size_t t = 0; t < 8; ++t) {
      for (int i = 0; i < 4; ++i) w(i) = g.means[t](i) + n01(rng);
      const std::span<const double> sw(w.data(), 4);
      all.add_window(t, sw);
      (k % 3 ? a : b).add_window(t, sw);
    }
  }
  a.merge(b);
  for (std::size_t t = 0; t < 8; ++t) {
    EXPECT_EQ(a.count(t), all.count(t));
    EXPECT_TRUE(a.mean(t).isApprox(all.mean(t), 1e-12));
    EXPECT_TRUE(a.covariance(t).isApprox(all.covariance(t), 1e-10));
  }
  EXPECT_THROW(a.merge(TransitionAccumulator(0, 1, 2)), ConfigError);
}

TEST(Train, DeficientTransitionsAreListed) {
  auto ts = ramp_set(1, 20, 0.1, 3);
  try {
    estimate_trellis_stats(ts, 1, 1, 2);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("fewer than 5"), std::string::npos) << msg;
  }
  ts.traces[0][5] = std::nan("");
  EXPECT_THROW(ts.validate(2), ConfigError);
}

TEST(Train, TraceEstimatesArePositiveDefinite) {
  const auto ts = ramp_set(4, 3000, 0.2, 41);
  const auto s = estimate_trellis_stats(ts, 1, 1, 2);
  ASSERT_EQ(s.transition_count(), 8u);
  const auto h = static_cast<Eigen::Index>(s.m_I * s.q);
  for (std::size_t t = 0; t < s.transition_count(); ++t) {
    EXPECT_GT(min_eigenvalue(s.covs[t]), 0.0);
    EXPECT_GT(min_eigenvalue(s.covs[t].topLeftCorner(h, h)), 0.0);
  }
  // A first '1' and a sustained '1' leave clearly different mean windows.
  EXPECT_GT((s.means[0b001] - s.means[0b011]).norm(), 0.3);
}

TEST(Train, EstimatedTrellisDecodesTrainingChannel) {
  const auto train = ramp_set(4, 3000, 0.2, 51);
  const auto val = ramp_set(2, 3000, 0.2, 52);
  const auto s = estimate_trellis_stats(train, 1, 1, 2);
  const auto trial = evaluate_viterbi(val, s);
  EXPECT_EQ(trial.bits, 2u * (3000 - 4));
  EXPECT_LT(trial.ber(), 1e-2);
}

TEST(Train, SelectMemoryRecoversMemorylessChannel) {
  const auto train = memory_set(1.0, 1.0, 61);
  const auto val = memory_set(1.0, 1.0, 62);
  const unsigned range[] = {0, 1, 2};
  const auto sel = select_memory(train, val, range, 0, 2);
  EXPECT_EQ(sel.chosen, 0u);
  ASSERT_EQ(sel.table.size(), 3u);
  for (const auto& row : sel.table) EXPECT_GT(row.bits, 0u);
}

TEST(Train, SelectMemoryRecoversUnitMemoryChannel) {
  const auto train = memory_set(1.5, 0.3, 71);
  const auto val = memory_set(1.5, 0.3, 72);
  const unsigned range[] = {0, 1, 2};
  const auto sel = select_memory(train, val, range, 0, 2);
  EXPECT_EQ(sel.chosen, 1u);
  EXPECT_LT(2 * (sel.table[1].errors + 1), sel.table[0].errors + 1);
  EXPECT_THROW(select_memory(train, val, std::span<const unsigned>{}, 1, 2), ConfigError);
}
