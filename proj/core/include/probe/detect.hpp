#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "probe/common.hpp"

namespace probe {

/// Per-transition Gaussian statistics of the whitened observation window
/// z[(i - m_I) q .. (i + 1) q).
///
/// A state is the last K = m + m_I bits with the newest bit in the LSB. A
/// transition is the (K + 1)-bit word t = (S_{i-1} << 1) | a_i, so
/// S_{i-1} = t >> 1 and S_i = t & (2^K - 1).
struct TrellisStats {
  unsigned m = 1;
  unsigned m_I = 2;
  std::size_t q = 13;
  std::vector<Eigen::VectorXd> means;  ///< indexed by transition
  std::vector<Eigen::MatrixXd> covs;

  unsigned memory_bits() const { return m + m_I; }
  std::size_t state_count() const { return std::size_t{1} << memory_bits(); }
  std::size_t transition_count() const { return std::size_t{2} << memory_bits(); }
  std::size_t window_dim() const { return (static_cast<std::size_t>(m_I) + 1) * q; }
  void validate() const;
};

/// Oldest bit first, K + 1 characters.
std::string transition_label(std::size_t transition, unsigned memory_bits);

/// Transition joining two states (K >= 1); throws when `next` is not a successor of `prev`.
std::size_t transition_between(std::size_t prev, std::size_t next, unsigned memory_bits);

/// Branch metric evaluator with per-transition factorizations done once.
///
/// metric = log(|C| / |c|) + (w - Y)^T C^-1 (w - Y) - (w1 - y1)^T c^-1 (w1 - y1),
/// where c is the leading m_I q principal block. With C = L L^T this equals
/// ||K_t w - K_t Y||^2 + 2 sum log diag(L22), K_t = [-L22^-1 L21 L11^-1, L22^-1].
class BranchMetric {
 public:
  explicit BranchMetric(const TrellisStats& stats);

  const TrellisStats& stats() const { return stats_; }
  double operator()(std::span<const double> window, std::size_t transition) const;
  /// Metrics of every transition for one window; `out` has transition_count() entries.
  void evaluate_all(std::span<const double> window, std::span<double> out) const;

 private:
  TrellisStats stats_;
  std::size_t dim_ = 0;
  std::vector<double> gain_;    // transition-major q x dim row-major blocks
  std::vector<double> offset_;  // K_t Y_t
  std::vector<double> logdet_;
};

double branch_metric(std::span<const double> window, std::size_t prev, std::size_t next,
                     const BranchMetric& metric);

/// Reference form with explicit inverses and determinants (for cross-checks).
double branch_metric_direct(std::span<const double> window, std::size_t transition, const TrellisStats& stats);

struct ViterbiResult {
  std::vector<std::uint8_t> bits;  ///< decisions after the preamble
  double path_metric = 0.0;
  std::size_t final_state = 0;
};

/// Minimum summed-metric bit sequence. `z` covers the preamble and the payload,
/// q samples per bit. The preamble must hold at least max(K, m_I) bits; its last
/// K bits give the starting state. Ties go to the lower state index.
ViterbiResult viterbi_detect(std::span<const double> z, const BranchMetric& metric,
                             std::span<const std::uint8_t> preamble);

/// Summed branch metric of a given payload path (same bookkeeping as viterbi_detect).
double path_metric(std::span<const double> z, const BranchMetric& metric, std::span<const std::uint8_t> preamble,
                   std::span<const std::uint8_t> payload);

enum class HitStatistic { lmp, glrt, bayes };

const char* to_string(HitStatistic kind);

struct HitDetectorParams {
  Signal gamma0;  ///< sampled profile, window length M
  double V = 1.0;
  std::size_t q = 1;
  std::size_t samples_per_cycle = 1;
  double tau = 0.0;
  double alpha = 0.0;    ///< Bayes prior mean of nu
  double lambda2 = 0.0;  ///< Bayes prior variance of nu

  void validate(HitStatistic kind) const;
  double profile_energy() const;
};

/// Per-window statistics from the correlation s = e^T gamma0.
double lmp_from_correlation(double s, double V);
double glrt_from_correlation(double s, double V);
/// Full log-likelihood ratio log int f(e|nu) f(nu) dnu / f(e|0) for nu ~ N(alpha, lambda2).
double bayes_from_correlation(double s, double energy, double V, double alpha, double lambda2);

double lmp_statistic(std::span<const double> window, const HitDetectorParams& p);
double glrt_statistic(std::span<const double> window, const HitDetectorParams& p);
double bayes_statistic(std::span<const double> window, const HitDetectorParams& p);

struct HitDetection {
  std::vector<std::uint8_t> bits;
  Signal scores;                   ///< per-bit max over the q hit statistics
  std::size_t truncated_from = 0;  ///< first bit whose windows overrun the trace (== bits.size() if none)
  bool truncated() const { return truncated_from < bits.size(); }
};

/// Correlations s_k = sum_{t<M} e[k spc + t] gamma0[t] for every cycle (zero past the trace end).
Signal hit_correlations(std::span<const double> e, const HitDetectorParams& p);

/// Scores and decisions from precomputed per-cycle correlations.
HitDetection decide_hits(std::span<const double> correlations, const HitDetectorParams& p, HitStatistic kind,
                         std::size_t truncated_from_cycle);

HitDetection lmp_detect(std::span<const double> e, const HitDetectorParams& p);
HitDetection glrt_detect(std::span<const double> e, const HitDetectorParams& p);
HitDetection bayes_detect(std::span<const double> e, const HitDetectorParams& p);
HitDetection hit_detect(std::span<const double> e, const HitDetectorParams& p, HitStatistic kind);

struct ThresholdFit {
  double tau = 0.0;
  std::size_t errors = 0;
  double training_ber = 0.0;
};

/// Threshold minimizing the empirical error of "1 iff score > tau" over the sorted score midpoints.
ThresholdFit tune_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Versioned binary trellis file (little endian):
///   8 bytes  "PRBTRLS\0"
///   u32      version (1)
///   u32 x 5  m, m_I, q, state_count, transition_count
///   per transition in index order: dim f64 mean, then dim*dim f64 covariance row-major.
void save_trellis(const std::filesystem::path& path, const TrellisStats& stats);
TrellisStats load_trellis(const std::filesystem::path& path);
std::vector<unsigned char> encode_trellis(const TrellisStats& stats);
TrellisStats decode_trellis(std::span<const unsigned char> bytes);

}  // namespace probe
