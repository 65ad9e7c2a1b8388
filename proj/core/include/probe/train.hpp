#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "probe/detect.hpp"

namespace probe {

/// Whitened traces with their full bit labels (preamble included), q samples per bit.
struct TrainingSet {
  std::vector<Signal> traces;
  std::vector<std::vector<std::uint8_t>> labels;
  std::size_t preamble_bits = 0;

  void validate(std::size_t q) const;
};

inline constexpr double kDefaultShrink = 1e-3;

/// Running mean and scatter of windows per transition. Partial accumulators from
/// separate workers combine with merge() (pairwise update of mean and scatter).
class TransitionAccumulator {
 public:
  TransitionAccumulator(unsigned m, unsigned m_I, std::size_t q);

  void add_trace(std::span<const double> trace, std::span<const std::uint8_t> labels);
  void add_window(std::size_t transition, std::span<const double> window);
  void merge(const TransitionAccumulator& other);

  std::size_t count(std::size_t transition) const { return count_[transition]; }
  const Eigen::VectorXd& mean(std::size_t transition) const { return mean_[transition]; }
  /// Unbiased sample covariance (requires count >= 2).
  Eigen::MatrixXd covariance(std::size_t transition) const;

  unsigned m() const { return m_; }
  unsigned m_I() const { return m_I_; }
  std::size_t q() const { return q_; }
  std::size_t transition_count() const { return count_.size(); }
  std::size_t window_dim() const { return dim_; }

 private:
  unsigned m_;
  unsigned m_I_;
  std::size_t q_;
  std::size_t dim_;
  std::vector<std::size_t> count_;
  std::vector<Eigen::VectorXd> mean_;
  std::vector<Eigen::MatrixXd> scatter_;
};

/// Shrunk covariance (1 - s) C + s (tr C / dim) I. Transitions whose windows are
/// constant (tr C = 0) use the average scale of the others, or 1 if all are constant,
/// so every result stays positive definite.
TrellisStats finalize_trellis_stats(const TransitionAccumulator& acc, double shrink = kDefaultShrink);

/// Labels every window z[(i - m_I) q .. (i + 1) q) for i >= m + m_I by its transition and
/// estimates per-transition means and shrunk covariances. Each transition needs
/// (m_I + 1) q + 1 windows.
TrellisStats estimate_trellis_stats(const TrainingSet& ts, unsigned m, unsigned m_I, std::size_t q,
                                    double shrink = kDefaultShrink);

struct MemoryTrial {
  unsigned m = 0;
  std::size_t errors = 0;
  std::size_t bits = 0;
  double ber() const { return bits ? static_cast<double>(errors) / static_cast<double>(bits) : 0.0; }
};

struct MemorySelection {
  unsigned chosen = 0;
  std::vector<MemoryTrial> table;
};

/// Bit errors of Viterbi decoding over the payload (after the preamble) of every trace.
MemoryTrial evaluate_viterbi(const TrainingSet& ts, const TrellisStats& stats);

/// Trains at every m and keeps the smallest one whose validation error count
/// satisfies (errors + 1) <= factor (best + 1).
MemorySelection select_memory(const TrainingSet& train, const TrainingSet& validate, std::span<const unsigned> m_range,
                              unsigned m_I, std::size_t q, double factor = 2.0, double shrink = kDefaultShrink);

}  // namespace probe
