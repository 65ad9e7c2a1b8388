#include "probe/train.hpp"

#include <algorithm>
#include <cmath>

#include "probe/linalg.hpp"

namespace probe {

void TrainingSet::validate(std::size_t q) const {
  if (traces.size() != labels.size()) throw ConfigError("training set: traces and labels differ in number");
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].size() != labels[i].size() * q) {
      throw ConfigError("training set: trace " + std::to_string(i) + " has " + std::to_string(traces[i].size()) +
                        " samples, expected labels * q = " + std::to_string(labels[i].size() * q));
    }
    for (double v : traces[i]) {
      if (!std::isfinite(v)) throw ConfigError("training set: trace " + std::to_string(i) + " has non-finite samples");
    }
    if (labels[i].size() < preamble_bits) {
      throw ConfigError("training set: trace " + std::to_string(i) + " is shorter than the preamble");
    }
  }
}

TransitionAccumulator::TransitionAccumulator(unsigned m, unsigned m_I, std::size_t q)
    : m_(m), m_I_(m_I), q_(q), dim_((static_cast<std::size_t>(m_I) + 1) * q) {
  if (q == 0) throw ConfigError("training: q must be >= 1");
  if (m + m_I > 20) throw ConfigError("training: m + m_I > 20 is not supported");
  const std::size_t nt = std::size_t{2} << (m + m_I);
  const auto d = static_cast<Eigen::Index>(dim_);
  count_.assign(nt, 0);
  mean_.assign(nt, Eigen::VectorXd::Zero(d));
  scatter_.assign(nt, Eigen::MatrixXd::Zero(d, d));
}

void TransitionAccumulator::add_window(std::size_t t, std::span<const double> window) {
  const Eigen::Map<const Eigen::VectorXd> w(window.data(), static_cast<Eigen::Index>(dim_));
  ++count_[t];
  const double n = static_cast<double>(count_[t]);
  const Eigen::VectorXd delta = w - mean_[t];
  mean_[t] += delta / n;
  scatter_[t].noalias() += ((n - 1.0) / n) * delta * delta.transpose();
}

void TransitionAccumulator::add_trace(std::span<const double> trace, std::span<const std::uint8_t> labels) {
  if (trace.size() != labels.size() * q_) throw ConfigError("training: trace length differs from labels * q");
  const unsigned K = m_ + m_I_;
  const std::size_t mask = (std::size_t{2} << K) - 1;
  std::size_t word = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    word = ((word << 1) | (labels[i] ? 1u : 0u)) & mask;
    if (i < K) continue;
    add_window(word, trace.subspan((i - m_I_) * q_, dim_));
  }
}

void TransitionAccumulator::merge(const TransitionAccumulator& other) {
  if (other.m_ != m_ || other.m_I_ != m_I_ || other.q_ != q_) {
    throw ConfigError("training: cannot merge accumulators of different shapes");
  }
  for (std::size_t t = 0; t < count_.size(); ++t) {
    const std::size_t nb = other.count_[t];
    if (nb == 0) continue;
    const std::size_t na = count_[t];
    const double n = static_cast<double>(na + nb);
    const Eigen::VectorXd delta = other.mean_[t] - mean_[t];
    mean_[t] += delta * (static_cast<double>(nb) / n);
    scatter_[t] += other.scatter_[t] + delta * delta.transpose() * (static_cast<double>(na) * static_cast<double>(nb) / n);
    count_[t] = na + nb;
  }
}

Eigen::MatrixXd TransitionAccumulator::covariance(std::size_t t) const {
  if (count_[t] < 2) throw ConfigError("training: covariance needs at least two windows");
  Eigen::MatrixXd c = scatter_[t] / static_cast<double>(count_[t] - 1);
  return 0.5 * (c + c.transpose());
}

TrellisStats finalize_trellis_stats(const TransitionAccumulator& acc, double shrink) {
  if (!(shrink > 0.0 && shrink <= 1.0)) throw ConfigError("training: shrink must be in (0, 1]");
  const std::size_t nt = acc.transition_count();
  const std::size_t need = acc.window_dim() + 1;
  const unsigned K = acc.m() + acc.m_I();
  std::string deficient;
  std::size_t listed = 0;
  std::size_t short_count = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    if (acc.count(t) >= need) continue;
    ++short_count;
    if (listed == 16) continue;
    deficient += (deficient.empty() ? "" : ", ") + transition_label(t, K) + " (" + std::to_string(acc.count(t)) + ")";
    ++listed;
  }
  if (short_count > listed) deficient += " and " + std::to_string(short_count - listed) + " more";
  if (!deficient.empty()) {
    throw ConfigError("training: transitions observed fewer than " + std::to_string(need) + " times: " + deficient);
  }

  TrellisStats stats;
  stats.m = acc.m();
  stats.m_I = acc.m_I();
  stats.q = acc.q();
  stats.means.resize(nt);
  stats.covs.resize(nt);
  const auto d = static_cast<Eigen::Index>(acc.window_dim());
  std::vector<Eigen::MatrixXd> raw(nt);
  std::vector<double> scale(nt);
  double scale_sum = 0.0;
  std::size_t scaled = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    stats.means[t] = acc.mean(t);
    raw[t] = acc.covariance(t);
    scale[t] = raw[t].trace() / static_cast<double>(d);
    if (scale[t] > 0.0) {
      scale_sum += scale[t];
      ++scaled;
    }
  }
  const double fallback = scaled ? scale_sum / static_cast<double>(scaled) : 1.0;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  for (std::size_t t = 0; t < nt; ++t) {
    const double s = scale[t] > 0.0 ? scale[t] : fallback;
    stats.covs[t] = (1.0 - shrink) * raw[t] + shrink * s * eye;
    const std::string what = "training: transition " + transition_label(t, K);
    linalg::cholesky_lower(stats.covs[t], what + " covariance");
    if (stats.m_I > 0) {
      const Eigen::Index d1 = d - static_cast<Eigen::Index>(stats.q);
      linalg::cholesky_lower(stats.covs[t].topLeftCorner(d1, d1), what + " leading minor");
    }
  }
  return stats;
}

TrellisStats estimate_trellis_stats(const TrainingSet& ts, unsigned m, unsigned m_I, std::size_t q, double shrink) {
  ts.validate(q);
  TransitionAccumulator acc(m, m_I, q);
  for (std::size_t i = 0; i < ts.traces.size(); ++i) acc.add_trace(ts.traces[i], ts.labels[i]);
  return finalize_trellis_stats(acc, shrink);
}

MemoryTrial evaluate_viterbi(const TrainingSet& ts, const TrellisStats& stats) {
  ts.validate(stats.q);
  const BranchMetric metric(stats);
  MemoryTrial trial;
  trial.m = stats.m;
  for (std::size_t i = 0; i < ts.traces.size(); ++i) {
    const auto& labels = ts.labels[i];
    const std::span<const std::uint8_t> preamble(labels.data(), ts.preamble_bits);
    const ViterbiResult res = viterbi_detect(ts.traces[i], metric, preamble);
    for (std::size_t b = 0; b < res.bits.size(); ++b) trial.errors += res.bits[b] != labels[ts.preamble_bits + b];
    trial.bits += res.bits.size();
  }
  return trial;
}

MemorySelection select_memory(const TrainingSet& train, const TrainingSet& validate, std::span<const unsigned> m_range,
                              unsigned m_I, std::size_t q, double factor, double shrink) {
  if (m_range.empty()) throw ConfigError("select_memory: empty memory range");
  if (!(factor >= 1.0)) throw ConfigError("select_memory: factor must be >= 1");
  std::vector<unsigned> ms(m_range.begin(), m_range.end());
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  MemorySelection sel;
  for (unsigned m : ms) {
    const TrellisStats stats = estimate_trellis_stats(train, m, m_I, q, shrink);
    sel.table.push_back(evaluate_viterbi(validate, stats));
  }
  std::size_t best = sel.table.front().errors;
  for (const auto& row : sel.table) best = std::min(best, row.errors);
  for (const auto& row : sel.table) {
    if (static_cast<double>(row.errors + 1) <= factor * static_cast<double>(best + 1)) {
      sel.chosen = row.m;
      break;
    }
  }
  return sel;
}

}  // namespace probe
