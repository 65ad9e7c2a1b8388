#include "probe/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "probe/frontend.hpp"
#include "probe/io.hpp"
#include "probe/linalg.hpp"

namespace probe {

void TrellisStats::validate() const {
  if (q == 0) throw ConfigError("trellis: q must be >= 1");
  if (memory_bits() > 20) throw ConfigError("trellis: m + m_I > 20 is not supported");
  if (means.size() != transition_count() || covs.size() != transition_count()) {
    throw ConfigError("trellis: expected " + std::to_string(transition_count()) + " transitions, got " +
                      std::to_string(means.size()) + " means and " + std::to_string(covs.size()) +
                      " covariances");
  }
  const auto dim = static_cast<Eigen::Index>(window_dim());
  for (std::size_t t = 0; t < means.size(); ++t) {
    if (means[t].size() != dim || covs[t].rows() != dim || covs[t].cols() != dim) {
      throw ConfigError("trellis: transition " + transition_label(t, memory_bits()) +
                        " has the wrong window dimension");
    }
  }
}

std::string transition_label(std::size_t transition, unsigned memory_bits) {
  std::string s;
  for (int j = static_cast<int>(memory_bits); j >= 0; --j) s += ((transition >> j) & 1u) ? '1' : '0';
  return s;
}

std::size_t transition_between(std::size_t prev, std::size_t next, unsigned memory_bits) {
  if (memory_bits == 0) {
    throw ConfigError("transition_between: with a single state the transition must be given by its bit");
  }
  const std::size_t mask = (std::size_t{1} << memory_bits) - 1;
  if (prev > mask || next > mask || (next >> 1) != (prev & (mask >> 1))) {
    throw ConfigError("transition_between: state " + std::to_string(next) + " does not follow state " +
                      std::to_string(prev));
  }
  return (prev << 1) | (next & 1u);
}

BranchMetric::BranchMetric(const TrellisStats& stats) : stats_(stats) {
  stats_.validate();
  dim_ = stats_.window_dim();
  const auto d = static_cast<Eigen::Index>(dim_);
  const auto q = static_cast<Eigen::Index>(stats_.q);
  const Eigen::Index d1 = d - q;
  const std::size_t nt = stats_.transition_count();
  gain_.resize(nt * stats_.q * dim_);
  offset_.resize(nt * stats_.q);
  logdet_.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const std::string what = "trellis transition " + transition_label(t, stats_.memory_bits()) + " covariance";
    const Eigen::MatrixXd l = linalg::cholesky_lower(stats_.covs[t], what);
    const Eigen::MatrixXd l22 = l.bottomRightCorner(q, q);
    const Eigen::MatrixXd l22_inv =
        l22.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(q, q));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> k(q, d);
    k.rightCols(q) = l22_inv;
    if (d1 > 0) {
      const Eigen::MatrixXd l11 = l.topLeftCorner(d1, d1);
      const Eigen::MatrixXd l21 = l.bottomLeftCorner(q, d1);
      // X = L21 L11^-1  <=>  L11^T X^T = L21^T.
      const Eigen::MatrixXd x =
          l11.transpose().triangularView<Eigen::Upper>().solve(l21.transpose()).transpose();
      k.leftCols(d1) = -l22_inv * x;
    }
    std::memcpy(gain_.data() + t * stats_.q * dim_, k.data(), sizeof(double) * stats_.q * dim_);
    const Eigen::VectorXd b = k * stats_.means[t];
    std::memcpy(offset_.data() + t * stats_.q, b.data(), sizeof(double) * stats_.q);
    logdet_[t] = 2.0 * l22.diagonal().array().log().sum();
  }
}

double BranchMetric::operator()(std::span<const double> window, std::size_t transition) const {
  if (window.size() != dim_) throw ConfigError("branch metric: window has the wrong length");
  if (transition >= stats_.transition_count()) throw ConfigError("branch metric: transition out of range");
  const Eigen::Map<const Eigen::VectorXd> w(window.data(), static_cast<Eigen::Index>(dim_));
  const double* g = gain_.data() + transition * stats_.q * dim_;
  const double* b = offset_.data() + transition * stats_.q;
  double acc = logdet_[transition];
  for (std::size_t r = 0; r < stats_.q; ++r) {
    const double u = Eigen::Map<const Eigen::VectorXd>(g + r * dim_, static_cast<Eigen::Index>(dim_)).dot(w) - b[r];
    acc += u * u;
  }
  return acc;
}

void BranchMetric::evaluate_all(std::span<const double> window, std::span<double> out) const {
  const std::size_t nt = stats_.transition_count();
  if (window.size() != dim_ || out.size() != nt) throw ConfigError("branch metric: bad buffer sizes");
  const Eigen::Map<const Eigen::VectorXd> w(window.data(), static_cast<Eigen::Index>(dim_));
  for (std::size_t t = 0; t < nt; ++t) {
    const double* g = gain_.data() + t * stats_.q * dim_;
    const double* b = offset_.data() + t * stats_.q;
    double acc = logdet_[t];
    for (std::size_t r = 0; r < stats_.q; ++r) {
      const double u =
          Eigen::Map<const Eigen::VectorXd>(g + r * dim_, static_cast<Eigen::Index>(dim_)).dot(w) - b[r];
      acc += u * u;
    }
    out[t] = acc;
  }
}

double branch_metric(std::span<const double> window, std::size_t prev, std::size_t next,
                     const BranchMetric& metric) {
  return metric(window, transition_between(prev, next, metric.stats().memory_bits()));
}

double branch_metric_direct(std::span<const double> window, std::size_t transition, const TrellisStats& stats) {
  const auto d = static_cast<Eigen::Index>(stats.window_dim());
  const Eigen::Index d1 = d - static_cast<Eigen::Index>(stats.q);
  const Eigen::Map<const Eigen::VectorXd> w(window.data(), d);
  const Eigen::VectorXd r = w - stats.means[transition];
  const Eigen::MatrixXd& c = stats.covs[transition];
  double metric = std::log(c.determinant()) + r.dot(c.inverse() * r);
  if (d1 > 0) {
    const Eigen::MatrixXd minor = c.topLeftCorner(d1, d1);
    const Eigen::VectorXd r1 = r.head(d1);
    metric -= std::log(minor.determinant()) + r1.dot(minor.inverse() * r1);
  }
  return metric;
}

namespace {

struct TrellisLayout {
  std::size_t payload_bits = 0;
  std::size_t start_state = 0;
};

TrellisLayout check_layout(std::span<const double> z, const TrellisStats& stats,
                           std::span<const std::uint8_t> preamble) {
  const unsigned K = stats.memory_bits();
  if (z.size() % stats.q != 0) {
    throw ConfigError("viterbi: trace length " + std::to_string(z.size()) + " is not a multiple of q = " +
                      std::to_string(stats.q));
  }
  const std::size_t need = std::max<std::size_t>(K, stats.m_I);
  if (preamble.size() < need) {
    throw ConfigError("viterbi: preamble of " + std::to_string(preamble.size()) + " bits is shorter than " +
                      std::to_string(need));
  }
  const std::size_t total = z.size() / stats.q;
  if (total < preamble.size() + 1 || z.size() < stats.window_dim()) {
    throw ConfigError("viterbi: trace is shorter than one observation window after the preamble");
  }
  TrellisLayout layout;
  layout.payload_bits = total - preamble.size();
  for (std::size_t j = 0; j < K; ++j) {
    if (preamble[preamble.size() - 1 - j]) layout.start_state |= std::size_t{1} << j;
  }
  return layout;
}

}  // namespace

ViterbiResult viterbi_detect(std::span<const double> z, const BranchMetric& metric,
                             std::span<const std::uint8_t> preamble) {
  const TrellisStats& stats = metric.stats();
  const TrellisLayout layout = check_layout(z, stats, preamble);
  const std::size_t ns = stats.state_count();
  const std::size_t nt = stats.transition_count();
  const std::size_t mask = ns - 1;
  const std::size_t q = stats.q;
  const std::size_t dim = stats.window_dim();
  const std::size_t p = preamble.size();
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> cost(ns, inf);
  std::vector<double> next_cost(ns);
  std::vector<double> branch(nt);
  std::vector<std::uint32_t> choice(layout.payload_bits * ns);
  cost[layout.start_state] = 0.0;

  for (std::size_t step = 0; step < layout.payload_bits; ++step) {
    const std::size_t i = p + step;
    metric.evaluate_all(z.subspan((i - stats.m_I) * q, dim), branch);
    std::fill(next_cost.begin(), next_cost.end(), inf);
    std::uint32_t* ch = choice.data() + step * ns;
    for (std::size_t t = 0; t < nt; ++t) {
      const double c = cost[t >> 1];
      if (c == inf) continue;
      const double cand = c + branch[t];
      const std::size_t s = t & mask;
      if (cand < next_cost[s]) {
        next_cost[s] = cand;
        ch[s] = static_cast<std::uint32_t>(t);
      }
    }
    cost.swap(next_cost);
  }

  std::size_t best = 0;
  for (std::size_t s = 1; s < ns; ++s) {
    if (cost[s] < cost[best]) best = s;
  }
  ViterbiResult out;
  out.path_metric = cost[best];
  out.final_state = best;
  out.bits.resize(layout.payload_bits);
  std::size_t s = best;
  for (std::size_t step = layout.payload_bits; step-- > 0;) {
    const std::uint32_t t = choice[step * ns + s];
    out.bits[step] = static_cast<std::uint8_t>(t & 1u);
    s = t >> 1;
  }
  return out;
}

double path_metric(std::span<const double> z, const BranchMetric& metric, std::span<const std::uint8_t> preamble,
                   std::span<const std::uint8_t> payload) {
  const TrellisStats& stats = metric.stats();
  const TrellisLayout layout = check_layout(z, stats, preamble);
  if (payload.size() != layout.payload_bits) throw ConfigError("path_metric: payload length mismatch");
  const std::size_t mask = stats.state_count() - 1;
  std::size_t s = layout.start_state;
  double total = 0.0;
  for (std::size_t step = 0; step < payload.size(); ++step) {
    const std::size_t i = preamble.size() + step;
    const std::size_t t = (s << 1) | (payload[step] ? 1u : 0u);
    total = total + metric(z.subspan((i - stats.m_I) * stats.q, stats.window_dim()), t);
    s = t & mask;
  }
  return total;
}

const char* to_string(HitStatistic kind) {
  switch (kind) {
    case HitStatistic::lmp: return "lmp";
    case HitStatistic::glrt: return "glrt";
    case HitStatistic::bayes: return "bayes";
  }
  return "?";
}

void HitDetectorParams::validate(HitStatistic kind) const {
  if (gamma0.empty()) throw ConfigError("hit detector: profile window is empty");
  if (!(V > 0.0)) throw ConfigError("hit detector: V must be positive");
  if (q == 0 || samples_per_cycle == 0) throw ConfigError("hit detector: q and samples_per_cycle must be >= 1");
  if (kind == HitStatistic::bayes && !(lambda2 > 0.0)) {
    throw ConfigError("bayes detector: prior variance lambda2 must be positive");
  }
}

double HitDetectorParams::profile_energy() const {
  return std::inner_product(gamma0.begin(), gamma0.end(), gamma0.begin(), 0.0);
}

double lmp_from_correlation(double s, double V) { return s / V; }

double glrt_from_correlation(double s, double V) {
  const double l = lmp_from_correlation(s, V);
  return l * l;
}

double bayes_from_correlation(double s, double energy, double V, double alpha, double lambda2) {
  const double g = energy;
  const double resid = s - alpha * g;
  return alpha * s / V - alpha * alpha * g / (2.0 * V) + 0.5 * lambda2 * resid * resid / (V * (V + lambda2 * g)) -
         0.5 * std::log1p(lambda2 * g / V);
}

namespace {

double correlate(std::span<const double> window, const Signal& gamma0) {
  if (window.size() != gamma0.size()) throw ConfigError("hit statistic: window length differs from the profile");
  return std::inner_product(window.begin(), window.end(), gamma0.begin(), 0.0);
}

}  // namespace

double lmp_statistic(std::span<const double> window, const HitDetectorParams& p) {
  return lmp_from_correlation(correlate(window, p.gamma0), p.V);
}

double glrt_statistic(std::span<const double> window, const HitDetectorParams& p) {
  return glrt_from_correlation(correlate(window, p.gamma0), p.V);
}

double bayes_statistic(std::span<const double> window, const HitDetectorParams& p) {
  p.validate(HitStatistic::bayes);
  return bayes_from_correlation(correlate(window, p.gamma0), p.profile_energy(), p.V, p.alpha, p.lambda2);
}

Signal hit_correlations(std::span<const double> e, const HitDetectorParams& p) {
  return matched_filter(e, p.gamma0, p.samples_per_cycle);
}

HitDetection decide_hits(std::span<const double> correlations, const HitDetectorParams& p, HitStatistic kind,
                         std::size_t truncated_from_cycle) {
  p.validate(kind);
  if (correlations.size() % p.q != 0) {
    throw ConfigError("hit detector: trace does not hold a whole number of " + std::to_string(p.q) + "-hit bits");
  }
  const std::size_t nbits = correlations.size() / p.q;
  const double energy = p.profile_energy();
  HitDetection out;
  out.bits.resize(nbits);
  out.scores.resize(nbits);
  for (std::size_t b = 0; b < nbits; ++b) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < p.q; ++k) {
      const double s = correlations[b * p.q + k];
      double l = 0.0;
      switch (kind) {
        case HitStatistic::lmp: l = lmp_from_correlation(s, p.V); break;
        case HitStatistic::glrt: l = glrt_from_correlation(s, p.V); break;
        case HitStatistic::bayes: l = bayes_from_correlation(s, energy, p.V, p.alpha, p.lambda2); break;
      }
      best = std::max(best, l);
    }
    out.scores[b] = best;
    out.bits[b] = best > p.tau ? 1 : 0;
  }
  out.truncated_from = std::min(nbits, truncated_from_cycle / p.q);
  return out;
}

HitDetection hit_detect(std::span<const double> e, const HitDetectorParams& p, HitStatistic kind) {
  p.validate(kind);
  const Signal s = hit_correlations(e, p);
  const std::size_t n = e.size();
  std::size_t first_trunc = s.size();
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k * p.samples_per_cycle + p.gamma0.size() > n) {
      first_trunc = k;
      break;
    }
  }
  return decide_hits(s, p, kind, first_trunc);
}

HitDetection lmp_detect(std::span<const double> e, const HitDetectorParams& p) {
  return hit_detect(e, p, HitStatistic::lmp);
}
HitDetection glrt_detect(std::span<const double> e, const HitDetectorParams& p) {
  return hit_detect(e, p, HitStatistic::glrt);
}
HitDetection bayes_detect(std::span<const double> e, const HitDetectorParams& p) {
  return hit_detect(e, p, HitStatistic::bayes);
}

ThresholdFit tune_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ConfigError("tune_threshold: scores and labels differ in length");
  if (scores.size() < 100) throw ConfigError("tune_threshold: need at least 100 labeled bits");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::size_t ones = 0;
  for (auto l : labels) ones += l ? 1 : 0;
  const std::size_t n = scores.size();
  if (ones == 0 || ones == n) throw ConfigError("tune_threshold: labels contain a single class");

  // Candidate c decides 0 for the c lowest scores; only cuts between distinct scores are valid.
  std::vector<std::size_t> cuts;
  std::vector<std::size_t> errs;
  std::size_t ones_below = 0;
  std::size_t zeros_below = 0;
  const std::size_t zeros = n - ones;
  for (std::size_t c = 0; c <= n; ++c) {
    if (c == 0 || c == n || scores[order[c - 1]] < scores[order[c]]) {
      cuts.push_back(c);
      errs.push_back(ones_below + (zeros - zeros_below));
    }
    if (c < n) (labels[order[c]] ? ones_below : zeros_below) += 1;
  }
  const std::size_t best = *std::min_element(errs.begin(), errs.end());
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    if (errs[i] == best) tied.push_back(cuts[i]);
  }
  const std::size_t c = tied[tied.size() / 2];
  const double lo = scores[order.front()];
  const double hi = scores[order.back()];
  const double pad = std::max(1.0, hi - lo);
  ThresholdFit fit;
  if (c == 0) {
    fit.tau = lo - pad;
  } else if (c == n) {
    fit.tau = hi + pad;
  } else {
    fit.tau = 0.5 * (scores[order[c - 1]] + scores[order[c]]);
  }
  fit.errors = best;
  fit.training_ber = static_cast<double>(best) / static_cast<double>(n);
  return fit;
}

namespace {
constexpr unsigned char kTrellisMagic[8] = {'P', 'R', 'B', 'T', 'R', 'L', 'S', '\0'};
constexpr std::uint32_t kTrellisVersion = 1;
}  // namespace

std::vector<unsigned char> encode_trellis(const TrellisStats& stats) {
  stats.validate();
  std::vector<unsigned char> out(std::begin(kTrellisMagic), std::end(kTrellisMagic));
  io::put_u32(out, kTrellisVersion);
  io::put_u32(out, stats.m);
  io::put_u32(out, stats.m_I);
  io::put_u32(out, static_cast<std::uint32_t>(stats.q));
  io::put_u32(out, static_cast<std::uint32_t>(stats.state_count()));
  io::put_u32(out, static_cast<std::uint32_t>(stats.transition_count()));
  const auto d = static_cast<Eigen::Index>(stats.window_dim());
  for (std::size_t t = 0; t < stats.transition_count(); ++t) {
    for (Eigen::Index i = 0; i < d; ++i) io::put_f64(out, stats.means[t](i));
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) io::put_f64(out, stats.covs[t](r, c));
    }
  }
  return out;
}

TrellisStats decode_trellis(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kTrellisMagic, 8) != 0) {
    throw IoError("trellis: bad magic, not a trellis file");
  }
  std::size_t pos = 8;
  const std::uint32_t version = io::get_u32(bytes, pos);
  if (version != kTrellisVersion) throw IoError("trellis: unsupported version " + std::to_string(version));
  TrellisStats stats;
  stats.m = io::get_u32(bytes, pos);
  stats.m_I = io::get_u32(bytes, pos);
  stats.q = io::get_u32(bytes, pos);
  const std::uint32_t states = io::get_u32(bytes, pos);
  const std::uint32_t transitions = io::get_u32(bytes, pos);
  if (stats.q == 0 || stats.memory_bits() > 20 || states != stats.state_count() ||
      transitions != stats.transition_count()) {
    throw IoError("trellis: inconsistent header");
  }
  const auto d = static_cast<Eigen::Index>(stats.window_dim());
  const std::size_t expect = pos + transitions * static_cast<std::size_t>(d + d * d) * 8;
  if (bytes.size() != expect) {
    throw IoError("trellis: file holds " + std::to_string(bytes.size()) + " bytes, header implies " +
                  std::to_string(expect));
  }
  stats.means.resize(transitions);
  stats.covs.resize(transitions);
  for (std::size_t t = 0; t < transitions; ++t) {
    stats.means[t].resize(d);
    for (Eigen::Index i = 0; i < d; ++i) stats.means[t](i) = io::get_f64(bytes, pos);
    stats.covs[t].resize(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) stats.covs[t](r, c) = io::get_f64(bytes, pos);
    }
  }
  return stats;
}

void save_trellis(const std::filesystem::path& path, const TrellisStats& stats) {
  io::write_file_bytes(path, encode_trellis(stats));
}

TrellisStats load_trellis(const std::filesystem::path& path) {
  try {
    return decode_trellis(io::read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace probe
