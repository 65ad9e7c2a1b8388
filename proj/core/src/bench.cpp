#include "probe/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "parallel.hpp"
#include "probe/io.hpp"
#include "probe/rng.hpp"
#include "probe/train.hpp"

namespace probe {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// First cycle whose hit window runs past the end of a trace of n samples.
std::size_t first_truncated_cycle(std::size_t n, std::size_t spc, std::size_t window) {
  const std::size_t cycles = n / spc;
  if (window > n) return 0;
  return std::min(cycles, (n - window) / spc + 1);
}

}  // namespace

std::vector<OperatingPoint> sweep_grid(const ExperimentConfig& cfg) {
  std::vector<OperatingPoint> grid;
  const OperatingPoint base{cfg.snr_db, cfg.snr_db, cfg.q};
  if (cfg.variable == SweepVariable::none) return {base};
  for (double v : cfg.values) {
    OperatingPoint p = base;
    p.sweep_value = v;
    switch (cfg.variable) {
      case SweepVariable::snr_db: p.snr_db = v; break;
      case SweepVariable::q: p.q = static_cast<std::size_t>(v); break;
      case SweepVariable::bit_width_us:
        p.q = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(v * 1e-6 * cfg.f0_hz)));
        break;
      case SweepVariable::none: break;
    }
    grid.push_back(p);
  }
  return grid;
}

Scenario build_scenario(const ExperimentConfig& cfg, const OperatingPoint& point) {
  Scenario sc;
  sc.point = point;
  sc.spc = cfg.samples_per_cycle;
  sc.params.f0_hz = cfg.f0_hz;
  sc.params.quality = cfg.quality;
  sc.params.dither_amplitude_nm = cfg.dither_amplitude_nm;
  sc.params.dither_freq_hz = cfg.f0_hz;
  sc.params.sample_rate_hz = static_cast<double>(cfg.samples_per_cycle) * cfg.f0_hz;
  sc.params.validate();
  const ContinuousStateSpace canonical = to_controllable_canonical(build_continuous(sc.params));
  sc.dss = discretize_zoh(canonical, sc.params.sample_period());

  const double w0 = sc.params.omega0();
  const double force_unit = cfg.thermal_force_scale * w0 * w0 / cfg.quality;
  sc.noise.thermal_variance = cfg.thermal_variance * force_unit * force_unit;
  sc.noise.measurement_variance = cfg.measurement_variance;
  sc.observer = design_kalman(sc.dss, sc.noise);
  const std::size_t len = effective_length(sc.observer.gamma, cfg.profile_tolerance);
  if (len == 0) throw NumericalError("build_scenario: innovation profile is identically zero");
  sc.profile.assign(sc.observer.gamma.begin(), sc.observer.gamma.begin() + static_cast<std::ptrdiff_t>(len));
  sc.channel = make_whitened_channel(sc.profile, sc.spc, sc.observer.innovation_variance, point.q,
                                     cfg.profile_tolerance);

  const double a0 = cfg.dither_amplitude_nm;
  sc.delta_nm = std::pow(10.0, point.snr_db / 10.0) * (cfg.thermal_variance + cfg.measurement_variance);
  sc.media.q = point.q;
  sc.media.cycle_period_s = sc.params.cycle_period();
  sc.media.height_nm = std::max(0.0, cfg.separation_nm - a0 + sc.delta_nm);
  sc.media.validate();
  sc.setup.separation_nm = cfg.separation_nm;
  sc.setup.restitution = cfg.restitution;
  sc.setup.trough_sample = std::min<std::size_t>(2, sc.spc - 1);
  const double depth = std::min(sc.delta_nm, a0);
  sc.nu_nom = (1.0 + cfg.restitution) * w0 * std::sqrt(a0 * a0 - (a0 - depth) * (a0 - depth));
  return sc;
}

BlockLayout block_layout(const Scenario& sc, const ExperimentConfig& cfg, std::size_t payload) {
  const std::size_t m_I = sc.channel.m_I;
  BlockLayout l;
  l.preamble = std::max<std::size_t>({cfg.trellis_memory + m_I, cfg.memory, m_I}) + 1;
  l.payload = payload;
  l.postamble = ceil_div(2 * sc.channel.h.size(), sc.media.q) + m_I + 1;
  return l;
}

BitSequence block_bits(const BlockLayout& layout, double p_one, std::uint64_t seed) {
  BitSequence bits(layout.total(), 0);
  const BitSequence payload = generate_bits(layout.payload, seed, p_one);
  std::copy(payload.begin(), payload.end(), bits.begin() + static_cast<std::ptrdiff_t>(layout.preamble));
  return bits;
}

ImpactSourceModel prepare_impact_source(const ExperimentConfig& cfg, const Scenario& sc, std::uint64_t seed) {
  ImpactSourceModel src;
  src.kind = cfg.source;
  switch (cfg.source) {
    case ImpactSource::synthetic:
      src.model = synthetic_impact_model(cfg.memory, sc.media.q, sc.nu_nom);
      return src;
    case ImpactSource::file:
      src.model = read_impact_model(cfg.model_file);
      if (src.model.q != sc.media.q) {
        throw ConfigError("impact model file " + cfg.model_file.string() + " has q = " + std::to_string(src.model.q) +
                          " but the operating point uses q = " + std::to_string(sc.media.q));
      }
      return src;
    case ImpactSource::calibrated:
    case ImpactSource::physical: break;
  }
  BlockLayout layout;
  layout.preamble = cfg.memory + 1;
  layout.payload = cfg.calibration_bits;
  const BitSequence bits = block_bits(layout, cfg.p_one, derive_seed(seed, {0}));
  const PhysicalRun run = impacts_physical(bits, sc.dss, sc.params, sc.media, sc.setup, sc.noise, derive_seed(seed, {1}));
  std::vector<std::size_t> phases;
  phases.reserve(run.hit_samples.size());
  for (std::size_t k : run.hit_samples) phases.push_back(k % sc.spc);
  if (!phases.empty()) {
    std::nth_element(phases.begin(), phases.begin() + static_cast<std::ptrdiff_t>(phases.size() / 2), phases.end());
    src.hit_phase = phases[phases.size() / 2];
  }
  if (cfg.source == ImpactSource::calibrated) {
    src.model = calibrate_impact_model(bits, run.impacts, cfg.memory, sc.media.q);
  }
  return src;
}

BlockSignals simulate_block(const Scenario& sc, const ImpactSourceModel& src, const BitSequence& bits,
                            std::uint64_t seed) {
  BlockSignals out;
  out.bits = bits;
  if (src.kind == ImpactSource::physical) {
    const PhysicalRun run =
        impacts_physical(bits, sc.dss, sc.params, sc.media, sc.setup, sc.noise, derive_seed(seed, {0}));
    Signal e = run_observer(sc.dss, sc.observer, run.deflection, run.dither, run.initial_state);
    // Align the typical contact sample with the cycle start the matched filter assumes.
    const std::size_t shift = std::min(src.hit_phase, e.size());
    std::rotate(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(shift), e.end());
    std::fill(e.end() - static_cast<std::ptrdiff_t>(shift), e.end(), 0.0);
    out.impacts = run.impacts;
    out.innovation = std::move(e);
  } else {
    out.impacts = impacts_statistical(bits, src.model, derive_seed(seed, {0}));
    out.innovation = synthesize_innovation(out.impacts, sc.observer.gamma, sc.observer.innovation_variance, sc.spc,
                                           derive_seed(seed, {1}));
  }
  out.matched = matched_filter(out.innovation, sc.profile, sc.spc);
  out.whitened = whiten(out.matched, sc.channel);
  return out;
}

HitStatistic hit_statistic_from_name(const std::string& name) {
  if (name == "lmp") return HitStatistic::lmp;
  if (name == "glrt") return HitStatistic::glrt;
  if (name == "bayes") return HitStatistic::bayes;
  throw ConfigError("not a hit detector: '" + name + "'");
}

TrainedDetectors train_detectors(const ExperimentConfig& cfg, const Scenario& sc, const ImpactSourceModel& src,
                                 std::uint64_t seed) {
  const std::size_t nblocks = ceil_div(cfg.training_bits, cfg.block_bits);
  std::vector<BlockSignals> blocks(nblocks);
  std::vector<BlockLayout> layouts(nblocks);
  detail::parallel_for(nblocks, cfg.threads, [&](std::size_t b) {
    const std::size_t payload = std::min(cfg.block_bits, cfg.training_bits - b * cfg.block_bits);
    layouts[b] = block_layout(sc, cfg, payload);
    const BitSequence bits = block_bits(layouts[b], cfg.p_one, derive_seed(seed, {b, 0}));
    blocks[b] = simulate_block(sc, src, bits, derive_seed(seed, {b, 1}));
    blocks[b].innovation = {};  // only cycle-rate signals are needed from here on
  });

  TrainedDetectors out;
  if (cfg.wants("viterbi")) {
    TrainingSet ts;
    ts.preamble_bits = layouts.front().preamble;
    for (auto& b : blocks) {
      ts.traces.push_back(b.whitened);
      ts.labels.push_back(b.bits);
    }
    out.trellis = estimate_trellis_stats(ts, cfg.trellis_memory, static_cast<unsigned>(sc.channel.m_I), sc.media.q,
                                         cfg.shrink);
    out.training_ber["viterbi"] = evaluate_viterbi(ts, *out.trellis).ber();
  }

  // Prior of nu over the cycles of high payload bits.
  double sum = 0.0;
  double sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const auto& l = layouts[b];
    for (std::size_t i = l.preamble; i < l.preamble + l.payload; ++i) {
      if (!blocks[b].bits[i]) continue;
      for (std::size_t k = 0; k < sc.media.q; ++k) {
        const double v = blocks[b].impacts.nu[i * sc.media.q + k];
        sum += v;
        sum2 += v * v;
        ++n;
      }
    }
  }
  const double alpha = n ? sum / static_cast<double>(n) : sc.nu_nom;
  const double var = n > 1 ? std::max(0.0, (sum2 - sum * alpha) / static_cast<double>(n - 1)) : 0.0;

  for (const auto& name : cfg.detectors) {
    if (name == "viterbi") continue;
    const HitStatistic kind = hit_statistic_from_name(name);
    HitDetectorParams p;
    p.gamma0 = sc.profile;
    p.V = sc.observer.innovation_variance;
    p.q = sc.media.q;
    p.samples_per_cycle = sc.spc;
    p.alpha = alpha;
    p.lambda2 = std::max(var, 1e-9 * alpha * alpha + 1e-300);
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t b = 0; b < nblocks; ++b) {
      const auto& l = layouts[b];
      const std::size_t trunc = first_truncated_cycle(blocks[b].matched.size() * sc.spc, sc.spc, p.gamma0.size());
      const HitDetection det = decide_hits(blocks[b].matched, p, kind, trunc);
      for (std::size_t i = l.preamble; i < l.preamble + l.payload; ++i) {
        scores.push_back(det.scores[i]);
        labels.push_back(blocks[b].bits[i]);
      }
    }
    const ThresholdFit fit = tune_threshold(scores, labels);
    p.tau = fit.tau;
    out.training_ber[name] = fit.training_ber;
    out.hit[name] = std::move(p);
  }
  return out;
}

BerRecord make_ber_record(double sweep_value, const std::string& detector, std::size_t errors, std::size_t bits) {
  BerRecord r;
  r.sweep_value = sweep_value;
  r.detector = detector;
  r.errors = errors;
  r.bits = bits;
  if (bits == 0) return r;
  const double n = static_cast<double>(bits);
  r.ber = static_cast<double>(errors) / n;
  if (errors == 0) {
    r.ci_low = 0.0;
    r.ci_high = std::min(1.0, 3.0 / n);
    return r;
  }
  const double half = 1.96 * std::sqrt(r.ber * (1.0 - r.ber) / n) + 0.5 / n;
  r.ci_low = std::max(0.0, r.ber - half);
  r.ci_high = std::min(1.0, r.ber + half);
  return r;
}

SweepResult run_ber_sweep(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  SweepResult result;
  const auto grid = sweep_grid(cfg);
  for (std::size_t pi = 0; pi < grid.size(); ++pi) {
    const Scenario sc = build_scenario(cfg, grid[pi]);
    const ImpactSourceModel src = prepare_impact_source(cfg, sc, derive_seed(cfg.seed, {pi, 0}));
    const TrainedDetectors trained = train_detectors(cfg, sc, src, derive_seed(cfg.seed, {pi, 1}));
    std::optional<BranchMetric> metric;
    if (trained.trellis) metric.emplace(*trained.trellis);

    const std::size_t nblocks = ceil_div(cfg.bits_per_point, cfg.block_bits);
    const std::size_t ndet = cfg.detectors.size();
    std::vector<std::size_t> errors(nblocks * ndet, 0);
    std::vector<std::size_t> counted(nblocks, 0);
    detail::parallel_for(nblocks, cfg.threads, [&](std::size_t b) {
      const std::size_t payload = std::min(cfg.block_bits, cfg.bits_per_point - b * cfg.block_bits);
      const BlockLayout layout = block_layout(sc, cfg, payload);
      const BitSequence bits = block_bits(layout, cfg.p_one, derive_seed(cfg.seed, {pi, 2, b, 0}));
      const BlockSignals sig = simulate_block(sc, src, bits, derive_seed(cfg.seed, {pi, 2, b, 1}));
      counted[b] = layout.payload;
      const std::size_t lo = layout.preamble;
      const std::size_t hi = layout.preamble + layout.payload;
      for (std::size_t d = 0; d < ndet; ++d) {
        const std::string& name = cfg.detectors[d];
        std::size_t err = 0;
        if (name == "viterbi") {
          const std::span<const std::uint8_t> preamble(bits.data(), layout.preamble);
          const ViterbiResult res = viterbi_detect(sig.whitened, *metric, preamble);
          for (std::size_t i = lo; i < hi; ++i) err += res.bits[i - layout.preamble] != bits[i];
        } else {
          const HitDetectorParams& p = trained.hit.at(name);
          const std::size_t trunc = first_truncated_cycle(sig.innovation.size(), sc.spc, p.gamma0.size());
          const HitDetection det = decide_hits(sig.matched, p, hit_statistic_from_name(name), trunc);
          if (det.truncated_from < hi) throw NumericalError("ber sweep: hit windows overrun the payload");
          for (std::size_t i = lo; i < hi; ++i) err += det.bits[i] != bits[i];
        }
        errors[b * ndet + d] = err;
      }
    });

    std::size_t total_bits = 0;
    for (std::size_t c : counted) total_bits += c;
    PointSummary summary;
    summary.point = grid[pi];
    summary.isi_cycles = sc.channel.I;
    summary.m_I = sc.channel.m_I;
    summary.profile_samples = sc.profile.size();
    summary.V = sc.observer.innovation_variance;
    summary.nu_nom = sc.nu_nom;
    summary.training_ber = trained.training_ber;
    for (const auto& [name, p] : trained.hit) summary.thresholds[name] = p.tau;
    result.points.push_back(summary);
    for (std::size_t d = 0; d < ndet; ++d) {
      std::size_t err = 0;
      for (std::size_t b = 0; b < nblocks; ++b) err += errors[b * ndet + d];
      result.records.push_back(make_ber_record(grid[pi].sweep_value, cfg.detectors[d], err, total_bits));
    }
  }
  return result;
}

void write_ber_csv(const std::filesystem::path& path, const std::vector<BerRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sweep_var,detector,errors,bits,ber,ci_low,ci_high\n";
  for (const auto& r : records) {
    out << fmt(r.sweep_value) << ',' << r.detector << ',' << r.errors << ',' << r.bits << ',' << fmt(r.ber) << ','
        << fmt(r.ci_low) << ',' << fmt(r.ci_high) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<BerRecord> read_ber_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sweep_var,detector,errors,bits,ber,ci_low,ci_high", 0) != 0) {
    throw IoError(path.string() + ": not a BER table (bad header)");
  }
  std::vector<BerRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 7 columns");
    try {
      BerRecord r;
      r.sweep_value = std::stod(cells[0]);
      r.detector = cells[1];
      r.errors = std::stoull(cells[2]);
      r.bits = std::stoull(cells[3]);
      r.ber = std::stod(cells[4]);
      r.ci_low = std::stod(cells[5]);
      r.ci_high = std::stod(cells[6]);
      out.push_back(r);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

void write_points_csv(const std::filesystem::path& path, const std::vector<PointSummary>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sweep_var,snr_db,q,isi_cycles,m_I,profile_samples,V,nu_nom,detector,threshold,training_ber\n";
  for (const auto& p : points) {
    for (const auto& [name, ber] : p.training_ber) {
      const auto it = p.thresholds.find(name);
      out << fmt(p.point.sweep_value) << ',' << fmt(p.point.snr_db) << ',' << p.point.q << ',' << p.isi_cycles << ','
          << p.m_I << ',' << p.profile_samples << ',' << fmt(p.V) << ',' << fmt(p.nu_nom) << ',' << name << ','
          << (it == p.thresholds.end() ? std::string() : fmt(it->second)) << ',' << fmt(ber) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::string> detector_order(const std::vector<BerRecord>& records) {
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (std::find(order.begin(), order.end(), r.detector) == order.end()) order.push_back(r.detector);
  }
  return order;
}

std::string sci(double v) {
  std::ostringstream o;
  o << std::scientific << std::setprecision(2) << v;
  return o.str();
}

}  // namespace

std::string report(const std::vector<BerRecord>& records) {
  std::ostringstream o;
  for (const auto& det : detector_order(records)) {
    std::vector<BerRecord> rows;
    for (const auto& r : records) {
      if (r.detector == det) rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.sweep_value < b.sweep_value; });
    o << det << '\n';
    o << "  " << std::left << std::setw(12) << "sweep_var" << std::setw(22) << "errors/bits" << std::setw(12) << "BER"
      << "95% interval\n";
    for (const auto& r : rows) {
      const std::string ber = r.errors == 0 ? "< " + sci(r.ci_high) : sci(r.ber);
      const bool wide = r.ci_low <= 0.0 || r.ci_high > 10.0 * r.ci_low;
      o << "  " << std::left << std::setw(12) << fmt(r.sweep_value) << std::setw(22)
        << (std::to_string(r.errors) + "/" + std::to_string(r.bits)) << std::setw(12) << ber << '[' << sci(r.ci_low)
        << ", " << sci(r.ci_high) << ']' << (wide ? " *" : "") << '\n';
    }
  }
  o << "* interval spans more than a decade\n";
  return o.str();
}

void write_report_csv(const std::filesystem::path& path, const std::vector<BerRecord>& records) {
  const auto order = detector_order(records);
  std::vector<double> sweeps;
  for (const auto& r : records) {
    if (std::find(sweeps.begin(), sweeps.end(), r.sweep_value) == sweeps.end()) sweeps.push_back(r.sweep_value);
  }
  std::sort(sweeps.begin(), sweeps.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sweep_var";
  for (const auto& d : order) out << ',' << d << "_ber," << d << "_ci_low," << d << "_ci_high";
  out << '\n';
  for (double s : sweeps) {
    out << fmt(s);
    for (const auto& d : order) {
      const auto it = std::find_if(records.begin(), records.end(),
                                   [&](const BerRecord& r) { return r.detector == d && r.sweep_value == s; });
      if (it == records.end()) {
        out << ",,,";
      } else {
        // Zero-error points carry their rule-of-three bound in the BER column.
        out << ',' << fmt(it->errors == 0 ? it->ci_high : it->ber) << ',' << fmt(it->ci_low) << ','
            << fmt(it->ci_high);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void generate_dataset(const ExperimentConfig& cfg_in, const std::filesystem::path& dir) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  io::ensure_directory(dir);
  const OperatingPoint point = sweep_grid(cfg).front();
  const Scenario sc = build_scenario(cfg, point);
  const ImpactSourceModel src = prepare_impact_source(cfg, sc, derive_seed(cfg.seed, {0, 0}));
  const BlockLayout layout = block_layout(sc, cfg, cfg.dataset_bits);
  const BitSequence bits = block_bits(layout, cfg.p_one, derive_seed(cfg.seed, {0, 3, 0}));
  const BlockSignals sig = simulate_block(sc, src, bits, derive_seed(cfg.seed, {0, 3, 1}));

  write_bits_csv(dir / "bits.csv", bits);
  write_impacts_csv(dir / "impacts.csv", sig.impacts);
  io::write_signal_binary(dir / "innovation.bin", sig.innovation);
  io::write_indexed_csv(dir / "matched.csv", "cycle_index", "z_prime", sig.matched);
  io::write_indexed_csv(dir / "whitened.csv", "cycle_index", "z", sig.whitened);
  io::write_indexed_csv(dir / "profile.csv", "k", "gamma", sc.profile);
  {
    std::vector<double> idx(sc.channel.h.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<double>(j);
    io::write_csv_columns(dir / "channel.csv", {"lag", "h", "R"}, {idx, sc.channel.h, sc.channel.R});
  }
  if (src.kind != ImpactSource::physical) write_impact_model(dir / "impact_model.txt", src.model);
  std::ofstream meta(dir / "dataset.ini", std::ios::binary);
  if (!meta) throw IoError("cannot write " + (dir / "dataset.ini").string());
  meta << "preamble_bits = " << layout.preamble << '\n'
       << "postamble_bits = " << layout.postamble << '\n'
       << "q = " << sc.media.q << '\n'
       << "samples_per_cycle = " << sc.spc << '\n'
       << "isi_cycles = " << sc.channel.I << '\n'
       << "m_I = " << sc.channel.m_I << '\n'
       << "innovation_variance = " << fmt(sc.observer.innovation_variance) << '\n'
       << "seed = " << cfg.seed << '\n';
  if (!meta) throw IoError("write failed: " + (dir / "dataset.ini").string());
}

DatasetInfo read_dataset_info(const std::filesystem::path& dir) {
  const auto path = dir / "dataset.ini";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  DatasetInfo info;
  std::string line;
  std::size_t line_no = 0;
  bool have_q = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "preamble_bits") info.preamble_bits = std::stoull(value);
      if (key == "postamble_bits") info.postamble_bits = std::stoull(value);
      if (key == "q") {
        info.q = std::stoull(value);
        have_q = true;
      }
      if (key == "samples_per_cycle") info.samples_per_cycle = std::stoull(value);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed value");
    }
  }
  if (!have_q || info.q == 0) throw IoError(path.string() + ": missing q");
  return info;
}

void save_trained(const std::filesystem::path& dir, const TrainedDetectors& trained) {
  io::ensure_directory(dir);
  if (trained.trellis) save_trellis(dir / "trellis.bin", *trained.trellis);
  const auto path = dir / "hit_detectors.ini";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [name, p] : trained.hit) {
    out << '[' << name << "]\n"
        << "tau = " << fmt(p.tau) << '\n'
        << "alpha = " << fmt(p.alpha) << '\n'
        << "lambda2 = " << fmt(p.lambda2) << '\n';
    const auto it = trained.training_ber.find(name);
    if (it != trained.training_ber.end()) out << "training_ber = " << fmt(it->second) << '\n';
  }
  if (const auto it = trained.training_ber.find("viterbi"); it != trained.training_ber.end()) {
    out << "[viterbi]\ntraining_ber = " << fmt(it->second) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TrainedDetectors load_trained(const std::filesystem::path& dir, const ExperimentConfig& cfg, const Scenario& sc) {
  TrainedDetectors out;
  std::map<std::string, std::map<std::string, double>> sections;
  const auto ini = dir / "hit_detectors.ini";
  if (std::filesystem::exists(ini)) {
    std::ifstream in(ini);
    if (!in) throw IoError("cannot open " + ini.string());
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = line.substr(1, line.size() - 2);
        sections[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos || section.empty()) {
        throw IoError(ini.string() + ":" + std::to_string(line_no) + ": expected key = value inside a section");
      }
      std::string key = line.substr(0, eq);
      key.erase(key.find_last_not_of(" \t") + 1);
      try {
        sections[section][key] = std::stod(line.substr(eq + 1));
      } catch (const std::exception&) {
        throw IoError(ini.string() + ":" + std::to_string(line_no) + ": malformed number");
      }
    }
  }
  for (const auto& name : cfg.detectors) {
    const auto sec = sections.find(name);
    if (sec != sections.end()) {
      if (const auto it = sec->second.find("training_ber"); it != sec->second.end()) out.training_ber[name] = it->second;
    }
    if (name == "viterbi") {
      const auto path = dir / "trellis.bin";
      if (!std::filesystem::exists(path)) {
        throw ConfigError("detector 'viterbi' requested but " + path.string() + " does not exist; run train first");
      }
      out.trellis = load_trellis(path);
      continue;
    }
    if (sec == sections.end()) {
      throw ConfigError("detector '" + name + "' requested but " + ini.string() + " has no [" + name + "] section");
    }
    const auto get = [&](const char* key) {
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ConfigError(ini.string() + ": [" + name + "] lacks '" + key + "'");
      return it->second;
    };
    HitDetectorParams p;
    p.gamma0 = sc.profile;
    p.V = sc.observer.innovation_variance;
    p.q = sc.media.q;
    p.samples_per_cycle = sc.spc;
    p.tau = get("tau");
    p.alpha = get("alpha");
    p.lambda2 = get("lambda2");
    p.validate(hit_statistic_from_name(name));
    out.hit[name] = std::move(p);
  }
  if (out.trellis && (out.trellis->q != sc.media.q || out.trellis->m_I != sc.channel.m_I)) {
    throw ConfigError("trained trellis has q = " + std::to_string(out.trellis->q) + ", m_I = " +
                      std::to_string(out.trellis->m_I) + " but the scenario needs q = " + std::to_string(sc.media.q) +
                      ", m_I = " + std::to_string(sc.channel.m_I));
  }
  return out;
}

DatasetDetections detect_dataset(const ExperimentConfig& cfg, const Scenario& sc, const TrainedDetectors& trained,
                                 const std::filesystem::path& dir) {
  const DatasetInfo info = read_dataset_info(dir);
  if (info.q != sc.media.q || info.samples_per_cycle != sc.spc) {
    throw ConfigError("dataset " + dir.string() + " was generated with q = " + std::to_string(info.q) +
                      ", samples_per_cycle = " + std::to_string(info.samples_per_cycle) +
                      " which does not match the config");
  }
  DatasetDetections out;
  out.truth = read_bits_csv(dir / "bits.csv");
  if (out.truth.size() < info.preamble_bits + info.postamble_bits) {
    throw IoError(dir.string() + ": bits.csv is shorter than preamble plus postamble");
  }
  out.payload_begin = info.preamble_bits;
  out.payload_end = out.truth.size() - info.postamble_bits;
  const Signal matched = io::read_indexed_csv(dir / "matched.csv");
  const Signal whitened = io::read_indexed_csv(dir / "whitened.csv");
  const std::size_t cycles = out.truth.size() * sc.media.q;
  if (matched.size() != cycles || whitened.size() != cycles) {
    throw IoError(dir.string() + ": trace length does not match bits.csv (expected " + std::to_string(cycles) +
                  " cycles)");
  }
  const std::size_t payload = out.payload_end - out.payload_begin;
  for (const auto& name : cfg.detectors) {
    BitSequence decided;
    if (name == "viterbi") {
      if (!trained.trellis) throw ConfigError("detector 'viterbi' has no trained trellis");
      const BranchMetric metric(*trained.trellis);
      const std::span<const std::uint8_t> preamble(out.truth.data(), info.preamble_bits);
      decided.assign(preamble.begin(), preamble.end());
      const ViterbiResult res = viterbi_detect(whitened, metric, preamble);
      decided.insert(decided.end(), res.bits.begin(), res.bits.end());
    } else {
      const auto it = trained.hit.find(name);
      if (it == trained.hit.end()) throw ConfigError("detector '" + name + "' has no trained parameters");
      const std::size_t trunc = first_truncated_cycle(cycles * sc.spc, sc.spc, it->second.gamma0.size());
      decided = decide_hits(matched, it->second, hit_statistic_from_name(name), trunc).bits;
    }
    std::size_t errors = 0;
    for (std::size_t i = out.payload_begin; i < out.payload_end; ++i) errors += decided[i] != out.truth[i];
    out.records.push_back(make_ber_record(sc.point.sweep_value, name, errors, payload));
    out.detectors.push_back(name);
    out.decided.push_back(std::move(decided));
  }
  return out;
}

void write_detections_csv(const std::filesystem::path& path, const DatasetDetections& det) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,truth";
  for (const auto& d : det.detectors) out << ',' << d;
  out << '\n';
  for (std::size_t i = 0; i < det.truth.size(); ++i) {
    out << i << ',' << int(det.truth[i]);
    for (const auto& bits : det.decided) out << ',' << (i < bits.size() ? int(bits[i]) : 0);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace probe
