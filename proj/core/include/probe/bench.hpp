#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "probe/config.hpp"
#include "probe/detect.hpp"
#include "probe/dynamics.hpp"
#include "probe/frontend.hpp"
#include "probe/media.hpp"
#include "probe/observer.hpp"

namespace probe {

struct OperatingPoint {
  double sweep_value = 0.0;
  double snr_db = 10.4;
  std::size_t q = 13;
};

std::vector<OperatingPoint> sweep_grid(const ExperimentConfig& cfg);

/// Everything derived from the config at one operating point.
struct Scenario {
  OperatingPoint point;
  CantileverParams params;
  DiscreteStateSpace dss;
  NoiseParams noise;  ///< per-sample model units
  ObserverModel observer;
  Signal profile;     ///< gamma truncated to its effective length; matched filter and hit windows
  WhitenedChannel channel;
  MediaProfile media;
  PhysicalSetup setup;
  std::size_t spc = 32;
  double delta_nm = 0.0;  ///< nominal interaction depth
  double nu_nom = 0.0;    ///< nominal impact (nm/s)
};

Scenario build_scenario(const ExperimentConfig& cfg, const OperatingPoint& point);

/// Zero preamble, payload and zero postamble of one simulated block.
struct BlockLayout {
  std::size_t preamble = 0;
  std::size_t payload = 0;
  std::size_t postamble = 0;
  std::size_t total() const { return preamble + payload + postamble; }
};

BlockLayout block_layout(const Scenario& sc, const ExperimentConfig& cfg, std::size_t payload);

struct ImpactSourceModel {
  ImpactSource kind = ImpactSource::synthetic;
  ImpactModel model;          ///< statistical sources
  std::size_t hit_phase = 0;  ///< physical source: typical contact sample inside a cycle
};

/// Synthetic table, model file, or a physical calibration run (seeded from `seed`).
ImpactSourceModel prepare_impact_source(const ExperimentConfig& cfg, const Scenario& sc, std::uint64_t seed);

struct BlockSignals {
  BitSequence bits;
  ImpactTrace impacts;
  Signal innovation;
  Signal matched;
  Signal whitened;
};

/// bits -> impacts -> innovation -> matched filter -> whitener.
BlockSignals simulate_block(const Scenario& sc, const ImpactSourceModel& src, const BitSequence& bits,
                            std::uint64_t seed);

/// Fresh block bits: zero preamble and postamble around Bernoulli(p_one) payload bits.
BitSequence block_bits(const BlockLayout& layout, double p_one, std::uint64_t seed);

struct TrainedDetectors {
  std::optional<TrellisStats> trellis;
  std::map<std::string, HitDetectorParams> hit;  ///< keyed by detector name
  std::map<std::string, double> training_ber;
};

TrainedDetectors train_detectors(const ExperimentConfig& cfg, const Scenario& sc, const ImpactSourceModel& src,
                                 std::uint64_t seed);

HitStatistic hit_statistic_from_name(const std::string& name);

/// trellis.bin (when present) and hit_detectors.ini in `dir`.
void save_trained(const std::filesystem::path& dir, const TrainedDetectors& trained);
/// Reloads what save_trained wrote for the detectors named in cfg; the hit
/// profiles are rebuilt from the scenario. Throws ConfigError for a requested
/// detector with no saved parameters.
TrainedDetectors load_trained(const std::filesystem::path& dir, const ExperimentConfig& cfg, const Scenario& sc);

struct BerRecord {
  double sweep_value = 0.0;
  std::string detector;
  std::size_t errors = 0;
  std::size_t bits = 0;
  double ber = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// 95% normal-approximation interval with a 0.5/n continuity guard, clipped to [0, 1];
/// zero errors give [0, 3/n].
BerRecord make_ber_record(double sweep_value, const std::string& detector, std::size_t errors, std::size_t bits);

struct PointSummary {
  OperatingPoint point;
  std::size_t isi_cycles = 0;
  std::size_t m_I = 0;
  std::size_t profile_samples = 0;
  double V = 0.0;
  double nu_nom = 0.0;
  std::map<std::string, double> thresholds;
  std::map<std::string, double> training_ber;
};

struct SweepResult {
  std::vector<BerRecord> records;
  std::vector<PointSummary> points;
};

/// Monte Carlo BER at every grid point; deterministic for a fixed config and seed
/// regardless of the thread count.
SweepResult run_ber_sweep(const ExperimentConfig& cfg);

void write_ber_csv(const std::filesystem::path& path, const std::vector<BerRecord>& records);
std::vector<BerRecord> read_ber_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const std::vector<PointSummary>& points);

/// Per-detector table sorted by sweep value. Zero-error points read "< 3/n"; points
/// whose interval spans more than a decade are marked with '*'.
std::string report(const std::vector<BerRecord>& records);
/// Wide plot-ready table: sweep_var, then <detector>_ber, <detector>_ci_low, <detector>_ci_high.
void write_report_csv(const std::filesystem::path& path, const std::vector<BerRecord>& records);

/// Writes one block of reproducible traces and labels at the first grid point:
/// bits.csv, impacts.csv, innovation.bin, matched.csv, whitened.csv, profile.csv,
/// channel.csv, dataset.ini and, for statistical sources, impact_model.txt.
void generate_dataset(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct DatasetInfo {
  std::size_t preamble_bits = 0;
  std::size_t postamble_bits = 0;
  std::size_t q = 0;
  std::size_t samples_per_cycle = 0;
};
DatasetInfo read_dataset_info(const std::filesystem::path& dir);

struct DatasetDetections {
  BitSequence truth;
  std::size_t payload_begin = 0;
  std::size_t payload_end = 0;
  std::vector<std::string> detectors;
  std::vector<BitSequence> decided;  ///< parallel to detectors, full length
  std::vector<BerRecord> records;
};

/// Runs the configured detectors on a dataset written by generate_dataset.
/// Errors are counted on the payload bits only.
DatasetDetections detect_dataset(const ExperimentConfig& cfg, const Scenario& sc, const TrainedDetectors& trained,
                                 const std::filesystem::path& dir);
/// index,truth,<detector>... for every bit of the dataset.
void write_detections_csv(const std::filesystem::path& path, const DatasetDetections& det);

}  // namespace probe
