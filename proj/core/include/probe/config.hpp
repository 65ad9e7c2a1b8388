#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "probe/common.hpp"

namespace probe {

enum class ImpactSource { synthetic, calibrated, physical, file };
enum class SweepVariable { none, snr_db, q, bit_width_us };

const char* to_string(ImpactSource s);
const char* to_string(SweepVariable v);

/// One experiment, read from a plain-text file of [section] blocks with
/// `key = value` lines ('#' or ';' start a comment). Unknown sections or keys
/// are errors reported with their line number.
///
/// Noise variances are given in model units: the thermal variance multiplies
/// (thermal_force_scale * w0^2 / Q)^2 to become a per-sample force variance and
/// the measurement variance is in nm^2. SNR fixes the nominal interaction depth
/// delta = 10^(snr/10) (thermal + measurement) nm; the media height is
/// separation - dither_amplitude + delta.
struct ExperimentConfig {
  // [cantilever]
  double f0_hz = 63150.0;
  double quality = 206.0;
  double dither_amplitude_nm = 24.0;
  std::size_t samples_per_cycle = 32;
  // [noise]
  double thermal_variance = 0.1;
  double measurement_variance = 0.001;
  double thermal_force_scale = 2.0;
  // [media]
  std::size_t q = 13;
  double separation_nm = 28.0;
  double restitution = 0.9;
  double snr_db = 10.4;
  double p_one = 0.5;
  // [impact]
  ImpactSource source = ImpactSource::calibrated;
  unsigned memory = 1;
  std::filesystem::path model_file;
  std::size_t calibration_bits = 20000;
  // [detect]
  std::vector<std::string> detectors{"viterbi", "lmp", "glrt", "bayes"};
  unsigned trellis_memory = 1;
  double profile_tolerance = 1e-3;
  double shrink = 1e-3;
  std::size_t training_bits = 20000;
  // [sweep]
  SweepVariable variable = SweepVariable::none;
  std::vector<double> values;
  std::size_t bits_per_point = 100000;
  std::size_t block_bits = 5000;
  // [run]
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::filesystem::path out = "results";
  std::size_t dataset_bits = 2000;

  std::vector<std::string> warnings;

  /// Throws ConfigError on inconsistent values; appends soft issues to `warnings`.
  void validate();
  bool wants(std::string_view detector) const;
};

ExperimentConfig parse_config(std::string_view text, const std::string& origin = "<config>");
/// Relative file paths inside the config are resolved against the config's directory.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const ExperimentConfig& cfg);

/// Comma-separated detector list, validated against viterbi, lmp, glrt, bayes.
std::vector<std::string> parse_detector_list(std::string_view text);

}  // namespace probe
