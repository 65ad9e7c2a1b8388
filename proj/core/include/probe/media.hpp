#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "probe/dynamics.hpp"
#include "probe/observer.hpp"

namespace probe {

using BitSequence = std::vector<std::uint8_t>;

/// A high bit holds the media surface up for exactly q cantilever cycles.
struct MediaProfile {
  std::size_t q = 13;
  double height_nm = 0.0;
  double cycle_period_s = 1.0 / 63150.0;

  double bit_width_s() const { return static_cast<double>(q) * cycle_period_s; }
  void validate() const;
};

/// Impact magnitudes of bit i depend on the context (a_i, a_{i-1}, ..., a_{i-m}).
/// Context index: bit j of the index holds a_{i-j}, so a_i is the LSB.
struct ImpactModel {
  unsigned m = 1;
  std::size_t q = 13;
  std::vector<Eigen::VectorXd> mean_table;  ///< 2^(m+1) entries of length q
  Eigen::MatrixXd impact_cov;               ///< q x q, symmetric PSD

  std::size_t context_count() const { return std::size_t{1} << (m + 1); }
  void validate() const;
};

/// Context index of bit i (missing history before the sequence start reads as 0).
std::size_t context_index(std::span<const std::uint8_t> bits, std::size_t i, unsigned m);

/// "a_{i-m} ... a_i" with the oldest bit first.
std::string context_label(std::size_t context, unsigned m);

/// One magnitude per cantilever cycle (N q entries); `hit_times` lists the cycles with a nonzero entry.
struct ImpactTrace {
  Signal nu;
  std::vector<std::size_t> hit_times;
};

BitSequence generate_bits(std::size_t n, std::uint64_t seed, double p_one = 0.5);

/// The default model used when no calibration exists: the first '1' after a '0'
/// ramps linearly from nu_nom to 0.6 nu_nom across its q hits, a sustained '1'
/// sits at 0.6 nu_nom, and impact_cov = (0.1 nu_nom)^2 I. With m = 0 every '1'
/// uses the ramp.
ImpactModel synthetic_impact_model(unsigned m, std::size_t q, double nu_nom);

/// Draws nu_i = table[context] + b_i with b_i ~ N(0, impact_cov); zero bits get exactly zero.
/// The first m bits must be zero (the known preamble supplies the missing context).
ImpactTrace impacts_statistical(std::span<const std::uint8_t> bits, const ImpactModel& model,
                                std::uint64_t seed);

struct PhysicalSetup {
  double separation_nm = 28.0;
  double restitution = 0.9;
  /// Sample index inside each cycle at which the free oscillation reaches its lowest point.
  std::size_t trough_sample = 2;
};

struct PhysicalRun {
  ImpactTrace impacts;
  std::vector<std::size_t> hit_samples;  ///< sample index of the recorded contact per hit
  Signal deflection;                     ///< measured y[k] including sensor noise
  Signal dither;                         ///< forcing g[k] fed to the model
  Vec2 initial_state = Vec2::Zero();
  double free_amplitude_nm = 0.0;
  std::vector<std::string> warnings;
};

/// Dither forcing amplitude and phase producing a steady free oscillation of
/// params.dither_amplitude_nm whose trough falls on `trough_sample` of every cycle.
struct DitherDrive {
  double amplitude = 0.0;
  double phase = 0.0;
  double omega = 0.0;
  Vec2 initial_state = Vec2::Zero();
  double forcing(std::size_t k, double sample_period) const;
};
DitherDrive design_dither(const DiscreteStateSpace& dss, const CantileverParams& params,
                          std::size_t trough_sample);

/// Impulsive-contact simulation of the dithered cantilever over a media track.
/// Contact (p below the surface while moving down) resets dp/dt to -r dp/dt and
/// records nu = (1 + r)|dp/dt| on that cycle; later contacts in the same cycle are
/// added to the same entry.
PhysicalRun impacts_physical(std::span<const std::uint8_t> bits, const DiscreteStateSpace& dss,
                             const CantileverParams& params, const MediaProfile& profile,
                             const PhysicalSetup& setup, const NoiseParams& noise, std::uint64_t seed);

/// e = sum_j nu_j shift(gamma, j spc) + n, n ~ N(0, V) i.i.d.; V = 0 gives the noiseless response.
Signal synthesize_innovation(const ImpactTrace& impacts, std::span<const double> gamma, double V,
                             std::size_t samples_per_cycle, std::uint64_t seed);

/// Per-context sample means and covariance pooled over contexts whose current bit is 1.
/// Bits before index m are skipped. Every context needs `min_count` occurrences.
ImpactModel calibrate_impact_model(std::span<const std::uint8_t> bits, const ImpactTrace& impacts,
                                   unsigned m, std::size_t q, std::size_t min_count = 30);

void write_bits_csv(const std::filesystem::path& path, std::span<const std::uint8_t> bits);
BitSequence read_bits_csv(const std::filesystem::path& path);
void write_impacts_csv(const std::filesystem::path& path, const ImpactTrace& impacts);

/// Plain-text impact model: header line, then one row per context, then the covariance rows.
void write_impact_model(const std::filesystem::path& path, const ImpactModel& model);
ImpactModel read_impact_model(const std::filesystem::path& path);

}  // namespace probe
