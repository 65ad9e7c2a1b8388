#pragma once

#include <complex>
#include <filesystem>
#include <span>

#include "probe/common.hpp"

namespace probe {

/// First-mode cantilever description. Lengths are in nm, frequencies in Hz.
struct CantileverParams {
  double f0_hz = 63150.0;
  double quality = 206.0;
  /// Free-air oscillation amplitude produced by the dither drive (nm).
  double dither_amplitude_nm = 24.0;
  double dither_freq_hz = 63150.0;
  double sample_rate_hz = 32.0 * 63150.0;

  double omega0() const;
  double cycle_period() const { return 1.0 / f0_hz; }
  double sample_period() const { return 1.0 / sample_rate_hz; }
  void validate() const;
};

/// x' = A x + B f, y = C x with state x = [p, dp/dt].
struct ContinuousStateSpace {
  Mat2 A = Mat2::Zero();
  Vec2 B = Vec2::Zero();
  RowVec2 C = RowVec2::Zero();
};

/// x[k+1] = F x[k] + G f[k], y[k] = H x[k], sampled every `sample_period` seconds.
struct DiscreteStateSpace {
  Mat2 F = Mat2::Identity();
  Vec2 G = Vec2::Zero();
  RowVec2 H = RowVec2::Zero();
  double sample_period = 0.0;
};

ContinuousStateSpace build_continuous(const CantileverParams& params);

/// Observable-canonical realization of (b1 s + b0) / (s^2 + a1 s + a0). Its B is
/// not [0, 1]^T in general; feed it through to_controllable_canonical.
ContinuousStateSpace from_transfer_function(double b1, double b0, double a1, double a0);

/// Similarity transform to controllable canonical form (B = [0, 1]^T exactly).
/// Throws NumericalError("uncontrollable ...") when rcond([B, AB]) < 1e-10.
ContinuousStateSpace to_controllable_canonical(const ContinuousStateSpace& ss);

/// Zero-order-hold discretization.
DiscreteStateSpace discretize_zoh(const ContinuousStateSpace& ss, double sample_period);

/// C (i omega I - A)^-1 B.
std::complex<double> frequency_response(const ContinuousStateSpace& ss, double omega);

struct SecondOrderFit {
  CantileverParams params;
  /// Numerator gain K of K / (s^2 + (w0/Q) s + w0^2).
  double gain = 1.0;
  /// Root-sum-square of the log-magnitude and phase residuals.
  double residual_norm = 0.0;
};

/// Least-squares fit of K / (s^2 + (w0/Q) s + w0^2) to a measured complex response,
/// using log-magnitude and wrapped-phase residuals. Coarse (f0, Q) grid followed by
/// Levenberg-Marquardt refinement; K is profiled out in closed form.
SecondOrderFit fit_second_order(std::span<const double> omegas,
                                std::span<const std::complex<double>> gains);

/// Frequency sweep table as read from `freq_hz,mag,phase_rad` CSV files.
struct FrequencySweep {
  std::vector<double> freq_hz;
  std::vector<double> magnitude;
  std::vector<double> phase_rad;

  std::vector<double> omegas() const;
  std::vector<std::complex<double>> gains() const;
};

FrequencySweep read_sweep_csv(const std::filesystem::path& path);
void write_sweep_csv(const std::filesystem::path& path, const FrequencySweep& sweep);

}  // namespace probe
