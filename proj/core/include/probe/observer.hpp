#pragma once

#include <span>

#include "probe/dynamics.hpp"

namespace probe {

/// Thermal noise enters as a scalar force added to the dither input, so the
/// process covariance is G * thermal_variance * G^T. Both variances are per
/// sample of the discrete model.
struct NoiseParams {
  double thermal_variance = 0.0;
  double measurement_variance = 1e-3;

  void validate() const;
};

struct DareOptions {
  /// Stop when ||P[n+1] - P[n]||_F <= tolerance * ||P[n+1]||_F.
  double tolerance = 1e-12;
  std::size_t max_iterations = 1'000'000;
};

/// Steady-state Kalman predictor and its innovation channel.
struct ObserverModel {
  Vec2 gain = Vec2::Zero();                   ///< L_K, predictor form
  double innovation_variance = 0.0;           ///< V = H P H^T + R
  Mat2 error_covariance = Mat2::Zero();       ///< a-priori steady-state P
  Signal gamma;                               ///< response to a unit jump of dp/dt, decayed to 1e-6
  std::size_t effective_length = 0;           ///< samples, at tolerance 1e-3
  std::size_t iterations = 0;
  double dare_residual = 0.0;                 ///< relative Frobenius residual at the solution
};

inline constexpr double kDefaultProfileTolerance = 1e-3;

/// Solves the filtering DARE by fixed-point iteration from P = 0.
ObserverModel design_kalman(const DiscreteStateSpace& dss, const NoiseParams& noise,
                            const DareOptions& options = {});

/// Relative residual ||P - F (P - P H^T (H P H^T + R)^-1 H P) F^T - G q G^T|| / ||P||
/// (absolute when P = 0).
double dare_residual(const DiscreteStateSpace& dss, const NoiseParams& noise, const Mat2& p);

/// gamma[k] = H (F - L_K H)^k u with u = [0, 1]^T.
Signal innovation_profile(const ObserverModel& obs, const DiscreteStateSpace& dss, std::size_t length);

/// Runs the predictor on a measurement trace y with known dither input g and
/// returns the innovation e[k] = y[k] - H xhat[k].
Signal run_observer(const DiscreteStateSpace& dss, const ObserverModel& obs, std::span<const double> y,
                    std::span<const double> g, const Vec2& initial_estimate = Vec2::Zero());

/// Smallest I with max_{k >= I} |gamma[k]| <= tol * max_k |gamma[k]|; 0 for an all-zero profile.
std::size_t effective_length(std::span<const double> gamma, double tol = kDefaultProfileTolerance);

}  // namespace probe
