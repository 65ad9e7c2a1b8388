#pragma once

#include <span>

#include "probe/common.hpp"

namespace probe {

/// Cycle-rate correlator outputs z'[k] = sum_t e[t] gamma[t - k spc].
///
/// The sum carries unit weight per sample (no T_s factor), so for white
/// innovation noise of per-sample variance V the output covariance is exactly
/// V R[k - k'] with R from autocorrelation().
Signal matched_filter(std::span<const double> e, std::span<const double> gamma, std::size_t samples_per_cycle);

/// R[j] = sum_t gamma[t] gamma[t + j spc] for j = 0..J (zero beyond the profile).
Signal autocorrelation(std::span<const double> gamma, std::size_t samples_per_cycle, std::size_t J);

/// Minimum-phase h[0..J] with sum_j h[j] h[j+k] = R[k] and h[0] > 0.
/// Roots of the symmetrized lag polynomial seed the factor; Wilson's Newton
/// iteration polishes it. Throws NumericalError naming the offending value when R
/// is not a positive-semidefinite sequence.
Signal spectral_factorize(std::span<const double> R);

/// Largest root modulus of h[0] z^J + h[1] z^(J-1) + ... + h[J]; < 1 means the
/// anticausal inverse is stable.
double max_zero_modulus(std::span<const double> h);

struct WhitenedChannel {
  Signal h;     ///< h[0..J]
  Signal R;     ///< R[0..J]
  double V = 0.0;
  std::size_t I = 0;    ///< ISI length in cycles: last significant tap index
  std::size_t m_I = 0;  ///< ceil(I / q)
  std::size_t q = 1;
  double zero_modulus = 0.0;
};

/// Builds R and h from the (already truncated) profile used by the matched filter.
/// I is the index of the last tap above tol * max |h|.
WhitenedChannel make_whitened_channel(std::span<const double> gamma, std::size_t samples_per_cycle, double V,
                                      std::size_t q, double tol = 1e-3);

/// z[k] = (z'[k] - sum_{j>=1} h[j] z[k+j]) / h[0], run backwards with zeros past the end.
/// Output: z = h * nu + white noise of variance V.
Signal whiten(std::span<const double> z_prime, const WhitenedChannel& channel);

/// Finite-window alternative: z = U^-1 z' with R_N = U U^T, U upper triangular
/// (R_N the N x N Toeplitz matrix of R). Away from the trace end it agrees with whiten().
Signal whiten_cholesky(std::span<const double> z_prime, std::span<const double> R);

/// Full convolution truncated to the length of nu: y[k] = sum_j h[j] nu[k-j].
Signal convolve_causal(std::span<const double> nu, std::span<const double> h);

}  // namespace probe
