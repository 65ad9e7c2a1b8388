#include "probe/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/Polynomials>

#include "probe/linalg.hpp"
#include "probe/observer.hpp"

namespace probe {

Signal matched_filter(std::span<const double> e, std::span<const double> gamma, std::size_t samples_per_cycle) {
  if (samples_per_cycle == 0) throw ConfigError("matched_filter: samples_per_cycle must be >= 1");
  if (e.size() % samples_per_cycle != 0) {
    throw ConfigError("matched_filter: trace of " + std::to_string(e.size()) +
                      " samples is not a whole number of " + std::to_string(samples_per_cycle) +
                      "-sample cycles");
  }
  const std::size_t cycles = e.size() / samples_per_cycle;
  Signal out(cycles);
  for (std::size_t k = 0; k < cycles; ++k) {
    const std::size_t start = k * samples_per_cycle;
    const std::size_t len = std::min(gamma.size(), e.size() - start);
    const double* x = e.data() + start;
    double acc = 0.0;
    for (std::size_t t = 0; t < len; ++t) acc += x[t] * gamma[t];
    out[k] = acc;
  }
  return out;
}

Signal autocorrelation(std::span<const double> gamma, std::size_t samples_per_cycle, std::size_t J) {
  if (samples_per_cycle == 0) throw ConfigError("autocorrelation: samples_per_cycle must be >= 1");
  Signal r(J + 1, 0.0);
  for (std::size_t j = 0; j <= J; ++j) {
    const std::size_t lag = j * samples_per_cycle;
    if (lag >= gamma.size()) break;
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < gamma.size(); ++t) acc += gamma[t] * gamma[t + lag];
    r[j] = acc;
  }
  return r;
}

namespace {

// sum_j h[j] h[j+k] for k = 0..J.
Eigen::VectorXd lag_products(const Eigen::VectorXd& h) {
  const Eigen::Index n = h.size();
  Eigen::VectorXd c(n);
  for (Eigen::Index k = 0; k < n; ++k) c(k) = h.head(n - k).dot(h.tail(n - k));
  return c;
}

void check_psd_sequence(const Eigen::VectorXd& r) {
  const Eigen::Index n = r.size();
  const double tol = 1e-10 * r(0);
  const std::vector<double> rv(r.data(), r.data() + n);
  const Eigen::MatrixXd t = linalg::toeplitz(rv, static_cast<std::size_t>(n));
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
  if (min_eig < -tol) {
    throw NumericalError("spectral_factorize: autocorrelation is indefinite, Toeplitz eigenvalue " +
                         std::to_string(min_eig));
  }
  const Eigen::Index grid = 16 * n + 64;
  for (Eigen::Index g = 0; g <= grid; ++g) {
    const double w = std::numbers::pi * static_cast<double>(g) / static_cast<double>(grid);
    double s = r(0);
    for (Eigen::Index j = 1; j < n; ++j) s += 2.0 * r(j) * std::cos(w * static_cast<double>(j));
    if (s < -tol) {
      throw NumericalError("spectral_factorize: autocorrelation is indefinite, spectral density " +
                           std::to_string(s) + " at omega = " + std::to_string(w));
    }
  }
}

// Factor from the J inner roots of z^J S(z).
Eigen::VectorXd factor_from_roots(const Eigen::VectorXd& r) {
  const Eigen::Index J = r.size() - 1;
  Eigen::VectorXd coeffs(2 * J + 1);
  for (Eigen::Index i = 0; i <= 2 * J; ++i) coeffs(i) = r(std::abs(i - J));
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
  solver.compute(coeffs);
  using cd = std::complex<double>;
  std::vector<cd> roots(solver.roots().data(), solver.roots().data() + solver.roots().size());
  std::sort(roots.begin(), roots.end(), [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });
  // Monic product prod (z - rho_i), highest power first.
  std::vector<cd> p{cd(1.0)};
  for (Eigen::Index i = 0; i < J; ++i) {
    std::vector<cd> next(p.size() + 1, cd(0.0));
    for (std::size_t k = 0; k < p.size(); ++k) {
      next[k] += p[k];
      next[k + 1] -= p[k] * roots[static_cast<std::size_t>(i)];
    }
    p = std::move(next);
  }
  Eigen::VectorXd h(J + 1);
  for (Eigen::Index j = 0; j <= J; ++j) h(j) = p[static_cast<std::size_t>(j)].real();
  h *= std::sqrt(r(0) / h.squaredNorm());
  return h;
}

// Wilson's Newton iteration on h * reverse(h) = R. When `monotone`, steps are kept
// only while they reduce the residual; otherwise the iteration runs free, which
// converges from any minimum-phase start.
Eigen::VectorXd wilson_polish(Eigen::VectorXd h, const Eigen::VectorXd& r, bool monotone) {
  const Eigen::Index n = h.size();
  double res = (lag_products(h) - r).norm();
  Eigen::VectorXd best = h;
  double best_res = res;
  for (int it = 0; it < 200 && best_res > 1e-15 * r(0); ++it) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      for (Eigen::Index j = 0; j + k < n; ++j) {
        a(k, j + k) += h(j);
        a(k, j) += h(j + k);
      }
    }
    const Eigen::VectorXd rhs = r + lag_products(h);
    const Eigen::VectorXd next = a.fullPivLu().solve(rhs);
    if (!next.allFinite()) break;
    const double next_res = (lag_products(next) - r).norm();
    if (monotone && !(next_res < res)) break;
    h = next;
    res = next_res;
    if (res < best_res) {
      best = h;
      best_res = res;
    }
  }
  return best;
}

double max_lag_residual(const Eigen::VectorXd& h, const Eigen::VectorXd& r) {
  return (lag_products(h) - r).cwiseAbs().maxCoeff();
}

}  // namespace

Signal spectral_factorize(std::span<const double> R) {
  if (R.empty()) throw ConfigError("spectral_factorize: empty autocorrelation");
  if (!(R[0] > 0.0)) throw NumericalError("spectral_factorize: R[0] must be positive");
  std::size_t last = R.size() - 1;
  while (last > 0 && R[last] == 0.0) --last;
  const Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(R.data(), static_cast<Eigen::Index>(last + 1));
  check_psd_sequence(r);

  Eigen::VectorXd h;
  if (last == 0) {
    h = Eigen::VectorXd::Constant(1, std::sqrt(r(0)));
  } else {
    h = factor_from_roots(r);
    if (!h.allFinite()) {
      h = Eigen::VectorXd::Zero(r.size());
      h(0) = std::sqrt(r(0));
    }
    h = wilson_polish(h, r, true);
    if (!(max_lag_residual(h, r) <= 1e-8 * r(0))) {
      // Root selection degrades for long, nearly-white sequences; restart from the
      // single-tap minimum-phase guess.
      Eigen::VectorXd start = Eigen::VectorXd::Zero(r.size());
      start(0) = std::sqrt(r(0));
      const Eigen::VectorXd alt = wilson_polish(start, r, false);
      if (max_lag_residual(alt, r) < max_lag_residual(h, r)) h = alt;
    }
  }
  if (h(0) < 0.0) h = -h;
  const double res = max_lag_residual(h, r);
  if (!(res <= 1e-8 * r(0))) {
    throw NumericalError("spectral_factorize: factorization residual " + std::to_string(res / r(0)) +
                         " (relative) exceeds 1e-8");
  }
  Signal out(R.size(), 0.0);
  for (Eigen::Index j = 0; j < h.size(); ++j) out[static_cast<std::size_t>(j)] = h(j);
  return out;
}

double max_zero_modulus(std::span<const double> h) {
  if (h.empty() || h[0] == 0.0) throw NumericalError("max_zero_modulus: leading tap must be nonzero");
  std::size_t last = h.size() - 1;
  while (last > 0 && h[last] == 0.0) --last;
  if (last == 0) return 0.0;
  Eigen::VectorXd coeffs(static_cast<Eigen::Index>(last + 1));
  for (std::size_t i = 0; i <= last; ++i) coeffs(static_cast<Eigen::Index>(i)) = h[last - i];
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
  solver.compute(coeffs);
  return solver.roots().cwiseAbs().maxCoeff();
}

WhitenedChannel make_whitened_channel(std::span<const double> gamma, std::size_t samples_per_cycle, double V,
                                      std::size_t q, double tol) {
  if (gamma.empty()) throw ConfigError("make_whitened_channel: empty profile");
  if (samples_per_cycle == 0 || q == 0) throw ConfigError("make_whitened_channel: spc and q must be >= 1");
  if (!(V > 0.0)) throw ConfigError("make_whitened_channel: V must be positive");
  WhitenedChannel ch;
  const std::size_t J = (gamma.size() - 1) / samples_per_cycle;
  ch.R = autocorrelation(gamma, samples_per_cycle, J);
  ch.h = spectral_factorize(ch.R);
  ch.V = V;
  ch.q = q;
  const std::size_t len = effective_length(ch.h, tol);
  ch.I = len > 0 ? len - 1 : 0;
  ch.m_I = (ch.I + q - 1) / q;
  ch.zero_modulus = max_zero_modulus(ch.h);
  return ch;
}

Signal whiten(std::span<const double> z_prime, const WhitenedChannel& channel) {
  const auto& h = channel.h;
  if (h.empty() || !(h[0] > 0.0)) throw NumericalError("whiten: factor has no positive leading tap");
  if (!(channel.zero_modulus < 1.0 - 1e-9)) {
    throw NumericalError("whiten: non-invertible factor, zero at modulus " + std::to_string(channel.zero_modulus) +
                         "; regularize R[0] by (1 + 1e-9)");
  }
  const std::size_t n = z_prime.size();
  const std::size_t taps = h.size();
  Signal z(n, 0.0);
  const double inv = 1.0 / h[0];
  for (std::size_t k = n; k-- > 0;) {
    double acc = z_prime[k];
    const std::size_t lim = std::min(taps, n - k);
    for (std::size_t j = 1; j < lim; ++j) acc -= h[j] * z[k + j];
    z[k] = acc * inv;
  }
  return z;
}

Signal whiten_cholesky(std::span<const double> z_prime, std::span<const double> R) {
  const std::size_t n = z_prime.size();
  if (n == 0) return {};
  if (n > 4096) throw ConfigError("whiten_cholesky: intended for short traces (<= 4096 cycles)");
  const Eigen::MatrixXd t = linalg::toeplitz(R, n);
  const Eigen::MatrixXd l = linalg::cholesky_lower(t, "whiten_cholesky: Toeplitz autocorrelation");
  // U = J L J with J the exchange matrix; U z = z' becomes L (J z) = J z'.
  Eigen::VectorXd rev(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) rev(static_cast<Eigen::Index>(i)) = z_prime[n - 1 - i];
  l.triangularView<Eigen::Lower>().solveInPlace(rev);
  Signal z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = rev(static_cast<Eigen::Index>(n - 1 - i));
  return z;
}

Signal convolve_causal(std::span<const double> nu, std::span<const double> h) {
  Signal y(nu.size(), 0.0);
  for (std::size_t k = 0; k < nu.size(); ++k) {
    if (nu[k] == 0.0) continue;
    const std::size_t lim = std::min(h.size(), nu.size() - k);
    for (std::size_t j = 0; j < lim; ++j) y[k + j] += nu[k] * h[j];
  }
  return y;
}

}  // namespace probe
