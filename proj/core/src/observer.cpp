#include "probe/observer.hpp"

#include <cmath>

namespace probe {

void NoiseParams::validate() const {
  if (!(thermal_variance >= 0.0)) throw ConfigError("noise: thermal variance must be >= 0");
  if (!(measurement_variance > 0.0)) throw ConfigError("noise: measurement variance must be > 0");
}

namespace {

Mat2 riccati_step(const DiscreteStateSpace& dss, const Mat2& process, double r, const Mat2& p) {
  const double s = (dss.H * p * dss.H.transpose())(0, 0) + r;
  const Vec2 ph = p * dss.H.transpose();
  const Mat2 filtered = p - ph * ph.transpose() / s;
  Mat2 next = dss.F * filtered * dss.F.transpose() + process;
  return 0.5 * (next + next.transpose());
}

double spectral_radius(const Mat2& m) {
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double dare_residual(const DiscreteStateSpace& dss, const NoiseParams& noise, const Mat2& p) {
  const Mat2 process = dss.G * noise.thermal_variance * dss.G.transpose();
  const Mat2 diff = p - riccati_step(dss, process, noise.measurement_variance, p);
  const double scale = p.norm();
  return scale > 0.0 ? diff.norm() / scale : diff.norm();
}

ObserverModel design_kalman(const DiscreteStateSpace& dss, const NoiseParams& noise,
                            const DareOptions& options) {
  noise.validate();
  const Mat2 process = dss.G * noise.thermal_variance * dss.G.transpose();
  const double r = noise.measurement_variance;

  Mat2 p = Mat2::Zero();
  std::size_t it = 0;
  double step = 0.0;
  bool converged = false;
  for (; it < options.max_iterations; ++it) {
    const Mat2 next = riccati_step(dss, process, r, p);
    step = (next - p).norm();
    const double scale = next.norm();
    p = next;
    if (step <= options.tolerance * scale) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) {
    throw NumericalError("design_kalman: Riccati iteration did not converge in " +
                         std::to_string(options.max_iterations) +
                         " iterations (last step norm " + std::to_string(step) + ")");
  }

  ObserverModel obs;
  obs.error_covariance = p;
  obs.innovation_variance = (dss.H * p * dss.H.transpose())(0, 0) + r;
  obs.gain = dss.F * p * dss.H.transpose() / obs.innovation_variance;
  obs.iterations = it;
  obs.dare_residual = dare_residual(dss, noise, p);

  const Mat2 closed = dss.F - obs.gain * dss.H;
  const double rho = spectral_radius(closed);
  if (!(rho < 1.0)) {
    throw NumericalError("design_kalman: observer error dynamics are not stable (spectral radius " +
                         std::to_string(rho) + ")");
  }
  // Long enough for the envelope to fall by 1e-6, plus one oscillation of slack.
  const double decay = std::log(1e-6) / std::log(std::max(rho, 1e-300));
  const std::size_t length = std::min<std::size_t>(
      static_cast<std::size_t>(std::ceil(decay)) + 64, std::size_t{2'000'000});
  obs.gamma = innovation_profile(obs, dss, length);
  obs.effective_length = effective_length(obs.gamma, kDefaultProfileTolerance);
  return obs;
}

Signal innovation_profile(const ObserverModel& obs, const DiscreteStateSpace& dss, std::size_t length) {
  const Mat2 closed = dss.F - obs.gain * dss.H;
  Signal out(length);
  Vec2 x(0.0, 1.0);
  for (std::size_t k = 0; k < length; ++k) {
    out[k] = (dss.H * x)(0);
    x = closed * x;
  }
  return out;
}

Signal run_observer(const DiscreteStateSpace& dss, const ObserverModel& obs, std::span<const double> y,
                    std::span<const double> g, const Vec2& initial_estimate) {
  if (y.size() != g.size()) {
    throw ConfigError("run_observer: measurement and dither traces differ in length (" +
                      std::to_string(y.size()) + " vs " + std::to_string(g.size()) + ")");
  }
  Signal e(y.size());
  Vec2 xhat = initial_estimate;
  for (std::size_t k = 0; k < y.size(); ++k) {
    e[k] = y[k] - (dss.H * xhat)(0);
    xhat = dss.F * xhat + dss.G * g[k] + obs.gain * e[k];
  }
  return e;
}

std::size_t effective_length(std::span<const double> gamma, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("effective_length: tol must be in (0, 1)");
  double peak = 0.0;
  for (double v : gamma) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0;
  const double limit = tol * peak;
  std::size_t n = gamma.size();
  while (n > 0 && std::abs(gamma[n - 1]) <= limit) --n;
  return n;
}

}  // namespace probe
