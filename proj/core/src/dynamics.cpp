#include "probe/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "probe/io.hpp"
#include "probe/linalg.hpp"

namespace probe {

double CantileverParams::omega0() const { return 2.0 * std::numbers::pi * f0_hz; }

void CantileverParams::validate() const {
  if (!(f0_hz > 0.0) || !std::isfinite(f0_hz)) throw ConfigError("cantilever: f0 must be positive");
  if (!(quality > 0.0) || !std::isfinite(quality)) {
    throw ConfigError("cantilever: quality factor must be positive and finite");
  }
  if (!(sample_rate_hz > 2.0 * f0_hz)) {
    throw ConfigError("cantilever: sample rate must exceed twice the resonant frequency");
  }
  if (!(dither_amplitude_nm >= 0.0)) throw ConfigError("cantilever: dither amplitude must be >= 0");
  if (!(dither_freq_hz >= 0.0)) throw ConfigError("cantilever: dither frequency must be >= 0");
}

ContinuousStateSpace build_continuous(const CantileverParams& params) {
  if (!(params.f0_hz > 0.0)) throw ConfigError("build_continuous: f0 must be positive");
  if (!(params.quality > 0.0) || !std::isfinite(params.quality)) {
    throw ConfigError("build_continuous: quality factor must be positive and finite");
  }
  const double w0 = params.omega0();
  ContinuousStateSpace ss;
  ss.A << 0.0, 1.0, -w0 * w0, -w0 / params.quality;
  ss.B << 0.0, 1.0;
  ss.C << 1.0, 0.0;
  return ss;
}

ContinuousStateSpace from_transfer_function(double b1, double b0, double a1, double a0) {
  ContinuousStateSpace ss;
  ss.A << -a1, 1.0, -a0, 0.0;
  ss.B << b1, b0;
  ss.C << 1.0, 0.0;
  return ss;
}

ContinuousStateSpace to_controllable_canonical(const ContinuousStateSpace& ss) {
  Mat2 w;
  w.col(0) = ss.B;
  w.col(1) = ss.A * ss.B;
  // Row scaling is a change of state units and column scaling leaves the rank
  // alone, so equilibrate before judging the conditioning.
  Mat2 eq = w;
  for (int r = 0; r < 2; ++r) {
    const double s = eq.row(r).cwiseAbs().maxCoeff();
    if (s > 0.0) eq.row(r) /= s;
  }
  for (int c = 0; c < 2; ++c) {
    const double s = eq.col(c).cwiseAbs().maxCoeff();
    if (s > 0.0) eq.col(c) /= s;
  }
  const double rc = linalg::rcond(eq);
  if (rc < 1e-10) {
    throw NumericalError("uncontrollable (A, B): reciprocal condition number of [B, AB] is " +
                         std::to_string(rc) + " after equilibration");
  }
  // Characteristic polynomial s^2 + a1 s + a0.
  const double a1 = -ss.A.trace();
  const double a0 = ss.A.determinant();

  ContinuousStateSpace out;
  out.A << 0.0, 1.0, -a0, -a1;
  out.B << 0.0, 1.0;
  Mat2 wc;
  wc.col(0) = out.B;
  wc.col(1) = out.A * out.B;
  // x = T x_c with T = W Wc^-1.
  const Mat2 t = w * wc.inverse();
  out.C = ss.C * t;
  return out;
}

DiscreteStateSpace discretize_zoh(const ContinuousStateSpace& ss, double sample_period) {
  if (!(sample_period > 0.0)) throw ConfigError("discretize_zoh: sample period must be positive");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m.topLeftCorner<2, 2>() = ss.A * sample_period;
  m.topRightCorner<2, 1>() = ss.B * sample_period;
  const Eigen::MatrixXd e = linalg::expm(m);
  DiscreteStateSpace d;
  d.F = e.topLeftCorner<2, 2>();
  d.G = e.topRightCorner<2, 1>();
  d.H = ss.C;
  d.sample_period = sample_period;
  return d;
}

std::complex<double> frequency_response(const ContinuousStateSpace& ss, double omega) {
  using cd = std::complex<double>;
  Eigen::Matrix2cd m = -ss.A.cast<cd>();
  m(0, 0) += cd(0.0, omega);
  m(1, 1) += cd(0.0, omega);
  const Eigen::Vector2cd x = m.partialPivLu().solve(ss.B.cast<cd>());
  return (ss.C.cast<cd>() * x)(0);
}

namespace {

struct FitData {
  std::vector<double> omega;
  std::vector<double> log_mag;
  std::vector<double> phase;
};

// Unit-gain model response at log-parameters (ln w0, ln Q).
std::complex<double> unit_model(double omega, double log_w0, double log_q) {
  const double w0 = std::exp(log_w0);
  const double q = std::exp(log_q);
  return 1.0 / std::complex<double>(w0 * w0 - omega * omega, omega * w0 / q);
}

// Residual vector with the gain profiled out; returns ln K through `log_gain`.
void residuals(const FitData& d, double log_w0, double log_q, Eigen::VectorXd& r, double& log_gain) {
  const std::size_t n = d.omega.size();
  r.resize(static_cast<Eigen::Index>(2 * n));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = unit_model(d.omega[i], log_w0, log_q);
    const double lm = std::log(std::abs(m));
    r(static_cast<Eigen::Index>(i)) = d.log_mag[i] - lm;
    sum += d.log_mag[i] - lm;
    r(static_cast<Eigen::Index>(n + i)) =
        std::remainder(d.phase[i] - std::arg(m), 2.0 * std::numbers::pi);
  }
  log_gain = sum / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(i)) -= log_gain;
}

struct FitFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const FitData* data;
  int inputs() const { return 2; }
  int values() const { return static_cast<int>(2 * data->omega.size()); }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    double lg = 0.0;
    residuals(*data, x(0), x(1), fvec, lg);
    return 0;
  }
};

}  // namespace

SecondOrderFit fit_second_order(std::span<const double> omegas,
                                std::span<const std::complex<double>> gains) {
  if (omegas.size() != gains.size()) throw ConfigError("fit_second_order: length mismatch");
  FitData d;
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    if (!(omegas[i] > 0.0) || std::abs(gains[i]) == 0.0) continue;  // DC / empty bins carry no phase
    d.omega.push_back(omegas[i]);
    d.log_mag.push_back(std::log(std::abs(gains[i])));
    d.phase.push_back(std::arg(gains[i]));
  }
  std::vector<double> distinct = d.omega;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw ConfigError("fit_second_order: need at least 3 distinct frequencies");

  // A single resonance must show an interior magnitude peak.
  std::vector<std::size_t> order(d.omega.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.omega[a] < d.omega[b]; });
  std::size_t peak = 0;
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (d.log_mag[order[k]] > d.log_mag[order[peak]]) peak = k;
  }
  const double edge = std::max(d.log_mag[order.front()], d.log_mag[order.back()]);
  if (peak == 0 || peak + 1 == order.size() || d.log_mag[order[peak]] - edge < std::log(1.05)) {
    throw NumericalError(
        "fit_second_order: ill-conditioned fit, no resonance peak inside the swept band");
  }

  const double lo = std::log(distinct.front());
  const double hi = std::log(distinct.back());
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x(2);
  Eigen::VectorXd r;
  double lg = 0.0;
  constexpr int kFreqSteps = 96;
  constexpr int kQSteps = 64;
  for (int i = 0; i < kFreqSteps; ++i) {
    const double lw = lo + (hi - lo) * i / (kFreqSteps - 1);
    for (int j = 0; j < kQSteps; ++j) {
      const double lq = std::log(0.5) + (std::log(2.0e4) - std::log(0.5)) * j / (kQSteps - 1);
      residuals(d, lw, lq, r, lg);
      const double cost = r.squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        x << lw, lq;
      }
    }
  }

  FitFunctor functor{&d};
  Eigen::NumericalDiff<FitFunctor> numdiff(functor);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<FitFunctor>, double> lm(numdiff);
  lm.parameters.xtol = 1e-14;
  lm.parameters.ftol = 1e-14;
  lm.parameters.maxfev = 4000;
  lm.minimize(x);

  residuals(d, x(0), x(1), r, lg);
  SecondOrderFit fit;
  fit.params.f0_hz = std::exp(x(0)) / (2.0 * std::numbers::pi);
  fit.params.quality = std::exp(x(1));
  fit.params.dither_freq_hz = fit.params.f0_hz;
  fit.params.sample_rate_hz = 32.0 * fit.params.f0_hz;
  fit.gain = std::exp(lg);
  fit.residual_norm = r.norm();
  return fit;
}

std::vector<double> FrequencySweep::omegas() const {
  std::vector<double> w(freq_hz.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 2.0 * std::numbers::pi * freq_hz[i];
  return w;
}

std::vector<std::complex<double>> FrequencySweep::gains() const {
  std::vector<std::complex<double>> g(freq_hz.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::polar(magnitude[i], phase_rad[i]);
  return g;
}

FrequencySweep read_sweep_csv(const std::filesystem::path& path) {
  auto cols = io::read_csv_columns(path, {"freq_hz", "mag", "phase_rad"});
  return {std::move(cols[0]), std::move(cols[1]), std::move(cols[2])};
}

void write_sweep_csv(const std::filesystem::path& path, const FrequencySweep& sweep) {
  io::write_csv_columns(path, {"freq_hz", "mag", "phase_rad"},
                        {sweep.freq_hz, sweep.magnitude, sweep.phase_rad});
}

}  // namespace probe
