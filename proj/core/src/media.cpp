#include "probe/media.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

#include "probe/io.hpp"
#include "probe/linalg.hpp"
#include "probe/rng.hpp"

namespace probe {

void MediaProfile::validate() const {
  if (q == 0) throw ConfigError("media: q (hits per bit) must be >= 1");
  if (!(height_nm >= 0.0)) throw ConfigError("media: height must be >= 0");
  if (!(cycle_period_s > 0.0)) throw ConfigError("media: cycle period must be positive");
}

void ImpactModel::validate() const {
  if (q == 0) throw ConfigError("impact model: q must be >= 1");
  if (m > 16) throw ConfigError("impact model: memory m > 16 is not supported");
  if (mean_table.size() != context_count()) {
    throw ConfigError("impact model: expected " + std::to_string(context_count()) + " contexts, got " +
                      std::to_string(mean_table.size()));
  }
  for (std::size_t c = 0; c < mean_table.size(); ++c) {
    if (mean_table[c].size() != static_cast<Eigen::Index>(q)) {
      throw ConfigError("impact model: context " + context_label(c, m) + " has the wrong length");
    }
    if ((c & 1u) == 0 && mean_table[c].cwiseAbs().maxCoeff() != 0.0) {
      throw ConfigError("impact model: context " + context_label(c, m) +
                        " ends in a zero bit and must have a zero mean");
    }
  }
  if (impact_cov.rows() != static_cast<Eigen::Index>(q) || impact_cov.cols() != static_cast<Eigen::Index>(q)) {
    throw ConfigError("impact model: covariance must be q x q");
  }
  if ((impact_cov - impact_cov.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, impact_cov.cwiseAbs().maxCoeff())) {
    throw ConfigError("impact model: covariance is not symmetric");
  }
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(impact_cov).eigenvalues().minCoeff();
  if (min_eig < -1e-9 * std::max(1.0, impact_cov.trace())) {
    throw ConfigError("impact model: covariance is not positive semidefinite (eigenvalue " +
                      std::to_string(min_eig) + ")");
  }
}

std::size_t context_index(std::span<const std::uint8_t> bits, std::size_t i, unsigned m) {
  std::size_t c = 0;
  for (unsigned j = 0; j <= m; ++j) {
    if (j <= i && bits[i - j]) c |= std::size_t{1} << j;
  }
  return c;
}

std::string context_label(std::size_t context, unsigned m) {
  std::string s;
  for (int j = static_cast<int>(m); j >= 0; --j) s += ((context >> j) & 1u) ? '1' : '0';
  return s;
}

BitSequence generate_bits(std::size_t n, std::uint64_t seed, double p_one) {
  if (!(p_one >= 0.0 && p_one <= 1.0)) throw ConfigError("generate_bits: p_one must be in [0, 1]");
  Rng rng(seed);
  BitSequence bits(n);
  for (auto& b : bits) b = uniform01(rng) < p_one ? 1 : 0;
  return bits;
}

ImpactModel synthetic_impact_model(unsigned m, std::size_t q, double nu_nom) {
  if (q == 0) throw ConfigError("synthetic_impact_model: q must be >= 1");
  ImpactModel model;
  model.m = m;
  model.q = q;
  Eigen::VectorXd ramp(static_cast<Eigen::Index>(q));
  for (std::size_t j = 0; j < q; ++j) {
    const double f = q > 1 ? static_cast<double>(j) / static_cast<double>(q - 1) : 0.0;
    ramp(static_cast<Eigen::Index>(j)) = nu_nom * (1.0 - 0.4 * f);
  }
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(q), 0.6 * nu_nom);
  model.mean_table.assign(model.context_count(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q)));
  for (std::size_t c = 1; c < model.context_count(); c += 2) {
    model.mean_table[c] = (m > 0 && (c & 2u)) ? flat : ramp;
  }
  model.impact_cov = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q)) *
                     (0.1 * nu_nom) * (0.1 * nu_nom);
  return model;
}

ImpactTrace impacts_statistical(std::span<const std::uint8_t> bits, const ImpactModel& model,
                                std::uint64_t seed) {
  model.validate();
  for (std::size_t i = 0; i < std::min<std::size_t>(model.m, bits.size()); ++i) {
    if (bits[i]) {
      throw ConfigError("impacts_statistical: bit " + std::to_string(i) +
                        " lacks its full context; prepend a zero preamble of at least m = " +
                        std::to_string(model.m) + " bits");
    }
  }
  const auto q = static_cast<Eigen::Index>(model.q);
  const Eigen::MatrixXd root = linalg::psd_sqrt(model.impact_cov);
  const bool noisy = root.cwiseAbs().maxCoeff() > 0.0;

  ImpactTrace out;
  out.nu.assign(bits.size() * model.q, 0.0);
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd w(q);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    Eigen::VectorXd v = model.mean_table[context_index(bits, i, model.m)];
    if (noisy) {
      for (Eigen::Index j = 0; j < q; ++j) w(j) = normal(rng);
      v += root * w;
    }
    for (Eigen::Index j = 0; j < q; ++j) {
      const std::size_t cycle = i * model.q + static_cast<std::size_t>(j);
      out.nu[cycle] = v(j);
      if (v(j) != 0.0) out.hit_times.push_back(cycle);
    }
  }
  return out;
}

double DitherDrive::forcing(std::size_t k, double sample_period) const {
  if (amplitude == 0.0) return 0.0;
  return amplitude * std::sin(omega * static_cast<double>(k) * sample_period + phase);
}

DitherDrive design_dither(const DiscreteStateSpace& dss, const CantileverParams& params,
                          std::size_t trough_sample) {
  using cd = std::complex<double>;
  DitherDrive d;
  d.omega = 2.0 * std::numbers::pi * params.dither_freq_hz;
  if (params.dither_amplitude_nm == 0.0) return d;
  const double wt = d.omega * dss.sample_period;
  Eigen::Matrix2cd m = -dss.F.cast<cd>();
  m(0, 0) += std::polar(1.0, wt);
  m(1, 1) += std::polar(1.0, wt);
  // Complex steady-state response to the unit phasor forcing Im(e^{i w k Ts}).
  const Eigen::Vector2cd w = m.partialPivLu().solve(dss.G.cast<cd>());
  if (!(std::abs(w(0)) > 0.0)) throw NumericalError("design_dither: drive does not reach the deflection");
  d.amplitude = params.dither_amplitude_nm / std::abs(w(0));
  d.phase = -0.5 * std::numbers::pi - wt * static_cast<double>(trough_sample) - std::arg(w(0));
  const Eigen::Vector2cd x0 = w * std::polar(d.amplitude, d.phase);
  d.initial_state = x0.imag();
  return d;
}

namespace {
constexpr int kContactSubstepLog2 = 4;
constexpr int kContactSubsteps = 1 << kContactSubstepLog2;
}  // namespace

PhysicalRun impacts_physical(std::span<const std::uint8_t> bits, const DiscreteStateSpace& dss,
                             const CantileverParams& params, const MediaProfile& profile,
                             const PhysicalSetup& setup, const NoiseParams& noise, std::uint64_t seed) {
  params.validate();
  profile.validate();
  noise.validate();
  if (!(setup.restitution >= 0.0 && setup.restitution <= 1.0)) {
    throw ConfigError("impacts_physical: restitution must be in [0, 1]");
  }
  if (!(setup.separation_nm > 0.0)) throw ConfigError("impacts_physical: separation must be positive");
  const double spc_real = profile.cycle_period_s / dss.sample_period;
  const auto spc = static_cast<std::size_t>(std::llround(spc_real));
  if (spc < 2 || std::abs(spc_real - static_cast<double>(spc)) > 1e-6 * spc_real) {
    throw ConfigError("impacts_physical: the cycle period must be an integer number of samples");
  }
  if (setup.trough_sample >= spc) throw ConfigError("impacts_physical: trough sample outside the cycle");

  const DitherDrive drive = design_dither(dss, params, setup.trough_sample);
  PhysicalRun run;
  run.initial_state = drive.initial_state;
  run.free_amplitude_nm = params.dither_amplitude_nm;
  if (run.free_amplitude_nm >= setup.separation_nm) {
    run.warnings.push_back("free oscillation amplitude " + std::to_string(run.free_amplitude_nm) +
                           " nm reaches the low media surface at separation " +
                           std::to_string(setup.separation_nm) + " nm; low bits will be hit");
  }

  const std::size_t samples_per_bit = profile.q * spc;
  const std::size_t n = bits.size() * samples_per_bit;
  run.impacts.nu.assign(bits.size() * profile.q, 0.0);
  run.deflection.resize(n);
  run.dither.resize(n);

  // Contact is resolved on kContactSubsteps sub-steps per sample. The descending
  // part of a shallow penetration lasts only a sample or two, so checking at the
  // sample instants alone misses hits whenever the trough drifts off the grid.
  Mat2 fs = dss.F;
  for (int i = 0; i < kContactSubstepLog2; ++i) fs = fs.sqrt().eval();
  Mat2 sum = Mat2::Zero();
  Mat2 power = Mat2::Identity();
  for (int i = 0; i < kContactSubsteps; ++i) {
    sum += power;
    power = power * fs;
  }
  const Vec2 gs = sum.partialPivLu().solve(dss.G);
  const double w0 = params.omega0();
  const double ts = dss.sample_period;

  Rng rng(seed);
  std::normal_distribution<double> normal;
  const double sensor_sd = std::sqrt(noise.measurement_variance);
  const double thermal_sd = std::sqrt(noise.thermal_variance);
  const double r = setup.restitution;
  Vec2 x = drive.initial_state;
  std::size_t last_cycle = std::numeric_limits<std::size_t>::max();
  auto contact = [&](Vec2& state, double surface, std::size_t k) {
    if (!(state(0) < surface && state(1) < 0.0)) return;
    const double jump = (1.0 + r) * std::abs(state(1));
    state(1) = -r * state(1);
    const std::size_t cycle = k / spc;
    run.impacts.nu[cycle] += jump;
    if (cycle != last_cycle) {
      run.impacts.hit_times.push_back(cycle);
      run.hit_samples.push_back(k);
      last_cycle = cycle;
    }
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double surface = -setup.separation_nm + (bits[k / samples_per_bit] ? profile.height_nm : 0.0);
    run.deflection[k] = x(0) + sensor_sd * normal(rng);
    const double g = drive.forcing(k, ts);
    run.dither[k] = g;
    const double eta = thermal_sd > 0.0 ? thermal_sd * normal(rng) : 0.0;
    const double u = g + eta;
    // Largest excursion within one sample, from the velocity and the restoring acceleration.
    const double reach = std::abs(x(1)) * ts + w0 * w0 * (std::abs(x(0)) + 1.0) * ts * ts;
    if (x(0) - reach > surface) {
      x = dss.F * x + dss.G * u;
      continue;
    }
    for (int s = 0; s < kContactSubsteps; ++s) {
      contact(x, surface, k);
      x = fs * x + gs * u;
    }
  }
  return run;
}

Signal synthesize_innovation(const ImpactTrace& impacts, std::span<const double> gamma, double V,
                             std::size_t samples_per_cycle, std::uint64_t seed) {
  if (gamma.empty()) throw ConfigError("synthesize_innovation: gamma is empty");
  if (!(V >= 0.0)) throw ConfigError("synthesize_innovation: V must be >= 0");
  if (samples_per_cycle == 0) throw ConfigError("synthesize_innovation: samples_per_cycle must be >= 1");
  const std::size_t n = impacts.nu.size() * samples_per_cycle;
  Signal e(n, 0.0);
  if (V > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(V));
    for (auto& v : e) v = normal(rng);
  }
  for (std::size_t j = 0; j < impacts.nu.size(); ++j) {
    const double nu = impacts.nu[j];
    if (nu == 0.0) continue;
    const std::size_t start = j * samples_per_cycle;
    const std::size_t len = std::min(gamma.size(), n - start);
    double* out = e.data() + start;
    for (std::size_t t = 0; t < len; ++t) out[t] += nu * gamma[t];
  }
  return e;
}

ImpactModel calibrate_impact_model(std::span<const std::uint8_t> bits, const ImpactTrace& impacts,
                                   unsigned m, std::size_t q, std::size_t min_count) {
  if (q == 0) throw ConfigError("calibrate_impact_model: q must be >= 1");
  if (impacts.nu.size() != bits.size() * q) {
    throw ConfigError("calibrate_impact_model: impact trace has " + std::to_string(impacts.nu.size()) +
                      " entries, expected bits * q = " + std::to_string(bits.size() * q));
  }
  ImpactModel model;
  model.m = m;
  model.q = q;
  const auto qi = static_cast<Eigen::Index>(q);
  const std::size_t nctx = model.context_count();
  std::vector<std::size_t> count(nctx, 0);
  std::vector<Eigen::VectorXd> sum(nctx, Eigen::VectorXd::Zero(qi));
  for (std::size_t i = m; i < bits.size(); ++i) {
    const std::size_t c = context_index(bits, i, m);
    ++count[c];
    sum[c] += Eigen::Map<const Eigen::VectorXd>(impacts.nu.data() + i * q, qi);
  }
  std::string missing;
  for (std::size_t c = 0; c < nctx; ++c) {
    if (count[c] < min_count) {
      missing += (missing.empty() ? "" : ", ") + context_label(c, m) + " (" + std::to_string(count[c]) + ")";
    }
  }
  if (!missing.empty()) {
    throw ConfigError("calibrate_impact_model: contexts with fewer than " + std::to_string(min_count) +
                      " occurrences: " + missing);
  }
  model.mean_table.resize(nctx);
  for (std::size_t c = 0; c < nctx; ++c) {
    model.mean_table[c] = (c & 1u) ? Eigen::VectorXd(sum[c] / static_cast<double>(count[c]))
                                   : Eigen::VectorXd::Zero(qi);
  }
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(qi, qi);
  std::size_t n1 = 0;
  std::size_t groups = 0;
  for (std::size_t c = 1; c < nctx; c += 2) groups += count[c] > 0;
  for (std::size_t i = m; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    const std::size_t c = context_index(bits, i, m);
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(impacts.nu.data() + i * q, qi) - model.mean_table[c];
    scatter.noalias() += d * d.transpose();
    ++n1;
  }
  model.impact_cov = n1 > groups ? Eigen::MatrixXd(scatter / static_cast<double>(n1 - groups))
                                 : Eigen::MatrixXd::Zero(qi, qi);
  model.impact_cov = 0.5 * (model.impact_cov + model.impact_cov.transpose());
  return model;
}

void write_bits_csv(const std::filesystem::path& path, std::span<const std::uint8_t> bits) {
  std::vector<double> idx(bits.size());
  std::vector<double> val(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    idx[i] = static_cast<double>(i);
    val[i] = bits[i];
  }
  io::write_csv_columns(path, {"index", "bit"}, {idx, val});
}

BitSequence read_bits_csv(const std::filesystem::path& path) {
  const Signal v = io::read_indexed_csv(path);
  BitSequence bits(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) {
      throw IoError(path.string() + ": row " + std::to_string(i + 2) + " is not a bit");
    }
    bits[i] = v[i] != 0.0;
  }
  return bits;
}

void write_impacts_csv(const std::filesystem::path& path, const ImpactTrace& impacts) {
  io::write_indexed_csv(path, "cycle", "nu", impacts.nu);
}

namespace {

constexpr const char* kImpactModelMagic = "probe-impact-model 1";

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_impact_model(const std::filesystem::path& path, const ImpactModel& model) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kImpactModelMagic << '\n' << "m " << model.m << " q " << model.q << '\n';
  for (std::size_t c = 0; c < model.context_count(); ++c) {
    out << "mean " << context_label(c, model.m);
    for (Eigen::Index j = 0; j < model.mean_table[c].size(); ++j) out << ' ' << fmt(model.mean_table[c](j));
    out << '\n';
  }
  for (Eigen::Index r = 0; r < model.impact_cov.rows(); ++r) {
    out << "cov";
    for (Eigen::Index c = 0; c < model.impact_cov.cols(); ++c) out << ' ' << fmt(model.impact_cov(r, c));
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ImpactModel read_impact_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) -> std::istringstream {
    if (!std::getline(in, line)) {
      throw IoError(path.string() + ": unexpected end of file, expected " + what);
    }
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const std::string& msg) {
    return IoError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  next_line("header");
  if (line != kImpactModelMagic) throw fail("not an impact model file");
  ImpactModel model;
  {
    auto ss = next_line("dimensions");
    std::string km, kq;
    if (!(ss >> km >> model.m >> kq >> model.q) || km != "m" || kq != "q") throw fail("expected 'm <m> q <q>'");
    if (model.m > 16 || model.q == 0) throw fail("unsupported dimensions");
  }
  const auto qi = static_cast<Eigen::Index>(model.q);
  model.mean_table.resize(model.context_count());
  for (std::size_t c = 0; c < model.context_count(); ++c) {
    auto ss = next_line("mean row");
    std::string tag, label;
    ss >> tag >> label;
    if (tag != "mean" || label != context_label(c, model.m)) {
      throw fail("expected mean row for context " + context_label(c, model.m));
    }
    model.mean_table[c].resize(qi);
    for (Eigen::Index j = 0; j < qi; ++j) {
      if (!(ss >> model.mean_table[c](j))) throw fail("mean row too short");
    }
  }
  model.impact_cov.resize(qi, qi);
  for (Eigen::Index r = 0; r < qi; ++r) {
    auto ss = next_line("cov row");
    std::string tag;
    ss >> tag;
    if (tag != "cov") throw fail("expected cov row");
    for (Eigen::Index c = 0; c < qi; ++c) {
      if (!(ss >> model.impact_cov(r, c))) throw fail("cov row too short");
    }
  }
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace probe
