// probechan: command line front end for the probe-storage channel workbench.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "probe/bench.hpp"
#include "probe/io.hpp"
#include "probe/rng.hpp"

namespace {

using namespace probe;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> detectors;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_config) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config file");
  if (needs_config) opt->required();
  cmd->add_option("--seed", f.seed, "master seed (overrides [run] seed)");
  cmd->add_option("--out", f.out, "output directory (overrides [run] out)");
  cmd->add_option("--detectors", f.detectors, "comma-separated subset of viterbi,lmp,glrt,bayes");
  cmd->add_option("--threads", f.threads, "worker threads");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.detectors) cfg.detectors = parse_detector_list(*f.detectors);
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

int cmd_identify(const CommonFlags& f, const std::string& sweep_path) {
  const FrequencySweep sweep = read_sweep_csv(sweep_path);
  const SecondOrderFit fit = fit_second_order(sweep.omegas(), sweep.gains());
  std::ostringstream o;
  o.precision(10);
  o << "[cantilever]\n"
    << "f0_hz = " << fit.params.f0_hz << '\n'
    << "quality = " << fit.params.quality << '\n'
    << "# gain = " << fit.gain << '\n'
    << "# residual_norm = " << fit.residual_norm << '\n';
  std::cout << o.str();
  if (f.out) {
    io::ensure_directory(*f.out);
    write_text(fs::path(*f.out) / "identified.ini", o.str());
  }
  return 0;
}

int cmd_design_observer(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(f);
  const Scenario sc = build_scenario(cfg, sweep_grid(cfg).front());
  const auto& obs = sc.observer;
  std::ostringstream o;
  o.precision(12);
  o << "gain = " << obs.gain(0) << ", " << obs.gain(1) << '\n'
    << "innovation_variance = " << obs.innovation_variance << '\n'
    << "error_covariance = " << obs.error_covariance(0, 0) << ", " << obs.error_covariance(0, 1) << ", "
    << obs.error_covariance(1, 1) << '\n'
    << "dare_iterations = " << obs.iterations << '\n'
    << "dare_residual = " << obs.dare_residual << '\n'
    << "profile_samples = " << sc.profile.size() << '\n'
    << "isi_cycles = " << sc.channel.I << '\n'
    << "m_I = " << sc.channel.m_I << '\n'
    << "whitener_zero_modulus = " << sc.channel.zero_modulus << '\n';
  std::cout << o.str();
  io::ensure_directory(cfg.out);
  write_text(cfg.out / "observer.txt", o.str());
  io::write_indexed_csv(cfg.out / "profile.csv", "k", "gamma", sc.profile);
  std::vector<double> lag(sc.channel.h.size());
  for (std::size_t j = 0; j < lag.size(); ++j) lag[j] = static_cast<double>(j);
  io::write_csv_columns(cfg.out / "channel.csv", {"lag", "h", "R"}, {lag, sc.channel.h, sc.channel.R});
  return 0;
}

int cmd_simulate(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(f);
  generate_dataset(cfg, cfg.out);
  std::cout << "dataset written to " << cfg.out.string() << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(f);
  const Scenario sc = build_scenario(cfg, sweep_grid(cfg).front());
  const ImpactSourceModel src = prepare_impact_source(cfg, sc, derive_seed(cfg.seed, {0, 0}));
  const TrainedDetectors trained = train_detectors(cfg, sc, src, derive_seed(cfg.seed, {0, 1}));
  save_trained(cfg.out, trained);
  for (const auto& [name, ber] : trained.training_ber) std::cout << name << " training BER " << ber << '\n';
  std::cout << "trained detectors written to " << cfg.out.string() << '\n';
  return 0;
}

int cmd_detect(const CommonFlags& f, const std::string& data, const std::string& model) {
  const ExperimentConfig cfg = resolve_config(f);
  const Scenario sc = build_scenario(cfg, sweep_grid(cfg).front());
  const TrainedDetectors trained = load_trained(model, cfg, sc);
  const DatasetDetections det = detect_dataset(cfg, sc, trained, data);
  io::ensure_directory(cfg.out);
  write_detections_csv(cfg.out / "detections.csv", det);
  write_ber_csv(cfg.out / "ber.csv", det.records);
  std::cout << report(det.records);
  return 0;
}

int cmd_ber_sweep(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(f);
  const SweepResult res = run_ber_sweep(cfg);
  io::ensure_directory(cfg.out);
  write_ber_csv(cfg.out / "ber.csv", res.records);
  write_points_csv(cfg.out / "points.csv", res.points);
  const std::string text = report(res.records);
  write_text(cfg.out / "report.txt", text);
  write_report_csv(cfg.out / "report.csv", res.records);
  std::cout << text;
  return 0;
}

int cmd_report(const CommonFlags& f, const std::string& input) {
  const std::vector<BerRecord> records = read_ber_csv(input);
  if (records.empty()) throw ConfigError(input + ": no BER records");
  std::cout << report(records);
  if (f.out) {
    io::ensure_directory(*f.out);
    write_report_csv(fs::path(*f.out) / "report.csv", records);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probe-storage channel workbench"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string sweep_path;
  std::string data_dir;
  std::string model_dir;
  std::string input;

  auto* identify = app.add_subcommand("identify", "fit a second-order model to a frequency sweep CSV");
  add_common(identify, flags, false);
  identify->add_option("--sweep", sweep_path, "CSV with freq_hz,mag,phase_rad")->required();

  auto* design = app.add_subcommand("design-observer", "solve the Kalman predictor and channel for a config");
  add_common(design, flags, true);

  auto* simulate = app.add_subcommand("simulate", "write a reproducible dataset");
  add_common(simulate, flags, true);

  auto* train = app.add_subcommand("train", "train the trellis and hit thresholds");
  add_common(train, flags, true);

  auto* detect = app.add_subcommand("detect", "run trained detectors on a dataset");
  add_common(detect, flags, true);
  detect->add_option("--data", data_dir, "dataset directory from simulate")->required();
  detect->add_option("--model", model_dir, "directory written by train")->required();

  auto* sweep = app.add_subcommand("ber-sweep", "Monte Carlo BER sweep");
  add_common(sweep, flags, true);

  auto* rep = app.add_subcommand("report", "summarize a BER CSV");
  add_common(rep, flags, false);
  rep->add_option("--input", input, "ber.csv from ber-sweep or detect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (identify->parsed()) return cmd_identify(flags, sweep_path);
    if (design->parsed()) return cmd_design_observer(flags);
    if (simulate->parsed()) return cmd_simulate(flags);
    if (train->parsed()) return cmd_train(flags);
    if (detect->parsed()) return cmd_detect(flags, data_dir, model_dir);
    if (sweep->parsed()) return cmd_ber_sweep(flags);
    if (rep->parsed()) return cmd_report(flags, input);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
