#include "probe/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace probe {

const char* to_string(ImpactSource s) {
  switch (s) {
    case ImpactSource::synthetic: return "synthetic";
    case ImpactSource::calibrated: return "calibrated";
    case ImpactSource::physical: return "physical";
    case ImpactSource::file: return "file";
  }
  return "?";
}

const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::none: return "none";
    case SweepVariable::snr_db: return "snr_db";
    case SweepVariable::q: return "q";
    case SweepVariable::bit_width_us: return "bit_width_us";
  }
  return "?";
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (item.empty()) throw ConfigError("empty item in list '" + std::string(s) + "'");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_count(const std::string& v) {
  // Accept 1e6-style counts as long as they are exact integers.
  if (v.find_first_of(".eE") != std::string::npos) {
    const double d = to_double(v);
    if (d < 0.0 || d != std::floor(d) || d > 1e15) throw ConfigError("expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(d);
  }
  return static_cast<std::size_t>(to_u64(v));
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"cantilever.f0_hz", [](auto& c, auto& v) { c.f0_hz = to_double(v); }},
      {"cantilever.quality", [](auto& c, auto& v) { c.quality = to_double(v); }},
      {"cantilever.dither_amplitude_nm", [](auto& c, auto& v) { c.dither_amplitude_nm = to_double(v); }},
      {"cantilever.samples_per_cycle", [](auto& c, auto& v) { c.samples_per_cycle = to_count(v); }},
      {"noise.thermal_variance", [](auto& c, auto& v) { c.thermal_variance = to_double(v); }},
      {"noise.measurement_variance", [](auto& c, auto& v) { c.measurement_variance = to_double(v); }},
      {"noise.thermal_force_scale", [](auto& c, auto& v) { c.thermal_force_scale = to_double(v); }},
      {"media.q", [](auto& c, auto& v) { c.q = to_count(v); }},
      {"media.separation_nm", [](auto& c, auto& v) { c.separation_nm = to_double(v); }},
      {"media.restitution", [](auto& c, auto& v) { c.restitution = to_double(v); }},
      {"media.snr_db", [](auto& c, auto& v) { c.snr_db = to_double(v); }},
      {"media.p_one", [](auto& c, auto& v) { c.p_one = to_double(v); }},
      {"impact.source",
       [](auto& c, auto& v) {
         if (v == "synthetic") c.source = ImpactSource::synthetic;
         else if (v == "calibrated") c.source = ImpactSource::calibrated;
         else if (v == "physical") c.source = ImpactSource::physical;
         else if (v == "file") c.source = ImpactSource::file;
         else throw ConfigError("source must be synthetic, calibrated, physical or file, got '" + v + "'");
       }},
      {"impact.memory", [](auto& c, auto& v) { c.memory = static_cast<unsigned>(to_count(v)); }},
      {"impact.model_file", [](auto& c, auto& v) { c.model_file = v; }},
      {"impact.calibration_bits", [](auto& c, auto& v) { c.calibration_bits = to_count(v); }},
      {"detect.detectors", [](auto& c, auto& v) { c.detectors = parse_detector_list(v); }},
      {"detect.trellis_memory", [](auto& c, auto& v) { c.trellis_memory = static_cast<unsigned>(to_count(v)); }},
      {"detect.profile_tolerance", [](auto& c, auto& v) { c.profile_tolerance = to_double(v); }},
      {"detect.shrink", [](auto& c, auto& v) { c.shrink = to_double(v); }},
      {"detect.training_bits", [](auto& c, auto& v) { c.training_bits = to_count(v); }},
      {"sweep.variable",
       [](auto& c, auto& v) {
         if (v == "none") c.variable = SweepVariable::none;
         else if (v == "snr_db") c.variable = SweepVariable::snr_db;
         else if (v == "q") c.variable = SweepVariable::q;
         else if (v == "bit_width_us") c.variable = SweepVariable::bit_width_us;
         else throw ConfigError("variable must be none, snr_db, q or bit_width_us, got '" + v + "'");
       }},
      {"sweep.values",
       [](auto& c, auto& v) {
         c.values.clear();
         for (const auto& item : split_list(v)) c.values.push_back(to_double(item));
       }},
      {"sweep.bits_per_point", [](auto& c, auto& v) { c.bits_per_point = to_count(v); }},
      {"sweep.block_bits", [](auto& c, auto& v) { c.block_bits = to_count(v); }},
      {"run.seed", [](auto& c, auto& v) { c.seed = to_u64(v); }},
      {"run.threads", [](auto& c, auto& v) { c.threads = to_count(v); }},
      {"run.out", [](auto& c, auto& v) { c.out = v; }},
      {"run.dataset_bits", [](auto& c, auto& v) { c.dataset_bits = to_count(v); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> parse_detector_list(std::string_view text) {
  auto list = split_list(text);
  if (list.empty()) throw ConfigError("detector list is empty");
  for (const auto& d : list) {
    if (d != "viterbi" && d != "lmp" && d != "glrt" && d != "bayes") {
      throw ConfigError("unknown detector '" + d + "' (expected viterbi, lmp, glrt, bayes)");
    }
  }
  return list;
}

bool ExperimentConfig::wants(std::string_view detector) const {
  for (const auto& d : detectors) {
    if (d == detector) return true;
  }
  return false;
}

void ExperimentConfig::validate() {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(f0_hz > 0.0, "[cantilever] f0_hz must be positive");
  require(quality > 0.0, "[cantilever] quality must be positive");
  require(dither_amplitude_nm > 0.0, "[cantilever] dither_amplitude_nm must be positive");
  require(samples_per_cycle >= 4, "[cantilever] samples_per_cycle must be >= 4");
  require(thermal_variance >= 0.0, "[noise] thermal_variance must be >= 0");
  require(measurement_variance > 0.0, "[noise] measurement_variance must be > 0");
  require(thermal_force_scale > 0.0, "[noise] thermal_force_scale must be > 0");
  require(q >= 1 && q <= 256, "[media] q must be in 1..256");
  require(separation_nm > 0.0, "[media] separation_nm must be positive");
  require(restitution >= 0.0 && restitution <= 1.0, "[media] restitution must be in [0, 1]");
  require(p_one > 0.0 && p_one < 1.0, "[media] p_one must be in (0, 1)");
  require(memory <= 6, "[impact] memory must be <= 6");
  require(source != ImpactSource::file || !model_file.empty(), "[impact] source = file needs model_file");
  require(calibration_bits >= 100, "[impact] calibration_bits must be >= 100");
  require(trellis_memory <= 6, "[detect] trellis_memory must be <= 6");
  require(profile_tolerance > 0.0 && profile_tolerance < 1.0, "[detect] profile_tolerance must be in (0, 1)");
  require(shrink > 0.0 && shrink <= 1.0, "[detect] shrink must be in (0, 1]");
  require(training_bits >= 100, "[detect] training_bits must be >= 100");
  require(variable == SweepVariable::none || !values.empty(), "[sweep] values must list the grid points");
  for (double v : values) {
    if (variable == SweepVariable::q) {
      require(v >= 1.0 && v <= 256.0 && v == std::floor(v), "[sweep] q values must be integers in 1..256");
    }
    if (variable == SweepVariable::bit_width_us) require(v > 0.0, "[sweep] bit widths must be positive");
  }
  require(bits_per_point >= 1, "[sweep] bits_per_point must be >= 1");
  require(block_bits >= 100, "[sweep] block_bits must be >= 100");
  require(threads >= 1, "[run] threads must be >= 1");
  require(dataset_bits >= 1, "[run] dataset_bits must be >= 1");
  if (bits_per_point < 1000) {
    warnings.push_back("bits_per_point < 1000: BER points below 1e-2 are not meaningful");
  }
  if (dither_amplitude_nm >= separation_nm) {
    warnings.push_back("free oscillation amplitude reaches the low media surface; low bits will be hit");
  }
}

ExperimentConfig parse_config(std::string_view text, const std::string& origin) {
  ExperimentConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "malformed section header '" + line + "'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      static const char* known[] = {"cantilever", "noise", "media", "impact", "detect", "sweep", "run"};
      bool ok = false;
      for (const char* k : known) ok = ok || section == k;
      if (!ok) throw ConfigError(where() + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value', got '" + line + "'");
    if (section.empty()) throw ConfigError(where() + "key outside of any [section]");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = setters().find(section + "." + key);
    if (it == setters().end()) throw ConfigError(where() + "unknown key '" + key + "' in [" + section + "]");
    if (value.empty()) throw ConfigError(where() + "empty value for '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where() + key + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str(), path.string());
  const auto base = path.parent_path();
  if (!cfg.model_file.empty() && cfg.model_file.is_relative()) cfg.model_file = base / cfg.model_file;
  return cfg;
}

std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[cantilever]\n"
    << "f0_hz = " << fmt(c.f0_hz) << "\n"
    << "quality = " << fmt(c.quality) << "\n"
    << "dither_amplitude_nm = " << fmt(c.dither_amplitude_nm) << "\n"
    << "samples_per_cycle = " << c.samples_per_cycle << "\n\n"
    << "[noise]\n"
    << "thermal_variance = " << fmt(c.thermal_variance) << "\n"
    << "measurement_variance = " << fmt(c.measurement_variance) << "\n"
    << "thermal_force_scale = " << fmt(c.thermal_force_scale) << "\n\n"
    << "[media]\n"
    << "q = " << c.q << "\n"
    << "separation_nm = " << fmt(c.separation_nm) << "\n"
    << "restitution = " << fmt(c.restitution) << "\n"
    << "snr_db = " << fmt(c.snr_db) << "\n"
    << "p_one = " << fmt(c.p_one) << "\n\n"
    << "[impact]\n"
    << "source = " << to_string(c.source) << "\n"
    << "memory = " << c.memory << "\n";
  if (!c.model_file.empty()) o << "model_file = " << c.model_file.string() << "\n";
  o << "calibration_bits = " << c.calibration_bits << "\n\n"
    << "[detect]\n"
    << "detectors = ";
  for (std::size_t i = 0; i < c.detectors.size(); ++i) o << (i ? "," : "") << c.detectors[i];
  o << "\n"
    << "trellis_memory = " << c.trellis_memory << "\n"
    << "profile_tolerance = " << fmt(c.profile_tolerance) << "\n"
    << "shrink = " << fmt(c.shrink) << "\n"
    << "training_bits = " << c.training_bits << "\n\n"
    << "[sweep]\n"
    << "variable = " << to_string(c.variable) << "\n";
  if (!c.values.empty()) {
    o << "values = ";
    for (std::size_t i = 0; i < c.values.size(); ++i) o << (i ? ", " : "") << fmt(c.values[i]);
    o << "\n";
  }
  o << "bits_per_point = " << c.bits_per_point << "\n"
    << "block_bits = " << c.block_bits << "\n\n"
    << "[run]\n"
    << "seed = " << c.seed << "\n"
    << "threads = " << c.threads << "\n"
    << "out = " << c.out.string() << "\n"
    << "dataset_bits = " << c.dataset_bits << "\n";
  return o.str();
}

}  // namespace probe
