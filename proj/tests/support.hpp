#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>

#include "probe/common.hpp"

namespace probe::testkit {

/// Normalized sample autocorrelation at `lag` (mean removed).
inline double sample_autocorrelation(std::span<const double> x, std::size_t lag) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  double cl = 0.0;
  for (std::size_t i = 0; i < n; ++i) c0 += (x[i] - mean) * (x[i] - mean);
  for (std::size_t i = lag; i < n; ++i) cl += (x[i] - mean) * (x[i - lag] - mean);
  return cl / c0;
}

/// Largest |rho(lag)| over lags 1..max_lag divided by the 3/sqrt(n) bound.
inline double whiteness_ratio(std::span<const double> x, std::size_t max_lag = 20) {
  const double bound = 3.0 / std::sqrt(static_cast<double>(x.size()));
  double worst = 0.0;
  for (std::size_t l = 1; l <= max_lag; ++l) worst = std::max(worst, std::abs(sample_autocorrelation(x, l)) / bound);
  return worst;
}

inline Signal gaussian_noise(std::size_t n, double variance, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, std::sqrt(variance));
  Signal out(n);
  for (double& v : out) v = d(rng);
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("probe_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace probe::testkit
