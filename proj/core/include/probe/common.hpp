#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace probe {

using Vec2 = Eigen::Vector2d;
using RowVec2 = Eigen::RowVector2d;
using Mat2 = Eigen::Matrix2d;

/// Sampled real-valued signal (innovation, deflection, matched or whitened outputs).
using Signal = std::vector<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed configuration or inconsistent inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-convergence, indefinite matrix, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File-system or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace probe
