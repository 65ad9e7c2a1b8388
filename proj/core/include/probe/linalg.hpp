#pragma once

#include <span>

#include "probe/common.hpp"

namespace probe::linalg {

/// Matrix exponential: diagonal balancing around Eigen's scaling-and-squaring
/// Padé exponential (orders 3 to 13 chosen by norm).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

/// Reciprocal 1-norm condition number estimate of a square matrix
/// (exact for the small matrices used here).
double rcond(const Eigen::MatrixXd& a);

/// Cholesky factor of a symmetric positive-definite matrix. Throws
/// NumericalError carrying `what` when the matrix is not positive definite.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a, const std::string& what);

/// Symmetric Toeplitz matrix built from the first row `r`.
Eigen::MatrixXd toeplitz(std::span<const double> r, std::size_t n);

/// Symmetric square root (eigen decomposition) of a positive-semidefinite matrix;
/// negative eigenvalues within rounding are clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

}  // namespace probe::linalg
