#include "probe/linalg.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace probe::linalg {

namespace {

// Parlett-Reinsch balancing with power-of-two factors: returns d such that
// diag(d)^-1 * a * diag(d) has comparable row and column norms.
Eigen::VectorXd balance(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd b = a;
  bool converged = false;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0;
      double r = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(b(j, i));
        r += std::abs(b(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double f = 1.0;
      const double s = c + r;
      while (c < r / 2.0) {
        c *= 2.0;
        r /= 2.0;
        f *= 2.0;
      }
      while (c >= r * 2.0) {
        c /= 2.0;
        r *= 2.0;
        f /= 2.0;
      }
      if ((c + r) < 0.95 * s) {
        converged = false;
        d(i) *= f;
        b.row(i) /= f;
        b.col(i) *= f;
      }
    }
  }
  return d;
}

}  // namespace

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ConfigError("expm: matrix must be square");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;

  const Eigen::VectorXd d = balance(a);
  Eigen::MatrixXd x = d.asDiagonal().inverse() * a * d.asDiagonal();

  const Eigen::MatrixXd e = x.exp();
  return d.asDiagonal() * e * d.asDiagonal().inverse();
}

double rcond(const Eigen::MatrixXd& a) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) return 0.0;
  const double norm_a = a.cwiseAbs().colwise().sum().maxCoeff();
  const double norm_inv = lu.inverse().cwiseAbs().colwise().sum().maxCoeff();
  if (norm_a == 0.0 || !std::isfinite(norm_inv)) return 0.0;
  return 1.0 / (norm_a * norm_inv);
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a, const std::string& what) {
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(what + ": matrix is not positive definite");
  }
  Eigen::MatrixXd l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
      throw NumericalError(what + ": matrix is not positive definite");
    }
  }
  return l;
}

Eigen::MatrixXd toeplitz(std::span<const double> r, std::size_t n) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t lag = i > j ? i - j : j - i;
      if (lag < r.size()) t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[lag];
    }
  }
  return t;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace probe::linalg
