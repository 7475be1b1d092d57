#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "mcrs/errors.hpp"

namespace mcrs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline void require_square_symmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ShapeError(std::string(what) + ": matrix is not square");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = r + 1; c < m.cols(); ++c) {
      if (std::abs(m(r, c) - m(c, r)) > 1e-10 * scale) {
        throw ShapeError(std::string(what) + ": matrix is not symmetric");
      }
    }
  }
}

/// Positive-definiteness test by attempted Cholesky factorization. A pivot
/// (squared diagonal of the factor) at or below `tol` counts as failure.
inline bool is_positive_definite(const Matrix& m, double tol = 1e-10) {
  require_square_symmetric(m, "is_positive_definite");
  const Eigen::Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > tol)) return false;
    l(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return true;
}

/// Smallest eigenvalue; used for diagnostics and feasibility penalties.
inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Zero-mean Gaussian log-density from a precomputed Cholesky factor.
inline double gaussian_logdensity(const Vector& y, const Eigen::LLT<Matrix>& llt) {
  const Matrix& l = llt.matrixLLT();
  const Vector z = llt.matrixL().solve(y);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += std::log(l(i, i));
  return -0.5 * static_cast<double>(y.size()) * kLog2Pi - log_det - 0.5 * z.squaredNorm();
}

}  // namespace mcrs
