#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/serialcorr.hpp"

namespace mcrs {

/// Block Toeplitz correlation matrix of (Y_t, Y_{t-1}, ..., Y_{t-L}) for a
/// d-variate stationary Gaussian VAR, newest block first.
struct RegimeCorr {
  Matrix matrix;
  std::size_t d = 0;

  std::size_t blocks() const { return d == 0 ? 0 : static_cast<std::size_t>(matrix.rows()) / d; }

  /// d x d block (r, c); depends only on c - r.
  Matrix block(std::size_t r, std::size_t c) const {
    const auto dd = static_cast<Eigen::Index>(d);
    return matrix.block(static_cast<Eigen::Index>(r) * dd, static_cast<Eigen::Index>(c) * dd, dd, dd);
  }

  Matrix contemporaneous() const { return block(0, 0); }

  /// Serial correlation matrix of variable i (rows/cols i, i+d, i+2d, ...).
  ToeplitzCorr univariate(std::size_t i) const {
    ToeplitzCorr out;
    out.first_row.resize(blocks());
    for (std::size_t l = 0; l < blocks(); ++l) {
      out.first_row[l] = matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l * d + i));
    }
    return out;
  }
};

/// Coefficients (psi_1, ..., psi_k) = (rho_k, ..., rho_1) Gamma^{-1}, with Gamma
/// the k x k Toeplitz matrix of rho_0..rho_{k-1}. psi_m is the Yule-Walker
/// coefficient of lag k+1-m.
inline std::vector<double> psi_coefficients(const ToeplitzCorr& acf) {
  const std::size_t k = acf.max_lag();
  if (k == 0) return {};
  const auto n = static_cast<Eigen::Index>(k);
  Matrix gamma(n, n);
  Vector rhs(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    rhs[r] = acf.first_row[k - static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < n; ++c) gamma(r, c) = acf.first_row[static_cast<std::size_t>(std::abs(r - c))];
  }
  Eigen::LLT<Matrix> llt(gamma);
  if (llt.info() != Eigen::Success || !is_positive_definite(gamma, 0.0)) {
    throw DomainError("psi_coefficients: autocorrelation matrix is not positive definite");
  }
  const Vector psi = llt.solve(rhs);
  return {psi.data(), psi.data() + psi.size()};
}

/// k x (2k+1) banded matrix whose row r holds -1 at column r followed by
/// psi_k, ..., psi_1; each row is the previous one shifted right by one.
inline Matrix h_matrix(std::span<const double> psi) {
  const auto k = static_cast<Eigen::Index>(psi.size());
  Matrix h = Matrix::Zero(k, 2 * k + 1);
  for (Eigen::Index r = 0; r < k; ++r) {
    h(r, r) = -1.0;
    for (Eigen::Index m = 0; m < k; ++m) h(r, r + 1 + m) = psi[static_cast<std::size_t>(k - 1 - m)];
  }
  return h;
}

/**
 * Cross-lag correlations between components i and j of a margin-closed VAR.
 * Returns (rho_{ij,-k}, ..., rho_{ij,-1}, rho_{ij,1}, ..., rho_{ij,k}) with
 * rho_{ij,m} = corr(Z_{i,t}, Z_{j,t-m}), solving
 *
 *   -rho_{ij,0} [ H_i without column k+1 ; (H_j L) without column k+1 ]^{-1}
 *               [ column k+1 of H_i     ; column k+1 of H_j         ]
 *
 * where L reverses the 2k+1 columns. The column deletion and reversal are
 * done by index bookkeeping.
 */
inline std::vector<double> cross_lag_correlations(const Matrix& h_i, const Matrix& h_j, double rho0) {
  const Eigen::Index k = h_i.rows();
  if (h_j.rows() != k || h_i.cols() != 2 * k + 1 || h_j.cols() != 2 * k + 1) {
    throw ShapeError("cross_lag_correlations: H matrices must both be k x (2k+1)");
  }
  if (k == 0) return {};
  Matrix stacked(2 * k, 2 * k);
  Vector rhs(2 * k);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0, col = 0; c < 2 * k + 1; ++c) {
      if (c == k) continue;
      stacked(r, col) = h_i(r, c);
      stacked(k + r, col) = h_j(r, 2 * k - c);
      ++col;
    }
    rhs[r] = h_i(r, k);
    rhs[k + r] = h_j(r, k);
  }
  Eigen::FullPivLU<Matrix> lu(stacked);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw DegeneracyError("cross_lag_correlations: stacked system is singular");
  const Vector sol = -rho0 * lu.solve(rhs);
  return {sol.data(), sol.data() + sol.size()};
}

namespace detail {

inline void validate_contemp(const Matrix& contemp, std::size_t d) {
  if (contemp.rows() != static_cast<Eigen::Index>(d) || contemp.cols() != static_cast<Eigen::Index>(d)) {
    throw ShapeError("contemporaneous correlation matrix has the wrong dimension");
  }
  require_square_symmetric(contemp, "contemporaneous correlation");
  for (Eigen::Index i = 0; i < contemp.rows(); ++i) {
    if (std::abs(contemp(i, i) - 1.0) > 1e-12) throw DomainError("contemporaneous correlation: diagonal must be 1");
  }
  if (!is_positive_definite(contemp)) {
    throw InfeasibleError("contemporaneous correlation matrix is not positive definite");
  }
}

}  // namespace detail

/// Assemble R_g (newest block first) from the univariate Toeplitz matrices and
/// the contemporaneous correlation matrix. All univariate matrices must share
/// one dimension L+1, which sets the number of blocks.
inline RegimeCorr build_regime_corr(std::span<const ToeplitzCorr> univ, const Matrix& contemp,
                                    bool require_pd = true) {
  const std::size_t d = univ.size();
  if (d == 0) throw ShapeError("build_regime_corr: no variables");
  detail::validate_contemp(contemp, d);
  const std::size_t nb = univ.front().dim();
  for (const auto& u : univ) {
    if (u.dim() != nb) throw ShapeError("build_regime_corr: univariate matrices differ in dimension");
  }
  const std::size_t k = nb - 1;

  std::vector<Matrix> h(d);
  for (std::size_t i = 0; i < d; ++i) h[i] = h_matrix(psi_coefficients(univ[i]));

  // cross[i][j] holds rho_{ij,m} for m = -k..k at offset m + k (i < j only).
  std::vector<std::vector<std::vector<double>>> cross(d, std::vector<std::vector<double>>(d));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double rho0 = contemp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      std::vector<double> lags;
      try {
        lags = cross_lag_correlations(h[i], h[j], rho0);
      } catch (const DegeneracyError&) {
        throw DegeneracyError("build_regime_corr: singular cross-lag system for pair (" + std::to_string(i + 1) +
                              "," + std::to_string(j + 1) + ")");
      }
      auto& full = cross[i][j];
      full.assign(2 * k + 1, 0.0);
      for (std::size_t m = 0; m < k; ++m) full[m] = lags[m];
      full[k] = rho0;
      for (std::size_t m = 0; m < k; ++m) full[k + 1 + m] = lags[k + m];
    }
  }

  RegimeCorr out;
  out.d = d;
  const auto n = static_cast<Eigen::Index>(nb * d);
  out.matrix.resize(n, n);
  for (std::size_t la = 0; la < nb; ++la) {
    for (std::size_t lb = 0; lb < nb; ++lb) {
      const long m = static_cast<long>(lb) - static_cast<long>(la);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double v;
          if (i == j) {
            v = univ[i].first_row[static_cast<std::size_t>(std::abs(m))];
          } else if (i < j) {
            v = cross[i][j][static_cast<std::size_t>(m + static_cast<long>(k))];
          } else {
            v = cross[j][i][static_cast<std::size_t>(-m + static_cast<long>(k))];
          }
          out.matrix(static_cast<Eigen::Index>(la * d + i), static_cast<Eigen::Index>(lb * d + j)) = v;
        }
      }
    }
  }
  if (require_pd && !is_positive_definite(out.matrix)) {
    throw InfeasibleError("build_regime_corr: block Toeplitz correlation matrix is not positive definite");
  }
  return out;
}

/// Restrict R to the variables in `subset` (0-based, in the given order).
inline RegimeCorr extract_subprocess_corr(const RegimeCorr& r, std::span<const std::size_t> subset) {
  if (subset.empty()) throw DomainError("extract_subprocess_corr: empty index subset");
  std::vector<std::size_t> seen(subset.begin(), subset.end());
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end() || seen.back() >= r.d) {
    throw DomainError("extract_subprocess_corr: indices must be distinct and within range");
  }
  const std::size_t nb = r.blocks(), m = subset.size();
  std::vector<Eigen::Index> idx;
  idx.reserve(nb * m);
  for (std::size_t l = 0; l < nb; ++l) {
    for (std::size_t i : subset) idx.push_back(static_cast<Eigen::Index>(l * r.d + i));
  }
  RegimeCorr out;
  out.d = m;
  out.matrix = r.matrix(idx, idx);
  return out;
}

}  // namespace mcrs
