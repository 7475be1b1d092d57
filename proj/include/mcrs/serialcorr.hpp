#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"

namespace mcrs {

/// Toeplitz correlation matrix of (Z_t, ..., Z_{t-k}) for a stationary
/// univariate series, stored by its first row (1, rho_1, ..., rho_k).
struct ToeplitzCorr {
  std::vector<double> first_row{1.0};

  std::size_t dim() const { return first_row.size(); }
  std::size_t max_lag() const { return first_row.size() - 1; }
  double lag(std::size_t h) const { return first_row.at(h); }

  Matrix matrix() const {
    const auto n = static_cast<Eigen::Index>(dim());
    Matrix m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        m(r, c) = first_row[static_cast<std::size_t>(std::abs(r - c))];
      }
    }
    return m;
  }
};

/// Durbin-Levinson: partial autocorrelations (lags 1..k) to autocorrelations.
inline ToeplitzCorr pacf_to_acf(std::span<const double> pacf) {
  const std::size_t k = pacf.size();
  ToeplitzCorr out;
  out.first_row.assign(k + 1, 0.0);
  out.first_row[0] = 1.0;
  std::vector<double> phi, next;
  phi.reserve(k);
  for (std::size_t m = 1; m <= k; ++m) {
    const double a = pacf[m - 1];
    if (!(std::abs(a) < 1.0)) throw DomainError("pacf_to_acf: partial autocorrelation outside (-1,1)");
    double fitted = 0.0, resid = 1.0;
    for (std::size_t j = 0; j + 1 < m; ++j) {
      fitted += phi[j] * out.first_row[m - 1 - j];
      resid -= phi[j] * out.first_row[j + 1];
    }
    out.first_row[m] = fitted + a * resid;
    next.assign(m, 0.0);
    for (std::size_t j = 0; j + 1 < m; ++j) next[j] = phi[j] - a * phi[m - 2 - j];
    next[m - 1] = a;
    phi.swap(next);
  }
  return out;
}

/// Inverse Levinson recursion. Throws when the Toeplitz matrix is not positive definite.
inline std::vector<double> acf_to_pacf(const ToeplitzCorr& acf) {
  const std::size_t k = acf.max_lag();
  if (acf.first_row.empty() || std::abs(acf.first_row[0] - 1.0) > 1e-12) {
    throw DomainError("acf_to_pacf: first entry must be 1");
  }
  std::vector<double> pacf(k, 0.0), phi, next;
  for (std::size_t m = 1; m <= k; ++m) {
    double num = acf.first_row[m], den = 1.0;
    for (std::size_t j = 0; j + 1 < m; ++j) {
      num -= phi[j] * acf.first_row[m - 1 - j];
      den -= phi[j] * acf.first_row[j + 1];
    }
    if (!(den > 0.0)) throw DomainError("acf_to_pacf: Toeplitz matrix is not positive definite");
    const double a = num / den;
    if (!(std::abs(a) < 1.0)) throw DomainError("acf_to_pacf: Toeplitz matrix is not positive definite");
    pacf[m - 1] = a;
    next.assign(m, 0.0);
    for (std::size_t j = 0; j + 1 < m; ++j) next[j] = phi[j] - a * phi[m - 2 - j];
    next[m - 1] = a;
    phi.swap(next);
  }
  return pacf;
}

/// AR(p) coefficients phi_1..phi_p from the Yule-Walker equations on the
/// leading (p+1)x(p+1) block of the Toeplitz matrix.
inline std::vector<double> yule_walker(const ToeplitzCorr& acf, std::size_t p) {
  if (p > acf.max_lag()) throw DomainError("yule_walker: order exceeds available lags");
  if (p == 0) return {};
  Matrix gamma(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  Vector rhs(static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < p; ++r) {
    rhs[static_cast<Eigen::Index>(r)] = acf.first_row[r + 1];
    for (std::size_t c = 0; c < p; ++c) {
      gamma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          acf.first_row[r > c ? r - c : c - r];
    }
  }
  Eigen::LLT<Matrix> llt(gamma);
  if (llt.info() != Eigen::Success) throw DomainError("yule_walker: autocorrelations not positive definite");
  const Vector phi = llt.solve(rhs);
  return {phi.data(), phi.data() + phi.size()};
}

/// Sample autocorrelations up to max_lag (biased estimator, which keeps the
/// implied Toeplitz matrix positive semi-definite).
inline ToeplitzCorr sample_acf(std::span<const double> xs, std::size_t max_lag) {
  const std::size_t n = xs.size();
  if (n < 2) throw InsufficientDataError("sample_acf: need at least two observations");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double x : xs) c0 += (x - mean) * (x - mean);
  ToeplitzCorr out;
  out.first_row.assign(max_lag + 1, 0.0);
  out.first_row[0] = 1.0;
  if (c0 <= 0.0) return out;
  for (std::size_t h = 1; h <= max_lag && h < n; ++h) {
    double ch = 0.0;
    for (std::size_t t = h; t < n; ++t) ch += (xs[t] - mean) * (xs[t - h] - mean);
    out.first_row[h] = ch / c0;
  }
  return out;
}

}  // namespace mcrs
