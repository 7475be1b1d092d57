#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/margins.hpp"
#include "mcrs/mcvar.hpp"
#include "mcrs/serialcorr.hpp"

namespace mcrs {

/// Initial distribution and transition matrix of the latent regime chain.
struct ChainParams {
  Vector initial;
  Matrix transition;

  std::size_t regimes() const { return static_cast<std::size_t>(initial.size()); }

  void validate() const {
    const Eigen::Index g = initial.size();
    if (g == 0 || transition.rows() != g || transition.cols() != g) {
      throw ShapeError("ChainParams: initial vector and transition matrix disagree in size");
    }
    auto check_row = [](const auto& row, const char* what) {
      if ((row.array() < 0.0).any() || !row.allFinite() || std::abs(row.sum() - 1.0) > 1e-9) {
        throw DomainError(std::string("ChainParams: ") + what + " must be a probability vector");
      }
    };
    check_row(initial.transpose(), "initial distribution");
    for (Eigen::Index r = 0; r < g; ++r) check_row(transition.row(r), "transition row");
  }

  static ChainParams uniform(std::size_t g, double stay = 0.9) {
    ChainParams c;
    const auto n = static_cast<Eigen::Index>(g);
    c.initial = Vector::Constant(n, 1.0 / static_cast<double>(g));
    if (g == 1) {
      c.transition = Matrix::Ones(1, 1);
    } else {
      c.transition = Matrix::Constant(n, n, (1.0 - stay) / static_cast<double>(g - 1));
      c.transition.diagonal().setConstant(stay);
    }
    return c;
  }
};

/**
 * Full parameter set of the regime-switching model. Regimes and variables are
 * 0-based here; files and the CLI use 1-based regime labels.
 *
 * Per regime g and variable i: margin eta_{i,g}, within-regime AR order
 * k_{i,g} with partial autocorrelations (length k_{i,g}), and per regime the
 * contemporaneous correlation matrix. The switch correlations rho_1..rho_d
 * are shared by every regime change. The process is Markov of order
 * k = max k_{i,g} + 1.
 */
struct RegimeModel {
  std::size_t num_regimes = 1;
  std::size_t dim = 1;
  std::vector<std::vector<std::size_t>> orders;        // [g][i]
  std::vector<std::vector<MarginParams>> margins;      // [g][i]
  std::vector<std::vector<std::vector<double>>> pacf;  // [g][i][lag-1]
  std::vector<Matrix> contemp;                         // [g]
  std::vector<double> switch_rho;                      // [i]
  ChainParams chain;

  /// A model with standard-normal margins, zero dependence and the given order everywhere.
  static RegimeModel independent(std::size_t g, std::size_t d, std::size_t order = 0) {
    RegimeModel m;
    m.num_regimes = g;
    m.dim = d;
    m.orders.assign(g, std::vector<std::size_t>(d, order));
    m.margins.assign(g, std::vector<MarginParams>(d, MarginParams{0.0, 1.0, 1e4, 1e4}));
    m.pacf.assign(g, std::vector<std::vector<double>>(d, std::vector<double>(order, 0.0)));
    m.contemp.assign(g, Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
    m.switch_rho.assign(d, 0.0);
    m.chain = ChainParams::uniform(g);
    return m;
  }

  std::size_t regime_order(std::size_t g) const {
    return *std::max_element(orders.at(g).begin(), orders.at(g).end());
  }

  std::size_t markov_order() const {
    std::size_t k = 0;
    for (std::size_t g = 0; g < num_regimes; ++g) k = std::max(k, regime_order(g));
    return k + 1;
  }

  /// Serial correlation matrix of variable i in regime g over `lags` lags
  /// (partial autocorrelations beyond k_{i,g} are zero).
  ToeplitzCorr univariate_corr(std::size_t g, std::size_t i, std::size_t lags) const {
    std::vector<double> full(lags, 0.0);
    const auto& p = pacf.at(g).at(i);
    std::copy_n(p.begin(), std::min(p.size(), lags), full.begin());
    return pacf_to_acf(full);
  }

  RegimeCorr regime_corr(std::size_t g, std::size_t lags, bool require_pd = true) const {
    std::vector<ToeplitzCorr> univ;
    univ.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) univ.push_back(univariate_corr(g, i, lags));
    return build_regime_corr(univ, contemp.at(g), require_pd);
  }

  RegimeCorr regime_corr(std::size_t g) const { return regime_corr(g, markov_order()); }

  /// Shape and range checks. Positive definiteness of the assembled
  /// correlation structures is checked separately (see WindowPatterns).
  void validate() const {
    if (num_regimes == 0 || dim == 0) throw ShapeError("RegimeModel: needs at least one regime and variable");
    const auto sized = [&](const auto& v, std::size_t n) { return v.size() == n; };
    if (!sized(orders, num_regimes) || !sized(margins, num_regimes) || !sized(pacf, num_regimes) ||
        !sized(contemp, num_regimes) || !sized(switch_rho, dim)) {
      throw ShapeError("RegimeModel: per-regime or per-variable arrays have the wrong length");
    }
    for (std::size_t g = 0; g < num_regimes; ++g) {
      if (!sized(orders[g], dim) || !sized(margins[g], dim) || !sized(pacf[g], dim)) {
        throw ShapeError("RegimeModel: per-variable arrays have the wrong length");
      }
      for (std::size_t i = 0; i < dim; ++i) {
        margins[g][i].validate();
        if (pacf[g][i].size() != orders[g][i]) {
          throw ShapeError("RegimeModel: partial autocorrelation count must equal the AR order");
        }
        for (double a : pacf[g][i]) {
          if (!(std::abs(a) < 1.0)) throw DomainError("RegimeModel: partial autocorrelation outside (-1,1)");
        }
      }
      detail::validate_contemp(contemp[g], dim);
    }
    for (double r : switch_rho) {
      if (!(std::abs(r) < 1.0)) throw DomainError("RegimeModel: switch correlation outside (-1,1)");
    }
    chain.validate();
    if (chain.regimes() != num_regimes) throw ShapeError("RegimeModel: chain size differs from regime count");
  }

  /// Sub-model on the variables in `subset` (0-based, in the given order).
  RegimeModel subset(std::span<const std::size_t> vars) const {
    if (vars.empty()) throw DomainError("RegimeModel::subset: empty variable subset");
    RegimeModel m;
    m.num_regimes = num_regimes;
    m.dim = vars.size();
    m.chain = chain;
    m.orders.resize(num_regimes);
    m.margins.resize(num_regimes);
    m.pacf.resize(num_regimes);
    m.contemp.resize(num_regimes);
    std::vector<Eigen::Index> idx;
    for (std::size_t v : vars) {
      if (v >= dim) throw DomainError("RegimeModel::subset: variable index out of range");
      idx.push_back(static_cast<Eigen::Index>(v));
    }
    for (std::size_t g = 0; g < num_regimes; ++g) {
      for (std::size_t v : vars) {
        m.orders[g].push_back(orders[g][v]);
        m.margins[g].push_back(margins[g][v]);
        m.pacf[g].push_back(pacf[g][v]);
      }
      m.contemp[g] = contemp[g](idx, idx);
    }
    for (std::size_t v : vars) m.switch_rho.push_back(switch_rho[v]);
    return m;
  }

  /// Reorder regimes: regime g of the result is regime perm[g] of this model.
  RegimeModel permuted(std::span<const std::size_t> perm) const {
    RegimeModel m = *this;
    for (std::size_t g = 0; g < num_regimes; ++g) {
      const std::size_t src = perm[g];
      m.orders[g] = orders[src];
      m.margins[g] = margins[src];
      m.pacf[g] = pacf[src];
      m.contemp[g] = contemp[src];
      m.chain.initial[static_cast<Eigen::Index>(g)] = chain.initial[static_cast<Eigen::Index>(src)];
      for (std::size_t h = 0; h < num_regimes; ++h) {
        m.chain.transition(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) =
            chain.transition(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(perm[h]));
      }
    }
    return m;
  }
};

/// Common within-regime order for every (regime, variable).
inline std::vector<std::vector<std::size_t>> uniform_orders(std::size_t g, std::size_t d, std::size_t order) {
  return std::vector<std::vector<std::size_t>>(g, std::vector<std::size_t>(d, order));
}

// ---------------------------------------------------------------------------
// Unconstrained coordinates for correlation parameters

/// Correlation matrix from canonical partial correlations z_{ij} in (-1,1)
/// (row-major over i > j). The Cholesky factor is built row by row, so any
/// z in (-1,1)^{d(d-1)/2} gives a positive definite matrix.
inline Matrix corr_from_partials(std::span<const double> z, std::size_t d) {
  if (z.size() != d * (d - 1) / 2) throw ShapeError("corr_from_partials: wrong coordinate count");
  const auto n = static_cast<Eigen::Index>(d);
  Matrix l = Matrix::Zero(n, n);
  l(0, 0) = 1.0;
  std::size_t pos = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    double remaining = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      l(i, j) = z[pos++] * std::sqrt(remaining);
      remaining -= l(i, j) * l(i, j);
    }
    l(i, i) = std::sqrt(std::max(remaining, 0.0));
  }
  Matrix r = l * l.transpose();
  r.diagonal().setOnes();
  return r;
}

/// Inverse of corr_from_partials for a positive definite correlation matrix.
inline std::vector<double> partials_from_corr(const Matrix& r) {
  const Eigen::Index n = r.rows();
  Eigen::LLT<Matrix> llt(r);
  if (llt.info() != Eigen::Success) throw InfeasibleError("partials_from_corr: matrix is not positive definite");
  const Matrix l = llt.matrixL();
  std::vector<double> z;
  for (Eigen::Index i = 1; i < n; ++i) {
    double remaining = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      z.push_back(l(i, j) / std::sqrt(remaining));
      remaining -= l(i, j) * l(i, j);
    }
  }
  return z;
}

}  // namespace mcrs
