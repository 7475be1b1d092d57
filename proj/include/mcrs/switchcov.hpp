#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/margins.hpp"
#include "mcrs/mcvar.hpp"
#include "mcrs/model.hpp"

namespace mcrs {

/// Diagonal switch correlation P = diag(rho_1, ..., rho_d).
struct SwitchCorr {
  std::vector<double> rho;

  void validate() const {
    for (double r : rho) {
      if (!(std::abs(r) < 1.0)) throw DomainError("SwitchCorr: entries must lie in (-1,1)");
    }
  }
  Matrix matrix() const {
    return Eigen::Map<const Vector>(rho.data(), static_cast<Eigen::Index>(rho.size())).asDiagonal();
  }
};

struct Run {
  std::size_t regime = 0;
  std::size_t length = 0;
};

/// Regime labels of a window, oldest first (0-based regimes).
struct RegimeWindow {
  std::vector<std::size_t> labels;

  std::size_t length() const { return labels.size(); }

  /// Maximal constant runs, oldest first.
  std::vector<Run> runs() const {
    std::vector<Run> out;
    for (std::size_t g : labels) {
      if (out.empty() || out.back().regime != g) {
        out.push_back({g, 1});
      } else {
        ++out.back().length;
      }
    }
    return out;
  }

  std::size_t switch_count() const {
    const auto r = runs();
    return r.empty() ? 0 : r.size() - 1;
  }

  std::string describe() const {
    std::string s = "(";
    for (std::size_t n = 0; n < labels.size(); ++n) {
      if (n) s += ",";
      s += std::to_string(labels[n] + 1);
    }
    return s + ")";
  }
};

/// Correlation matrix of (Y_t, Y_{t-1}, ..., Y_{t-w+1}) given the labels, newest block first.
struct WindowCorr {
  Matrix matrix;
  std::size_t d = 0;

  std::size_t blocks() const { return d == 0 ? 0 : static_cast<std::size_t>(matrix.rows()) / d; }
};

/**
 * Window correlation across regime switches. Each run of length e in regime
 * g contributes the leading e*d block of R_g on the diagonal. The oldest
 * block of every newer run has covariance P times that of the block just
 * before it with everything older; later blocks of the run are uncorrelated
 * with everything before the run. With one switch this is the banded form
 * whose only off-diagonal block is P times the first block row of the older
 * run; with short interior runs it also links non-adjacent runs, which keeps
 * every window Markov of the model order.
 */
inline WindowCorr build_window_corr(const RegimeWindow& window, std::span<const RegimeCorr> regime_corrs,
                                    const SwitchCorr& sw, bool require_pd = true) {
  if (window.labels.empty()) throw ShapeError("build_window_corr: empty window");
  if (regime_corrs.empty()) throw ShapeError("build_window_corr: no regime correlation matrices");
  const std::size_t d = regime_corrs.front().d;
  if (sw.rho.size() != d) throw ShapeError("build_window_corr: switch correlation has the wrong dimension");
  sw.validate();
  for (std::size_t g : window.labels) {
    if (g >= regime_corrs.size()) throw DomainError("build_window_corr: regime label out of range");
  }

  const std::size_t w = window.length();
  const auto dd = static_cast<Eigen::Index>(d);
  const auto n = static_cast<Eigen::Index>(w * d);
  const Matrix p = sw.matrix();
  // Chronological blocks (oldest first) while building; reversed at the end.
  Matrix c = Matrix::Zero(n, n);
  auto at = [dd](std::size_t blk) { return static_cast<Eigen::Index>(blk) * dd; };
  std::size_t start = 0;
  for (const Run& run : window.runs()) {
    const RegimeCorr& rg = regime_corrs[run.regime];
    if (rg.d != d || rg.blocks() < run.length) {
      throw ShapeError("build_window_corr: regime correlation matrix has too few lag blocks");
    }
    for (std::size_t i = 0; i < run.length; ++i) {
      for (std::size_t j = 0; j < run.length; ++j) {
        c.block(at(start + i), at(start + j), dd, dd) = rg.block(run.length - 1 - i, run.length - 1 - j);
      }
    }
    if (start > 0) {
      const Matrix link = p * c.block(at(start - 1), 0, dd, at(start));
      c.block(at(start), 0, dd, at(start)) = link;
      c.block(0, at(start), at(start), dd) = link.transpose();
    }
    start += run.length;
  }

  WindowCorr out;
  out.d = d;
  out.matrix.resize(n, n);
  for (std::size_t i = 0; i < w; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      out.matrix.block(at(i), at(j), dd, dd) = c.block(at(w - 1 - i), at(w - 1 - j), dd, dd);
    }
  }
  if (require_pd && !is_positive_definite(out.matrix)) {
    throw InfeasibleError("build_window_corr: window correlation is not positive definite for labels " +
                          window.describe());
  }
  return out;
}

/// Y_t = sum_l Phi_l Y_{t-l} + eps_t with eps_t ~ N(0, innovation).
struct StochasticRep {
  std::vector<Matrix> coefficients;  // Phi_1 (lag 1) first
  Matrix innovation;

  /// Coefficients side by side, d x (lags*d), matching newest-first stacking of the past.
  Matrix stacked() const {
    if (coefficients.empty()) return Matrix(innovation.rows(), 0);
    const Eigen::Index d = innovation.rows();
    Matrix out(d, d * static_cast<Eigen::Index>(coefficients.size()));
    for (std::size_t l = 0; l < coefficients.size(); ++l) {
      out.block(0, static_cast<Eigen::Index>(l) * d, d, d) = coefficients[l];
    }
    return out;
  }
};

/// Conditional distribution of the newest block given the older blocks.
inline StochasticRep conditional_rep(const WindowCorr& w) {
  const auto d = static_cast<Eigen::Index>(w.d);
  const Eigen::Index n = w.matrix.rows();
  if (d == 0 || n % d != 0) throw ShapeError("conditional_rep: malformed window matrix");
  StochasticRep rep;
  const Matrix s11 = w.matrix.topLeftCorner(d, d);
  if (n == d) {
    rep.innovation = s11;
    return rep;
  }
  const Matrix s21 = w.matrix.bottomLeftCorner(n - d, d);
  const Matrix s22 = w.matrix.bottomRightCorner(n - d, n - d);
  Eigen::LLT<Matrix> llt(s22);
  if (llt.info() != Eigen::Success || !is_positive_definite(s22, 1e-12)) {
    throw DegeneracyError("conditional_rep: conditioning block is singular");
  }
  const Matrix bt = llt.solve(s21);  // (Sigma12 Sigma22^{-1})^T
  rep.innovation = s11 - bt.transpose() * s21;
  rep.innovation = 0.5 * (rep.innovation + rep.innovation.transpose());
  const Eigen::Index lags = (n - d) / d;
  for (Eigen::Index l = 0; l < lags; ++l) rep.coefficients.push_back(bt.middleRows(l * d, d).transpose());
  return rep;
}

/// Zero-mean Gaussian log-density with correlation W.
inline double window_logdensity(const Vector& y, const WindowCorr& w) {
  if (y.size() != w.matrix.rows()) throw ShapeError("window_logdensity: vector length differs from window size");
  Eigen::LLT<Matrix> llt(w.matrix);
  if (llt.info() != Eigen::Success) throw InfeasibleError("window_logdensity: window matrix is not positive definite");
  return gaussian_logdensity(y, llt);
}

/// Regime correlation matrices of a model over `lags` lags (R_g, newest block first).
inline std::vector<RegimeCorr> regime_corrs(const RegimeModel& m, std::size_t lags, bool require_pd = true) {
  std::vector<RegimeCorr> out;
  out.reserve(m.num_regimes);
  for (std::size_t g = 0; g < m.num_regimes; ++g) out.push_back(m.regime_corr(g, lags, require_pd));
  return out;
}

/**
 * Log-density of a window of observations (rows oldest first) given their
 * labels: Gaussian window density of the normal scores plus the log
 * Jacobians of the margin transforms. `clamped` counts PIT clamps.
 */
inline double obs_window_logdensity(const Matrix& x, const RegimeWindow& window, const RegimeModel& m,
                                    std::size_t* clamped = nullptr) {
  const std::size_t w = window.length();
  if (static_cast<std::size_t>(x.rows()) != w || static_cast<std::size_t>(x.cols()) != m.dim) {
    throw ShapeError("obs_window_logdensity: observation window shape does not match labels and model");
  }
  const auto corrs = regime_corrs(m, std::max(w - 1, m.markov_order()));
  const WindowCorr wc = build_window_corr(window, corrs, SwitchCorr{m.switch_rho});
  const std::size_t d = m.dim;
  Vector y(static_cast<Eigen::Index>(w * d));
  double log_jac = 0.0;
  for (std::size_t r = 0; r < w; ++r) {
    const std::size_t g = window.labels[r];
    const std::size_t block = w - 1 - r;  // newest first
    for (std::size_t i = 0; i < d; ++i) {
      const double xv = x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
      const GaussScore s = pit_to_normal(xv, m.margins[g][i]);
      if (s.clamped && clamped) ++*clamped;
      y[static_cast<Eigen::Index>(block * d + i)] = s.value;
      log_jac += skewt_logpdf(xv, m.margins[g][i]) - detail::normal_logpdf(s.value);
    }
  }
  return window_logdensity(y, wc) + log_jac;
}

}  // namespace mcrs
