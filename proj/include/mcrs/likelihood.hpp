#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/margins.hpp"
#include "mcrs/model.hpp"
#include "mcrs/serialcorr.hpp"
#include "mcrs/switchcov.hpp"

namespace mcrs {

/// Regime labels v_1..v_T, stored 0-based.
struct RegimeSequence {
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }

  void validate(std::size_t num_regimes) const {
    if (labels.empty()) throw ShapeError("RegimeSequence: empty sequence");
    for (std::size_t g : labels) {
      if (g >= num_regimes) throw DomainError("RegimeSequence: label exceeds the number of regimes");
    }
  }
};

struct Segment {
  std::size_t regime = 0;
  std::size_t start = 0;  // 0-based time of the first observation
  std::size_t length = 0;
};

/// Maximal constant runs of a regime sequence, in time order.
struct SegmentPartition {
  std::vector<Segment> segments;
  std::size_t total = 0;

  std::size_t switch_count() const { return segments.empty() ? 0 : segments.size() - 1; }

  /// 0-based start times of every run after the first.
  std::vector<std::size_t> switch_times() const {
    std::vector<std::size_t> out;
    for (std::size_t s = 1; s < segments.size(); ++s) out.push_back(segments[s].start);
    return out;
  }
};

inline SegmentPartition partition_segments(const RegimeSequence& v) {
  SegmentPartition p;
  p.total = v.size();
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (p.segments.empty() || p.segments.back().regime != v.labels[t]) {
      p.segments.push_back({v.labels[t], t, 1});
    } else {
      ++p.segments.back().length;
    }
  }
  return p;
}

inline RegimeSequence reconstruct(const SegmentPartition& p) {
  RegimeSequence v;
  v.labels.reserve(p.total);
  for (const auto& s : p.segments) v.labels.insert(v.labels.end(), s.length, s.regime);
  return v;
}

// ---------------------------------------------------------------------------
// Normal scores under every regime's margins

/// y[g](t,i) = Phi^{-1}(F_{i,g}(x_{t,i})); log_jac[g][t] = sum_i log a'_{i,g}(x_{t,i}).
struct TransformedSeries {
  std::size_t T = 0;
  std::size_t d = 0;
  std::vector<Matrix> y;
  std::vector<Vector> log_jac;
  std::size_t clamped = 0;
};

inline TransformedSeries transform_series(const Matrix& x, const RegimeModel& m) {
  if (static_cast<std::size_t>(x.cols()) != m.dim) throw ShapeError("transform_series: column count differs from model dimension");
  TransformedSeries ts;
  ts.T = static_cast<std::size_t>(x.rows());
  ts.d = m.dim;
  for (std::size_t g = 0; g < m.num_regimes; ++g) {
    Matrix y(x.rows(), x.cols());
    Vector lj = Vector::Zero(x.rows());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      for (Eigen::Index i = 0; i < x.cols(); ++i) {
        const MarginParams& eta = m.margins[g][static_cast<std::size_t>(i)];
        const GaussScore s = pit_to_normal(x(t, i), eta);
        if (s.clamped) ++ts.clamped;
        y(t, i) = s.value;
        lj[t] += skewt_logpdf(x(t, i), eta) - detail::normal_logpdf(s.value);
      }
    }
    ts.y.push_back(std::move(y));
    ts.log_jac.push_back(std::move(lj));
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Conditional emission densities per label pattern

/**
 * For every label pattern of length m = 1..k+1 (oldest label the most
 * significant base-G digit), the conditional law of the newest normal-score
 * block given the m-1 older ones. Feasibility means every length-(k+1)
 * window is positive definite; shorter windows are principal submatrices.
 */
class WindowPatterns {
 public:
  struct Entry {
    Matrix coef;  // d x (m-1)d, lag 1 first
    Matrix chol;  // lower Cholesky factor of the innovation covariance
    double log_norm = 0.0;
  };

  explicit WindowPatterns(const RegimeModel& m, bool require_feasible = true)
      : g_(m.num_regimes), d_(m.dim), k1_(m.markov_order() + 1) {
    std::vector<RegimeCorr> corrs;
    try {
      corrs = regime_corrs(m, k1_ - 1, false);
    } catch (const DegeneracyError& e) {
      violation_ = 1.0;
      message_ = e.what();
      if (require_feasible) throw InfeasibleError(message_);
      return;
    }
    const SwitchCorr sw{m.switch_rho};
    const std::size_t full = ipow(g_, k1_);
    for (std::size_t code = 0; code < full; ++code) {
      const RegimeWindow w = decode(k1_, code);
      const WindowCorr wc = build_window_corr(w, corrs, sw, false);
      if (!is_positive_definite(wc.matrix)) {
        violation_ += std::max(1e-10 - min_eigenvalue(wc.matrix), 1e-10);
        if (message_.empty()) message_ = "window correlation is not positive definite for labels " + w.describe();
      }
    }
    if (violation_ > 0.0) {
      if (require_feasible) throw InfeasibleError("WindowPatterns: " + message_);
      return;
    }
    entries_.resize(k1_ + 1);
    for (std::size_t len = 1; len <= k1_; ++len) {
      const std::size_t count = ipow(g_, len);
      entries_[len].resize(count);
      for (std::size_t code = 0; code < count; ++code) {
        const WindowCorr wc = build_window_corr(decode(len, code), corrs, sw, false);
        const StochasticRep rep = conditional_rep(wc);
        Entry& e = entries_[len][code];
        e.coef = rep.stacked();
        Eigen::LLT<Matrix> llt(rep.innovation);
        if (llt.info() != Eigen::Success) throw InfeasibleError("WindowPatterns: innovation covariance is singular");
        e.chol = llt.matrixL();
        e.log_norm = -0.5 * static_cast<double>(d_) * kLog2Pi - e.chol.diagonal().array().log().sum();
      }
    }
  }

  bool feasible() const { return violation_ == 0.0; }
  /// Sum over infeasible full-length patterns of how far the smallest eigenvalue falls short.
  double violation() const { return violation_; }
  const std::string& message() const { return message_; }

  std::size_t regimes() const { return g_; }
  std::size_t dim() const { return d_; }
  /// Tuple length k+1.
  std::size_t tuple_length() const { return k1_; }

  const Entry& entry(std::size_t len, std::size_t code) const { return entries_.at(len).at(code); }

  /// Log emission density of observation t (0-based) given the labels of
  /// times t-len+1..t encoded in `code`.
  double emission(const TransformedSeries& ts, std::size_t t, std::size_t len, std::size_t code) const {
    const Entry& e = entries_[len][code];
    const auto d = static_cast<Eigen::Index>(d_);
    std::size_t c = code;
    const std::size_t g0 = c % g_;
    Vector resid = ts.y[g0].row(static_cast<Eigen::Index>(t)).transpose();
    for (std::size_t l = 1; l < len; ++l) {
      c /= g_;
      const std::size_t gl = c % g_;
      resid.noalias() -= e.coef.middleCols(static_cast<Eigen::Index>(l - 1) * d, d) *
                         ts.y[gl].row(static_cast<Eigen::Index>(t - l)).transpose();
    }
    e.chol.triangularView<Eigen::Lower>().solveInPlace(resid);
    return e.log_norm - 0.5 * resid.squaredNorm() + ts.log_jac[g0][static_cast<Eigen::Index>(t)];
  }

  RegimeWindow decode(std::size_t len, std::size_t code) const {
    RegimeWindow w;
    w.labels.resize(len);
    for (std::size_t j = len; j-- > 0;) {
      w.labels[j] = code % g_;
      code /= g_;
    }
    return w;
  }

  std::size_t encode(std::span<const std::size_t> labels) const {
    std::size_t code = 0;
    for (std::size_t g : labels) code = code * g_ + g;
    return code;
  }

  static std::size_t ipow(std::size_t base, std::size_t e) {
    std::size_t r = 1;
    while (e--) r *= base;
    return r;
  }

 private:
  std::size_t g_, d_, k1_;
  double violation_ = 0.0;
  std::string message_;
  std::vector<std::vector<Entry>> entries_;
};

/// Complete log-likelihood as a sum of cached conditional emissions.
inline double complete_loglik(const TransformedSeries& ts, const WindowPatterns& wp, const RegimeSequence& v) {
  if (v.size() != ts.T) throw ShapeError("complete_loglik: regime sequence length differs from series length");
  double total = 0.0;
  const std::size_t k1 = wp.tuple_length();
  for (std::size_t t = 0; t < ts.T; ++t) {
    const std::size_t len = std::min(t + 1, k1);
    const std::size_t code = wp.encode(std::span<const std::size_t>(v.labels).subspan(t + 1 - len, len));
    total += wp.emission(ts, t, len, code);
  }
  return total;
}

/**
 * Complete-data log-likelihood given the regime sequence: joint density of
 * the first k+1 observations, then for each later t the window density of
 * t-k..t minus that of t-k..t-1. Evaluated from full window matrices,
 * independently of the cached conditional representations.
 */
inline double complete_loglik(const Matrix& x, const RegimeSequence& v, const RegimeModel& m) {
  m.validate();
  v.validate(m.num_regimes);
  if (static_cast<std::size_t>(x.rows()) != v.size()) {
    throw ShapeError("complete_loglik: regime sequence length differs from series length");
  }
  const TransformedSeries ts = transform_series(x, m);
  const std::size_t k = m.markov_order(), d = m.dim, T = v.size();
  const auto corrs = regime_corrs(m, k);
  const SwitchCorr sw{m.switch_rho};
  std::map<std::vector<std::size_t>, Eigen::LLT<Matrix>> cache;

  auto window_density = [&](std::size_t first, std::size_t last) {
    RegimeWindow w;
    w.labels.assign(v.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    v.labels.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    auto it = cache.find(w.labels);
    if (it == cache.end()) {
      const WindowCorr wc = build_window_corr(w, corrs, sw);
      it = cache.emplace(w.labels, Eigen::LLT<Matrix>(wc.matrix)).first;
    }
    const std::size_t len = last - first + 1;
    Vector y(static_cast<Eigen::Index>(len * d));
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t t = last - l;
      y.segment(static_cast<Eigen::Index>(l * d), static_cast<Eigen::Index>(d)) =
          ts.y[v.labels[t]].row(static_cast<Eigen::Index>(t)).transpose();
    }
    return gaussian_logdensity(y, it->second);
  };

  double total = window_density(0, std::min(T, k + 1) - 1);
  for (std::size_t t = k + 1; t < T; ++t) total += window_density(t - k, t) - window_density(t - k, t - 1);
  for (std::size_t t = 0; t < T; ++t) total += ts.log_jac[v.labels[t]][static_cast<Eigen::Index>(t)];
  return total;
}

namespace detail {

/// Log-density of a constant-regime run of normal scores (rows oldest first)
/// under a stationary correlation with K = corr.rows()/d blocks: one joint
/// term for runs up to K long, else a joint head plus conditional terms.
inline double stationary_run_logdensity(const Matrix& ys, const Matrix& corr, std::size_t d) {
  const std::size_t n = static_cast<std::size_t>(ys.rows());
  const std::size_t kb = static_cast<std::size_t>(corr.rows()) / d;
  auto stack = [&](std::size_t first, std::size_t last) {
    const std::size_t len = last - first + 1;
    Vector y(static_cast<Eigen::Index>(len * d));
    for (std::size_t l = 0; l < len; ++l) {
      y.segment(static_cast<Eigen::Index>(l * d), static_cast<Eigen::Index>(d)) =
          ys.row(static_cast<Eigen::Index>(last - l)).transpose();
    }
    return y;
  };
  auto factor = [&](std::size_t blocks) {
    const auto sz = static_cast<Eigen::Index>(blocks * d);
    Eigen::LLT<Matrix> llt(corr.topLeftCorner(sz, sz));
    if (llt.info() != Eigen::Success) throw InfeasibleError("segment likelihood: correlation matrix is not positive definite");
    return llt;
  };
  if (n == 0) return 0.0;
  if (n <= kb) return gaussian_logdensity(stack(0, n - 1), factor(n));
  const auto full = factor(kb);
  double total = gaussian_logdensity(stack(0, kb - 1), full);
  if (kb == 1) {
    for (std::size_t t = 1; t < n; ++t) total += gaussian_logdensity(stack(t, t), full);
    return total;
  }
  const auto sub = factor(kb - 1);
  for (std::size_t t = kb; t < n; ++t) {
    total += gaussian_logdensity(stack(t - kb + 1, t), full) - gaussian_logdensity(stack(t - kb + 1, t - 1), sub);
  }
  return total;
}

}  // namespace detail

/// Log-likelihood of segment s alone, with the segment's regime throughout.
inline double segment_loglik_multivariate(const Matrix& x, const SegmentPartition& part, std::size_t s,
                                          const RegimeModel& m) {
  if (s >= part.segments.size()) throw DomainError("segment_loglik_multivariate: segment index out of range");
  const Segment& seg = part.segments[s];
  if (seg.start + seg.length > static_cast<std::size_t>(x.rows())) {
    throw ShapeError("segment_loglik_multivariate: segment exceeds the series");
  }
  const RegimeCorr rg = m.regime_corr(seg.regime);
  Matrix ys(static_cast<Eigen::Index>(seg.length), static_cast<Eigen::Index>(m.dim));
  double log_jac = 0.0;
  for (std::size_t r = 0; r < seg.length; ++r) {
    for (std::size_t i = 0; i < m.dim; ++i) {
      const double xv = x(static_cast<Eigen::Index>(seg.start + r), static_cast<Eigen::Index>(i));
      const MarginParams& eta = m.margins[seg.regime][i];
      const double y = pit_to_normal(xv, eta).value;
      ys(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = y;
      log_jac += skewt_logpdf(xv, eta) - detail::normal_logpdf(y);
    }
  }
  return detail::stationary_run_logdensity(ys, rg.matrix, m.dim) + log_jac;
}

/// Univariate analogue: component x_i over segment s with margin eta and
/// serial correlation r (its dimension sets the window length).
inline double segment_loglik_univariate(std::span<const double> x_i, const SegmentPartition& part, std::size_t s,
                                        const MarginParams& eta, const ToeplitzCorr& r) {
  if (s >= part.segments.size()) throw DomainError("segment_loglik_univariate: segment index out of range");
  const Segment& seg = part.segments[s];
  if (seg.start + seg.length > x_i.size()) throw ShapeError("segment_loglik_univariate: segment exceeds the series");
  Matrix ys(static_cast<Eigen::Index>(seg.length), 1);
  double log_jac = 0.0;
  for (std::size_t t = 0; t < seg.length; ++t) {
    const double xv = x_i[seg.start + t];
    const double y = pit_to_normal(xv, eta).value;
    ys(static_cast<Eigen::Index>(t), 0) = y;
    log_jac += skewt_logpdf(xv, eta) - detail::normal_logpdf(y);
  }
  return detail::stationary_run_logdensity(ys, r.matrix(), 1) + log_jac;
}

}  // namespace mcrs
