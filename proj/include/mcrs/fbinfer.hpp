#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/likelihood.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/model.hpp"

namespace mcrs {

/// Smoothing and confirmation settings for regime dating.
struct UpdateConfig {
  std::size_t tau = 0;
  std::size_t nu = 3;
  double xi = 0.8;

  void validate() const {
    if (nu < 1) throw DomainError("UpdateConfig: nu must be at least 1");
    if (!(xi > 0.0 && xi < 1.0)) throw DomainError("UpdateConfig: xi must lie in (0,1)");
  }
};

/**
 * Log emission densities over regime tuples. At 0-based time t the tuple
 * holds the labels of the last min(t+1, L) times, oldest label the most
 * significant base-G digit, where L is the tuple length (at least 2).
 */
struct EmissionTable {
  std::size_t regimes = 1;
  std::size_t tuple_length = 2;
  std::vector<std::vector<double>> log_e;  // [t][code]

  std::size_t T() const { return log_e.size(); }
  std::size_t length_at(std::size_t t) const { return std::min(t + 1, tuple_length); }
};

inline EmissionTable emission_table(const TransformedSeries& ts, const WindowPatterns& wp) {
  EmissionTable et;
  et.regimes = wp.regimes();
  et.tuple_length = wp.tuple_length();
  et.log_e.resize(ts.T);
  for (std::size_t t = 0; t < ts.T; ++t) {
    const std::size_t len = et.length_at(t);
    const std::size_t count = WindowPatterns::ipow(et.regimes, len);
    et.log_e[t].resize(count);
    for (std::size_t code = 0; code < count; ++code) et.log_e[t][code] = wp.emission(ts, t, len, code);
  }
  return et;
}

inline EmissionTable emission_table(const Matrix& x, const RegimeModel& m) {
  m.validate();
  const WindowPatterns wp(m);
  return emission_table(transform_series(x, m), wp);
}

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double a : v) mx = std::max(mx, a);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

}  // namespace detail

using LogTables = std::vector<std::vector<double>>;

inline LogTables forward(const EmissionTable& et, const ChainParams& chain) {
  const std::size_t G = et.regimes, T = et.T();
  if (T == 0) throw ShapeError("forward: empty series");
  if (et.tuple_length < 2) throw DomainError("forward: tuple length must be at least 2");
  if (chain.regimes() != G) throw ShapeError("forward: chain size differs from emission table");
  Matrix log_m = chain.transition.unaryExpr([](double p) { return detail::safe_log(p); });
  LogTables alpha(T);
  alpha[0].resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    alpha[0][g] = detail::safe_log(chain.initial[static_cast<Eigen::Index>(g)]) + et.log_e[0][g];
  }
  const std::size_t top = WindowPatterns::ipow(G, et.tuple_length - 1);
  std::vector<double> terms(G);
  for (std::size_t t = 1; t < T; ++t) {
    const std::size_t len = et.length_at(t);
    const bool growing = len > et.length_at(t - 1);
    auto& a = alpha[t];
    a.resize(et.log_e[t].size());
    for (std::size_t idx = 0; idx < a.size(); ++idx) {
      const std::size_t prev_tail = idx / G;
      const double trans = log_m(static_cast<Eigen::Index>(prev_tail % G), static_cast<Eigen::Index>(idx % G));
      double reach;
      if (growing) {
        reach = alpha[t - 1][prev_tail];
      } else {
        for (std::size_t g = 0; g < G; ++g) terms[g] = alpha[t - 1][g * top + prev_tail];
        reach = detail::log_sum_exp(terms);
      }
      a[idx] = reach + trans + et.log_e[t][idx];
    }
  }
  return alpha;
}

inline LogTables backward(const EmissionTable& et, const ChainParams& chain) {
  const std::size_t G = et.regimes, T = et.T();
  if (T == 0) throw ShapeError("backward: empty series");
  if (et.tuple_length < 2) throw DomainError("backward: tuple length must be at least 2");
  if (chain.regimes() != G) throw ShapeError("backward: chain size differs from emission table");
  Matrix log_m = chain.transition.unaryExpr([](double p) { return detail::safe_log(p); });
  LogTables beta(T);
  beta[T - 1].assign(et.log_e[T - 1].size(), 0.0);
  const std::size_t top = WindowPatterns::ipow(G, et.tuple_length - 1);
  std::vector<double> terms(G);
  for (std::size_t t = T - 1; t-- > 0;) {
    const bool growing = et.length_at(t + 1) > et.length_at(t);
    auto& b = beta[t];
    b.resize(et.log_e[t].size());
    for (std::size_t idx = 0; idx < b.size(); ++idx) {
      const std::size_t base = (growing ? idx : idx % top) * G;
      for (std::size_t g = 0; g < G; ++g) {
        const std::size_t next = base + g;
        terms[g] = log_m(static_cast<Eigen::Index>(idx % G), static_cast<Eigen::Index>(g)) +
                   et.log_e[t + 1][next] + beta[t + 1][next];
      }
      b[idx] = detail::log_sum_exp(terms);
    }
  }
  return beta;
}

/// Forward-backward result: tables, marginal log-likelihood and tuple posteriors.
struct Smoother {
  EmissionTable emissions;
  LogTables log_alpha;
  LogTables log_beta;
  double loglik = 0.0;

  /// Posterior probabilities over the tuple at time t.
  std::vector<double> tuple_posterior(std::size_t t) const {
    std::vector<double> p(log_alpha[t].size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_alpha[t][i] + log_beta[t][i] - loglik);
    return p;
  }
};

inline Smoother smooth(EmissionTable et, const ChainParams& chain) {
  Smoother s;
  s.log_alpha = forward(et, chain);
  s.log_beta = backward(et, chain);
  s.loglik = detail::log_sum_exp(s.log_alpha.back());
  if (!std::isfinite(s.loglik)) throw DegeneracyError("smooth: observations have zero likelihood under the model");
  s.emissions = std::move(et);
  return s;
}

/// Log-likelihood of the observations with the regime path summed out.
inline double marginal_loglik(const EmissionTable& et, const ChainParams& chain) {
  return detail::log_sum_exp(forward(et, chain).back());
}

inline double marginal_loglik(const Matrix& x, const RegimeModel& m) {
  return marginal_loglik(emission_table(x, m), m.chain);
}

/// p_{t,tau}(g) = P(V_t = ... = V_{t+tau} = g | x) as a T x G matrix. Near the
/// end of the series the run is cut at T.
inline Matrix run_prob(const Smoother& s, std::size_t tau) {
  const EmissionTable& et = s.emissions;
  if (tau + 1 > et.tuple_length) throw DomainError("run_prob: tau exceeds the Markov order");
  const std::size_t G = et.regimes, T = et.T();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(G));
  std::vector<std::vector<double>> post(T);
  for (std::size_t t = 0; t < T; ++t) post[t] = s.tuple_posterior(t);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t at = std::min(t + tau, T - 1);
    const std::size_t span = at - t + 1;  // number of newest digits that must agree
    for (std::size_t idx = 0; idx < post[at].size(); ++idx) {
      std::size_t c = idx;
      const std::size_t g = c % G;
      bool constant = true;
      for (std::size_t l = 1; l < span && constant; ++l) {
        c /= G;
        constant = (c % G) == g;
      }
      if (constant) out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(g)) += post[at][idx];
    }
  }
  return out;
}

inline Matrix run_prob(const Matrix& x, const RegimeModel& m, std::size_t tau) {
  return run_prob(smooth(emission_table(x, m), m.chain), tau);
}

/// Expected transition counts sum_t P(V_{t-1}=g, V_t=h | x).
inline Matrix expected_transitions(const Smoother& s) {
  const std::size_t G = s.emissions.regimes;
  Matrix n = Matrix::Zero(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(G));
  for (std::size_t t = 1; t < s.emissions.T(); ++t) {
    const auto p = s.tuple_posterior(t);
    for (std::size_t idx = 0; idx < p.size(); ++idx) {
      n(static_cast<Eigen::Index>((idx / G) % G), static_cast<Eigen::Index>(idx % G)) += p[idx];
    }
  }
  return n;
}

/**
 * Date regimes from run probabilities. The first regime is the argmax at
 * t=0. The current regime g switches to g' at the earliest t with
 * min_{i=0..nu} p_{t+i}(g') > xi; ties go to the larger minimum, then the
 * lower index. Scanning resumes at the time after each switch, and a switch
 * needs its full confirmation window inside the series.
 */
inline RegimeSequence date_regimes(const Matrix& probs, const UpdateConfig& cfg) {
  cfg.validate();
  const auto T = static_cast<std::size_t>(probs.rows());
  const auto G = static_cast<std::size_t>(probs.cols());
  RegimeSequence v;
  if (T == 0) return v;
  Eigen::Index first = 0;
  probs.row(0).maxCoeff(&first);
  std::size_t cur = static_cast<std::size_t>(first);
  v.labels.assign(T, cur);
  for (std::size_t t = 1; t + cfg.nu < T; ++t) {
    double best = -1.0;
    std::size_t pick = cur;
    for (std::size_t g = 0; g < G; ++g) {
      if (g == cur) continue;
      double mn = 1.0;
      for (std::size_t i = 0; i <= cfg.nu; ++i) {
        mn = std::min(mn, probs(static_cast<Eigen::Index>(t + i), static_cast<Eigen::Index>(g)));
      }
      if (mn > cfg.xi && mn > best) {
        best = mn;
        pick = g;
      }
    }
    if (pick != cur) {
      cur = pick;
      std::fill(v.labels.begin() + static_cast<std::ptrdiff_t>(t), v.labels.end(), cur);
    }
  }
  return v;
}

}  // namespace mcrs
