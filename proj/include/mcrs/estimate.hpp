#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mcrs/errors.hpp"
#include "mcrs/fbinfer.hpp"
#include "mcrs/likelihood.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/margins.hpp"
#include "mcrs/model.hpp"
#include "mcrs/optimize.hpp"

namespace mcrs {

struct FitOptions {
  OptimOptions optim{};
  /// Estimate the switch correlations; false forces P = 0.
  bool estimate_switch = true;
  /// Chain estimate from switch times only (ratio of switch counts) instead of all transitions.
  bool switch_only_chain = false;
  int em_max_iter = 200;
  double em_tol = 1e-7;
};

struct StageResult {
  std::string name;
  double initial_loglik = 0.0;
  double loglik = 0.0;
  bool converged = true;
  int evaluations = 0;
};

struct ParamBreakdown {
  std::size_t margins = 0;
  std::size_t pacf = 0;
  std::size_t contemp = 0;
  std::size_t switch_rho = 0;
  std::size_t chain = 0;

  std::size_t total() const { return margins + pacf + contemp + switch_rho + chain; }
};

struct FitReport {
  RegimeModel model;
  std::vector<StageResult> stages;
  std::string likelihood;  // "complete" or "marginal"
  double loglik = 0.0;
  ParamBreakdown params;
  double aic = 0.0;
  int iterations = 1;
  bool converged = true;
  bool oscillated = false;
  RegimeSequence regimes;
  std::vector<std::string> warnings;
};

/// Dependence-parameter count G(kd + d(d+1)/2) + G(G-1) of the model with
/// common within-regime order k.
inline std::size_t param_count(std::size_t d, std::size_t G, std::size_t k) {
  return G * (k * d + d * (d + 1) / 2) + G * (G - 1);
}

/// Count for a VAR with unrestricted d x d coefficient matrices per lag.
inline std::size_t msvar_param_count(std::size_t d, std::size_t G, std::size_t k) {
  return G * (k * d * d + d * (d + 1) / 2) + G * (G - 1);
}

/// Free parameters actually estimated: margins (4 per variable and regime),
/// partial autocorrelations, contemporaneous correlations, switch
/// correlations when estimated, and chain parameters when the path is latent.
inline ParamBreakdown param_breakdown(const RegimeModel& m, bool with_switch, bool with_chain) {
  ParamBreakdown b;
  b.margins = 4 * m.dim * m.num_regimes;
  for (const auto& og : m.orders) b.pacf += std::accumulate(og.begin(), og.end(), std::size_t{0});
  b.contemp = m.num_regimes * m.dim * (m.dim - 1) / 2;
  b.switch_rho = with_switch ? m.dim : 0;
  b.chain = with_chain ? m.num_regimes * (m.num_regimes - 1) + (m.num_regimes - 1) : 0;
  return b;
}

inline double aic(std::size_t params, double loglik) { return 2.0 * static_cast<double>(params) - 2.0 * loglik; }

// ---------------------------------------------------------------------------
// Regime chain

struct ChainEstimate {
  ChainParams chain;
  std::vector<std::size_t> unvisited_rows;
};

/// Maximum-likelihood chain from an observed path: initial distribution at
/// v_1 and row-normalized transition counts. Rows with no outgoing
/// transitions become uniform and are reported.
inline ChainEstimate estimate_chain(const RegimeSequence& v, std::size_t G, bool switch_only = false) {
  v.validate(G);
  if (v.size() < 2) throw InsufficientDataError("estimate_chain: need at least two time points");
  const auto n = static_cast<Eigen::Index>(G);
  ChainEstimate out;
  out.chain.initial = Vector::Zero(n);
  out.chain.initial[static_cast<Eigen::Index>(v.labels[0])] = 1.0;
  Matrix counts = Matrix::Zero(n, n);
  for (std::size_t t = 1; t < v.size(); ++t) {
    if (switch_only && v.labels[t] == v.labels[t - 1]) continue;
    counts(static_cast<Eigen::Index>(v.labels[t - 1]), static_cast<Eigen::Index>(v.labels[t])) += 1.0;
  }
  out.chain.transition = counts;
  for (Eigen::Index g = 0; g < n; ++g) {
    const double row = counts.row(g).sum();
    if (row > 0.0) {
      out.chain.transition.row(g) /= row;
    } else {
      out.chain.transition.row(g).setConstant(1.0 / static_cast<double>(G));
      out.unvisited_rows.push_back(static_cast<std::size_t>(g));
    }
  }
  return out;
}

namespace detail {

inline constexpr double kInfeasiblePenalty = 1e12;

inline double infeasible_objective(double violation) { return kInfeasiblePenalty + 1e6 * violation; }

inline Vector atanh_vec(std::span<const double> v) {
  Vector u(static_cast<Eigen::Index>(v.size()));
  for (std::size_t j = 0; j < v.size(); ++j) u[static_cast<Eigen::Index>(j)] = std::atanh(std::clamp(v[j], -0.999, 0.999));
  return u;
}

inline std::vector<double> tanh_vec(const Vector& u, Eigen::Index from, Eigen::Index count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (Eigen::Index j = 0; j < count; ++j) out[static_cast<std::size_t>(j)] = std::tanh(u[from + j]);
  return out;
}

/// Orders validated against the data dimension; returns k = max order + 1.
inline std::size_t check_orders(const std::vector<std::vector<std::size_t>>& orders, std::size_t d) {
  if (orders.empty()) throw UsageError("orders: need at least one regime");
  std::size_t k = 0;
  for (const auto& og : orders) {
    if (og.size() != d) throw ShapeError("orders: one order per variable and regime required");
    for (std::size_t o : og) k = std::max(k, o);
  }
  return k + 1;
}

inline RegimeModel skeleton(std::size_t G, std::size_t d, const std::vector<std::vector<std::size_t>>& orders) {
  RegimeModel m = RegimeModel::independent(G, d, 0);
  m.orders = orders;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < d; ++i) m.pacf[g][i].assign(orders[g][i], 0.0);
  }
  return m;
}

/// Largest shortfall of positive definiteness over the full-length window patterns, 0 when feasible.
inline double model_violation(const RegimeModel& m) {
  try {
    return WindowPatterns(m, false).violation();
  } catch (const Error&) {
    return 1.0;
  }
}

/// Pooled contemporaneous Pearson correlation of normal scores in regime g.
inline Matrix pooled_correlation(const Matrix& y, std::span<const double> weights) {
  const Eigen::Index d = y.cols();
  Vector mean = Vector::Zero(d);
  double wsum = 0.0;
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    mean += weights[static_cast<std::size_t>(t)] * y.row(t).transpose();
    wsum += weights[static_cast<std::size_t>(t)];
  }
  mean /= wsum;
  Matrix cov = Matrix::Zero(d, d);
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    const Vector c = y.row(t).transpose() - mean;
    cov += weights[static_cast<std::size_t>(t)] * c * c.transpose();
  }
  const Vector sd = cov.diagonal().cwiseSqrt();
  Matrix r = cov.array() / (sd * sd.transpose()).array();
  r.diagonal().setOnes();
  return r;
}

inline StageResult run_stage(const std::string& name, const std::function<double(const Vector&)>& negll,
                             const Vector& x0, const OptimOptions& opt, Vector& best) {
  StageResult st;
  st.name = name;
  const OptimResult r = minimize(negll, x0, opt);
  best = r.x;
  st.initial_loglik = -r.initial_value;
  st.loglik = -r.value;
  st.converged = r.converged;
  st.evaluations = r.evaluations;
  return st;
}

/// Normal scores of the observations in each regime's segments, rows oldest first.
struct SegmentScores {
  std::vector<Matrix> ys;
  double log_jac = 0.0;
};

inline SegmentScores segment_scores(const TransformedSeries& ts, const SegmentPartition& part, std::size_t g) {
  SegmentScores out;
  for (const auto& seg : part.segments) {
    if (seg.regime != g) continue;
    out.ys.push_back(ts.y[g].middleRows(static_cast<Eigen::Index>(seg.start), static_cast<Eigen::Index>(seg.length)));
    out.log_jac += ts.log_jac[g].segment(static_cast<Eigen::Index>(seg.start), static_cast<Eigen::Index>(seg.length)).sum();
  }
  return out;
}

inline void order_by_first_location(RegimeModel& m) {
  std::vector<std::size_t> perm(m.num_regimes);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return m.margins[a][0].location < m.margins[b][0].location;
  });
  m = m.permuted(perm);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Estimation with a known regime path

/**
 * Four sequential stages given the regime path: margins per (variable,
 * regime) ignoring dependence; partial autocorrelations per (variable,
 * regime) from univariate segment likelihoods; contemporaneous correlations
 * per regime from multivariate segment likelihoods; switch correlations from
 * the complete likelihood.
 */
inline FitReport fit_with_regimes(const Matrix& x, const RegimeSequence& v,
                                  const std::vector<std::vector<std::size_t>>& orders,
                                  const FitOptions& opts = {}) {
  const auto d = static_cast<std::size_t>(x.cols());
  const std::size_t G = orders.size();
  const std::size_t k = detail::check_orders(orders, d);
  v.validate(G);
  if (static_cast<std::size_t>(x.rows()) != v.size()) throw ShapeError("fit_with_regimes: regimes and series differ in length");
  if (v.size() <= k) throw InsufficientDataError("fit_with_regimes: series not longer than the Markov order");

  FitReport rep;
  rep.likelihood = "complete";
  rep.regimes = v;
  RegimeModel m = detail::skeleton(G, d, orders);
  const ChainEstimate ce = estimate_chain(v, G, opts.switch_only_chain);
  m.chain = ce.chain;
  for (std::size_t g : ce.unvisited_rows) {
    rep.warnings.push_back("regime " + std::to_string(g + 1) + " has no outgoing transitions; uniform row used");
  }
  const SegmentPartition part = partition_segments(v);

  // Step 1: margins.
  StageResult s1{"margins"};
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<double> xs;
      for (std::size_t t = 0; t < v.size(); ++t) {
        if (v.labels[t] == g) xs.push_back(x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
      }
      MarginFitOptions mo;
      mo.require_convergence = false;
      const MarginFit mf = fit_margin(xs, {}, std::nullopt, mo);
      m.margins[g][i] = mf.params;
      s1.initial_loglik += mf.initial_loglik;
      s1.loglik += mf.loglik;
      s1.converged = s1.converged && mf.converged;
    }
  }
  rep.stages.push_back(s1);
  const TransformedSeries ts = transform_series(x, m);
  if (ts.clamped) rep.warnings.push_back(std::to_string(ts.clamped) + " probability transforms were clamped");

  // Step 2: univariate serial correlations.
  StageResult s2{"serial"};
  for (std::size_t g = 0; g < G; ++g) {
    const auto sc = detail::segment_scores(ts, part, g);
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t ki = orders[g][i];
      std::vector<Matrix> yi;
      double jac = 0.0;
      for (const auto& ys : sc.ys) yi.push_back(ys.col(static_cast<Eigen::Index>(i)));
      for (const auto& seg : part.segments) {
        if (seg.regime != g) continue;
        for (std::size_t t = seg.start; t < seg.start + seg.length; ++t) {
          const double xv = x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
          const double yv = ts.y[g](static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
          jac += skewt_logpdf(xv, m.margins[g][i]) - detail::normal_logpdf(yv);
        }
      }
      auto negll = [&](const Vector& u) {
        std::vector<double> pacf = detail::tanh_vec(u, 0, static_cast<Eigen::Index>(ki));
        pacf.resize(k, 0.0);
        const Matrix r = pacf_to_acf(pacf).matrix();
        double ll = jac;
        for (const auto& y : yi) ll += detail::stationary_run_logdensity(y, r, 1);
        return -ll;
      };
      if (ki == 0) {
        const double ll = -negll(Vector(0));
        s2.initial_loglik += ll;
        s2.loglik += ll;
        continue;
      }
      Vector best;
      const StageResult st = detail::run_stage("serial", negll, Vector::Zero(static_cast<Eigen::Index>(ki)), opts.optim, best);
      m.pacf[g][i] = detail::tanh_vec(best, 0, static_cast<Eigen::Index>(ki));
      s2.initial_loglik += st.initial_loglik;
      s2.loglik += st.loglik;
      s2.converged = s2.converged && st.converged;
      s2.evaluations += st.evaluations;
    }
  }
  rep.stages.push_back(s2);

  // Step 3: contemporaneous correlations.
  StageResult s3{"contemporaneous"};
  const std::size_t nz = d * (d - 1) / 2;
  for (std::size_t g = 0; g < G; ++g) {
    const auto sc = detail::segment_scores(ts, part, g);
    auto corr_at = [&](const Vector& u) {
      RegimeModel trial = m;
      trial.contemp[g] = corr_from_partials(detail::tanh_vec(u, 0, static_cast<Eigen::Index>(nz)), d);
      return trial.regime_corr(g, k, false);
    };
    auto negll = [&](const Vector& u) {
      RegimeCorr rc;
      try {
        rc = corr_at(u);
      } catch (const DegeneracyError&) {
        return detail::infeasible_objective(1.0);
      }
      if (!is_positive_definite(rc.matrix)) return detail::infeasible_objective(std::max(1e-10 - min_eigenvalue(rc.matrix), 1e-10));
      double ll = sc.log_jac;
      for (const auto& y : sc.ys) ll += detail::stationary_run_logdensity(y, rc.matrix, d);
      return -ll;
    };
    if (nz == 0) {
      const double ll = -negll(Vector(0));
      s3.initial_loglik += ll;
      s3.loglik += ll;
      continue;
    }
    Vector x0 = Vector::Zero(static_cast<Eigen::Index>(nz));
    {
      Matrix pooled(0, static_cast<Eigen::Index>(d));
      for (const auto& y : sc.ys) {
        Matrix grown(pooled.rows() + y.rows(), pooled.cols());
        grown << pooled, y;
        pooled.swap(grown);
      }
      if (pooled.rows() > static_cast<Eigen::Index>(d)) {
        const std::vector<double> w(static_cast<std::size_t>(pooled.rows()), 1.0);
        const Matrix r0 = detail::pooled_correlation(pooled, w);
        if (is_positive_definite(r0, 1e-6)) {
          const Vector cand = detail::atanh_vec(partials_from_corr(r0));
          if (negll(cand) < negll(x0)) x0 = cand;
        }
      }
    }
    Vector best;
    const StageResult st = detail::run_stage("contemporaneous", negll, x0, opts.optim, best);
    m.contemp[g] = corr_from_partials(detail::tanh_vec(best, 0, static_cast<Eigen::Index>(nz)), d);
    s3.initial_loglik += st.initial_loglik;
    s3.loglik += st.loglik;
    s3.converged = s3.converged && st.converged;
    s3.evaluations += st.evaluations;
  }
  rep.stages.push_back(s3);

  // Step 4: switch correlations from the complete likelihood.
  auto complete_at = [&](const RegimeModel& trial) {
    const WindowPatterns wp(trial, false);
    if (!wp.feasible()) return -detail::infeasible_objective(wp.violation());
    return complete_loglik(ts, wp, v);
  };
  if (opts.estimate_switch && part.switch_count() > 0) {
    auto negll = [&](const Vector& u) {
      RegimeModel trial = m;
      trial.switch_rho = detail::tanh_vec(u, 0, static_cast<Eigen::Index>(d));
      return -complete_at(trial);
    };
    Vector best;
    StageResult st = detail::run_stage("switch", negll, Vector::Zero(static_cast<Eigen::Index>(d)), opts.optim, best);
    m.switch_rho = detail::tanh_vec(best, 0, static_cast<Eigen::Index>(d));
    rep.stages.push_back(st);
  } else {
    const double ll = complete_at(m);
    rep.stages.push_back({"switch", ll, ll, true, 1});
  }

  const WindowPatterns wp(m);
  rep.loglik = complete_loglik(ts, wp, v);
  rep.model = m;
  rep.params = param_breakdown(m, opts.estimate_switch && part.switch_count() > 0, false);
  rep.aic = aic(rep.params.total(), rep.loglik);
  for (const auto& st : rep.stages) {
    rep.converged = rep.converged && st.converged;
    if (!st.converged) rep.warnings.push_back("stage '" + st.name + "' did not meet its tolerance");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Independence hidden Markov model (margins only, no dependence)

/// Emissions of the independence HMM: product of margin densities of the
/// newest regime; tuples of length 2 carry the transition.
inline EmissionTable independence_emissions(const Matrix& x, const std::vector<std::vector<MarginParams>>& margins) {
  const std::size_t G = margins.size();
  const auto T = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<double>> per(T, std::vector<double>(G, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t g = 0; g < G; ++g) {
      for (Eigen::Index i = 0; i < x.cols(); ++i) {
        per[t][g] += skewt_logpdf(x(static_cast<Eigen::Index>(t), i), margins[g][static_cast<std::size_t>(i)]);
      }
    }
  }
  EmissionTable et;
  et.regimes = G;
  et.tuple_length = 2;
  et.log_e.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t count = t == 0 ? G : G * G;
    et.log_e[t].resize(count);
    for (std::size_t c = 0; c < count; ++c) et.log_e[t][c] = per[t][c % G];
  }
  return et;
}

struct HmmFit {
  std::vector<std::vector<MarginParams>> margins;  // [g][i]
  ChainParams chain;
  double loglik = 0.0;
  double initial_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Deterministic k-means on standardized columns; starts from quantiles of
/// each column in turn and keeps the lowest within-cluster sum of squares.
inline std::vector<std::size_t> kmeans_labels(const Matrix& x, std::size_t G) {
  const auto T = static_cast<std::size_t>(x.rows());
  const Eigen::Index d = x.cols();
  Matrix z = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double mean = z.col(i).mean();
    const double sd = std::sqrt((z.col(i).array() - mean).square().mean());
    z.col(i) = (z.col(i).array() - mean) / (sd > 0.0 ? sd : 1.0);
  }
  std::vector<std::size_t> best(T, 0);
  double best_ss = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < d; ++c) {
    std::vector<std::size_t> ord(T);
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
      return z(static_cast<Eigen::Index>(a), c) < z(static_cast<Eigen::Index>(b), c);
    });
    Matrix centers(static_cast<Eigen::Index>(G), d);
    for (std::size_t g = 0; g < G; ++g) {
      centers.row(static_cast<Eigen::Index>(g)) = z.row(static_cast<Eigen::Index>(ord[(2 * g + 1) * T / (2 * G)]));
    }
    std::vector<std::size_t> lab(T, 0);
    double ss = 0.0;
    for (int it = 0; it < 100; ++it) {
      bool changed = false;
      ss = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        Eigen::Index g = 0;
        const double dist = (centers.rowwise() - z.row(static_cast<Eigen::Index>(t))).rowwise().squaredNorm().minCoeff(&g);
        ss += dist;
        if (lab[t] != static_cast<std::size_t>(g)) {
          lab[t] = static_cast<std::size_t>(g);
          changed = true;
        }
      }
      Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(G), d);
      std::vector<double> counts(G, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        sums.row(static_cast<Eigen::Index>(lab[t])) += z.row(static_cast<Eigen::Index>(t));
        counts[lab[t]] += 1.0;
      }
      for (std::size_t g = 0; g < G; ++g) {
        if (counts[g] > 0.0) centers.row(static_cast<Eigen::Index>(g)) = sums.row(static_cast<Eigen::Index>(g)) / counts[g];
      }
      if (!changed && it > 0) break;
    }
    if (ss < best_ss) {
      best_ss = ss;
      best = lab;
    }
  }
  return best;
}

}  // namespace detail

/**
 * EM for the hidden Markov model with independent skew-t components: the
 * E-step is the forward-backward pass, the M-step refits the chain from
 * expected transitions and each margin by weighted maximum likelihood.
 */
inline HmmFit fit_independence_hmm(const Matrix& x, std::size_t G, const FitOptions& opts = {}) {
  const auto T = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (G == 0) throw UsageError("fit_independence_hmm: need at least one regime");
  if (T < 5 * G) throw InsufficientDataError("fit_independence_hmm: series too short for the number of regimes");
  HmmFit fit;
  fit.margins.assign(G, std::vector<MarginParams>(d));
  MarginFitOptions mo;
  mo.require_convergence = false;

  const std::vector<std::size_t> lab = G == 1 ? std::vector<std::size_t>(T, 0) : detail::kmeans_labels(x, G);
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> w(T);
    for (std::size_t t = 0; t < T; ++t) w[t] = lab[t] == g ? 1.0 : 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const Vector col = x.col(static_cast<Eigen::Index>(i));
      fit.margins[g][i] = fit_margin({col.data(), T}, G == 1 ? std::span<const double>{} : std::span<const double>(w), std::nullopt, mo).params;
    }
  }
  if (G == 1) {
    fit.chain = ChainParams::uniform(1);
    fit.loglik = fit.initial_loglik = marginal_loglik(independence_emissions(x, fit.margins), fit.chain);
    fit.converged = true;
    return fit;
  }
  fit.chain = ChainParams::uniform(G, 0.9);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.em_max_iter; ++it) {
    const Smoother s = smooth(independence_emissions(x, fit.margins), fit.chain);
    if (it == 0) fit.initial_loglik = s.loglik;
    fit.loglik = s.loglik;
    fit.iterations = it + 1;
    if (std::abs(s.loglik - prev) <= opts.em_tol * std::abs(s.loglik)) {
      fit.converged = true;
      break;
    }
    prev = s.loglik;
    const Matrix post = run_prob(s, 0);
    fit.chain.initial = post.row(0).transpose();
    Matrix n = expected_transitions(s);
    for (Eigen::Index g = 0; g < n.rows(); ++g) {
      const double row = n.row(g).sum();
      if (row > 0.0) {
        fit.chain.transition.row(g) = n.row(g) / row;
      }
    }
    for (std::size_t g = 0; g < G; ++g) {
      const Vector w = post.col(static_cast<Eigen::Index>(g));
      for (std::size_t i = 0; i < d; ++i) {
        const Vector col = x.col(static_cast<Eigen::Index>(i));
        try {
          fit.margins[g][i] = fit_margin({col.data(), T}, {w.data(), T}, fit.margins[g][i], mo).params;
        } catch (const InsufficientDataError&) {
          // A regime emptied by the E-step keeps its previous margins.
        }
      }
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Estimation with a latent regime path

/**
 * Multi-stage fit with the regime path summed out: Step 1 is the
 * independence HMM (margins and chain); later stages maximize the marginal
 * likelihood over partial autocorrelations, then contemporaneous
 * correlations, then switch correlations, earlier groups held fixed.
 */
inline FitReport fit_multistage(const Matrix& x, std::size_t G, const std::vector<std::vector<std::size_t>>& orders,
                                const FitOptions& opts = {}) {
  const auto d = static_cast<std::size_t>(x.cols());
  if (orders.size() != G) throw ShapeError("fit_multistage: orders must list every regime");
  const std::size_t k = detail::check_orders(orders, d);
  if (static_cast<std::size_t>(x.rows()) <= k) throw InsufficientDataError("fit_multistage: series not longer than the Markov order");

  if (G == 1) {
    // No latent structure: the marginal and complete likelihoods coincide.
    FitReport rep = fit_with_regimes(x, RegimeSequence{std::vector<std::size_t>(static_cast<std::size_t>(x.rows()), 0)}, orders, opts);
    rep.likelihood = "marginal";
    return rep;
  }

  FitReport rep;
  rep.likelihood = "marginal";
  const HmmFit hmm = fit_independence_hmm(x, G, opts);
  RegimeModel m = detail::skeleton(G, d, orders);
  m.margins = hmm.margins;
  m.chain = hmm.chain;
  detail::order_by_first_location(m);
  rep.stages.push_back({"hmm", hmm.initial_loglik, hmm.loglik, hmm.converged, hmm.iterations});
  if (!hmm.converged) rep.warnings.push_back("independence HMM did not converge");

  const TransformedSeries ts = transform_series(x, m);
  if (ts.clamped) rep.warnings.push_back(std::to_string(ts.clamped) + " probability transforms were clamped");
  auto marginal_at = [&](const RegimeModel& trial) {
    const WindowPatterns wp(trial, false);
    if (!wp.feasible()) return -detail::infeasible_objective(wp.violation());
    return marginal_loglik(emission_table(ts, wp), trial.chain);
  };

  // Step 2: all partial autocorrelations.
  std::size_t npacf = 0;
  for (const auto& og : orders) npacf += std::accumulate(og.begin(), og.end(), std::size_t{0});
  auto with_pacf = [&](const Vector& u) {
    RegimeModel trial = m;
    Eigen::Index pos = 0;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t i = 0; i < d; ++i) {
        trial.pacf[g][i] = detail::tanh_vec(u, pos, static_cast<Eigen::Index>(orders[g][i]));
        pos += static_cast<Eigen::Index>(orders[g][i]);
      }
    }
    return trial;
  };
  {
    Vector best;
    StageResult st = detail::run_stage("serial", [&](const Vector& u) { return -marginal_at(with_pacf(u)); },
                                       Vector::Zero(static_cast<Eigen::Index>(npacf)), opts.optim, best);
    m = with_pacf(best);
    rep.stages.push_back(st);
  }

  // Step 3: contemporaneous correlations of every regime.
  const std::size_t nz = d * (d - 1) / 2;
  auto with_contemp = [&](const Vector& u) {
    RegimeModel trial = m;
    for (std::size_t g = 0; g < G; ++g) {
      trial.contemp[g] = corr_from_partials(detail::tanh_vec(u, static_cast<Eigen::Index>(g * nz), static_cast<Eigen::Index>(nz)), d);
    }
    return trial;
  };
  {
    Vector best;
    StageResult st = detail::run_stage("contemporaneous", [&](const Vector& u) { return -marginal_at(with_contemp(u)); },
                                       Vector::Zero(static_cast<Eigen::Index>(G * nz)), opts.optim, best);
    m = with_contemp(best);
    rep.stages.push_back(st);
  }

  // Step 4: switch correlations.
  if (opts.estimate_switch) {
    auto with_switch = [&](const Vector& u) {
      RegimeModel trial = m;
      trial.switch_rho = detail::tanh_vec(u, 0, static_cast<Eigen::Index>(d));
      return trial;
    };
    Vector best;
    StageResult st = detail::run_stage("switch", [&](const Vector& u) { return -marginal_at(with_switch(u)); },
                                       Vector::Zero(static_cast<Eigen::Index>(d)), opts.optim, best);
    m = with_switch(best);
    rep.stages.push_back(st);
  } else {
    const double ll = marginal_at(m);
    rep.stages.push_back({"switch", ll, ll, true, 1});
  }

  rep.model = m;
  rep.loglik = marginal_at(m);
  rep.params = param_breakdown(m, opts.estimate_switch, true);
  rep.aic = aic(rep.params.total(), rep.loglik);
  for (const auto& st : rep.stages) {
    rep.converged = rep.converged && st.converged;
    if (!st.converged) rep.warnings.push_back("stage '" + st.name + "' did not meet its tolerance");
  }
  const Smoother s = smooth(emission_table(ts, WindowPatterns(m)), m.chain);
  rep.regimes = date_regimes(run_prob(s, 0), UpdateConfig{});
  return rep;
}

/**
 * Alternate regime dating and estimation with the dated path treated as
 * known, starting from the independence HMM with identity correlations and
 * P = 0, until the dated path repeats. A 2-cycle stops the loop and keeps
 * the iterate with the larger complete likelihood.
 */
inline FitReport fit_iterative(const Matrix& x, std::size_t G, const std::vector<std::vector<std::size_t>>& orders,
                               const UpdateConfig& cfg, int max_iter = 20, const FitOptions& opts = {}) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(x.cols());
  if (orders.size() != G) throw ShapeError("fit_iterative: orders must list every regime");
  const std::size_t k = detail::check_orders(orders, d);
  if (cfg.tau > k) throw DomainError("fit_iterative: tau exceeds the Markov order");
  if (max_iter < 1) throw UsageError("fit_iterative: max_iter must be positive");

  const HmmFit hmm = fit_independence_hmm(x, G, opts);
  RegimeModel start = detail::skeleton(G, d, orders);
  start.margins = hmm.margins;
  start.chain = hmm.chain;
  detail::order_by_first_location(start);
  RegimeSequence v = date_regimes(run_prob(x, start, cfg.tau), cfg);

  std::vector<RegimeSequence> history{v};
  std::vector<FitReport> fits;
  FitReport rep;
  bool done = false;
  for (int it = 0; it < max_iter && !done; ++it) {
    FitReport f;
    try {
      f = fit_with_regimes(x, v, orders, opts);
    } catch (const InsufficientDataError& e) {
      if (fits.empty()) throw;
      rep = fits.back();
      rep.warnings.push_back(std::string("stopped: ") + e.what());
      rep.converged = false;
      rep.iterations = it;
      return rep;
    }
    f.iterations = it + 1;
    fits.push_back(f);
    const RegimeSequence next = date_regimes(run_prob(x, f.model, cfg.tau), cfg);
    if (next.labels == v.labels) {
      rep = f;
      done = true;
    } else if (history.size() >= 2 && next.labels == history[history.size() - 2].labels) {
      const auto& a = fits[fits.size() - 1];
      rep = fits.size() >= 2 && fits[fits.size() - 2].loglik > a.loglik ? fits[fits.size() - 2] : a;
      rep.oscillated = true;
      rep.converged = false;
      rep.iterations = it + 1;
      rep.warnings.push_back("dated regime path oscillates between two sequences");
      return rep;
    }
    history.push_back(next);
    v = next;
  }
  if (!done) {
    rep = fits.back();
    rep.converged = false;
    rep.warnings.push_back("dated regime path did not stabilize within max_iter");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// AIC scans

struct ScanCell {
  std::size_t regimes = 0;
  std::size_t order = 0;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  std::size_t params = 0;
  double aic = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

/// Fit for one (G, common order) cell.
inline ScanCell scan_cell(const Matrix& x, std::size_t G, std::size_t order, const std::optional<RegimeSequence>& v,
                          const FitOptions& opts) {
  ScanCell cell;
  cell.regimes = G;
  cell.order = order;
  const auto d = static_cast<std::size_t>(x.cols());
  try {
    const auto orders = uniform_orders(G, d, order);
    if (v) {
      std::size_t vg = 0;
      for (std::size_t g : v->labels) vg = std::max(vg, g + 1);
      if (vg != G) throw UsageError("supplied regimes use " + std::to_string(vg) + " regimes");
    }
    const FitReport f = v ? fit_with_regimes(x, *v, orders, opts) : fit_multistage(x, G, orders, opts);
    cell.loglik = f.loglik;
    cell.params = f.params.total();
    cell.aic = aic(cell.params, cell.loglik);
  } catch (const std::exception& e) {
    cell.status = e.what();
  }
  return cell;
}

/// One AIC per (G, order); complete likelihood when the path is supplied,
/// marginal otherwise. Cells run concurrently and failures are recorded per cell.
inline std::vector<ScanCell> aic_scan(const Matrix& x, std::span<const std::size_t> order_range,
                                      std::span<const std::size_t> regime_range,
                                      const std::optional<RegimeSequence>& v = std::nullopt, const FitOptions& opts = {}) {
  if (order_range.empty() || regime_range.empty()) throw UsageError("aic_scan: empty order or regime range");
  std::vector<std::future<ScanCell>> jobs;
  for (std::size_t G : regime_range) {
    for (std::size_t order : order_range) {
      jobs.push_back(std::async(std::launch::async, [&x, G, order, &v, &opts] { return scan_cell(x, G, order, v, opts); }));
    }
  }
  std::vector<ScanCell> out;
  out.reserve(jobs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace mcrs
