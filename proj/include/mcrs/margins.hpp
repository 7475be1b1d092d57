#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mcrs/errors.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/optimize.hpp"

namespace mcrs {

/**
 * Four-parameter skew-t margin (Jones-Faddy family with a location-scale
 * extension). The standardized density is
 *
 *   f(t) = C^{-1} (1 + t/s)^{a+1/2} (1 - t/s)^{b+1/2},  s = sqrt(a + b + t^2),
 *
 * with C = 2^{a+b-1} B(a,b) sqrt(a+b). The left tail decays like |t|^{-2a-1}
 * and the right tail like t^{-2b-1}, so a larger tailweight means a lighter
 * tail. a == b gives Student's t with 2a degrees of freedom.
 */
struct MarginParams {
  double location = 0.0;
  double scale = 1.0;
  double left_tailweight = 1.0;
  double right_tailweight = 1.0;

  bool valid() const {
    return std::isfinite(location) && std::isfinite(scale) && scale > 0.0 &&
           std::isfinite(left_tailweight) && left_tailweight > 0.0 &&
           std::isfinite(right_tailweight) && right_tailweight > 0.0;
  }

  void validate() const {
    if (!valid()) {
      throw DomainError("MarginParams: scale and tailweights must be finite and positive");
    }
  }

  friend bool operator==(const MarginParams&, const MarginParams&) = default;
};

/// Standard-normal-scale value of an observation, plus a flag set when the
/// cdf had to be clamped away from 0 or 1 before inversion.
struct GaussScore {
  double value = 0.0;
  bool clamped = false;
};

/// Both tail probabilities of the margin, each computed without cancellation.
struct TailProbs {
  double lower = 0.5;
  double upper = 0.5;
};

inline constexpr double kCdfClamp = 1e-15;

namespace detail {

// Beta-scale coordinates z = (1 + t/s)/2 and w = 1 - z, both to full precision.
struct BetaCoords {
  double z;
  double w;
};

inline BetaCoords beta_coords(double t, double a, double b) {
  const double ab = a + b;
  const double s = std::sqrt(ab + t * t);
  if (t >= 0.0) {
    const double w = ab / (2.0 * s * (s + t));
    return {1.0 - w, w};
  }
  const double z = ab / (2.0 * s * (s - t));
  return {z, 1.0 - z};
}

inline double log_norm_const(double a, double b) {
  return (a + b - 1.0) * std::log(2.0) + std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b) +
         0.5 * std::log(a + b);
}

inline double standardized_from_coords(double z, double w, double a, double b) {
  return std::sqrt(a + b) * (z - w) / (2.0 * std::sqrt(z * w));
}

inline double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> n01;
  return boost::math::quantile(n01, p);
}

inline double normal_cdf(double y) { return 0.5 * std::erfc(-y / std::sqrt(2.0)); }

inline double normal_logpdf(double y) { return -0.5 * (kLog2Pi + y * y); }

}  // namespace detail

inline double skewt_logpdf(double x, const MarginParams& eta) {
  eta.validate();
  const double a = eta.left_tailweight, b = eta.right_tailweight;
  const double t = (x - eta.location) / eta.scale;
  const auto [z, w] = detail::beta_coords(t, a, b);
  return (a + 0.5) * std::log(2.0 * z) + (b + 0.5) * std::log(2.0 * w) -
         detail::log_norm_const(a, b) - std::log(eta.scale);
}

inline double skewt_pdf(double x, const MarginParams& eta) { return std::exp(skewt_logpdf(x, eta)); }

/// Lower and upper tail probabilities via the Beta(a,b) representation of
/// (1 + T/sqrt(a+b+T^2))/2.
inline TailProbs skewt_tails(double x, const MarginParams& eta) {
  eta.validate();
  const double a = eta.left_tailweight, b = eta.right_tailweight;
  const double t = (x - eta.location) / eta.scale;
  if (std::isinf(t)) return t < 0 ? TailProbs{0.0, 1.0} : TailProbs{1.0, 0.0};
  const auto [z, w] = detail::beta_coords(t, a, b);
  return {boost::math::ibeta(a, b, z), boost::math::ibeta(b, a, w)};
}

inline double skewt_cdf(double x, const MarginParams& eta) { return skewt_tails(x, eta).lower; }

/// Quantile for lower-tail probability p.
inline double skewt_quantile(double p, const MarginParams& eta) {
  eta.validate();
  if (!(p > 0.0 && p < 1.0)) throw DomainError("skewt_quantile: p must lie in (0,1)");
  const double a = eta.left_tailweight, b = eta.right_tailweight;
  double w = 0.0;
  const double z = boost::math::ibeta_inv(a, b, p, &w);
  return eta.location + eta.scale * detail::standardized_from_coords(z, w, a, b);
}

/// Quantile for upper-tail probability q, i.e. the x with P(X > x) = q.
inline double skewt_quantile_upper(double q, const MarginParams& eta) {
  eta.validate();
  if (!(q > 0.0 && q < 1.0)) throw DomainError("skewt_quantile_upper: q must lie in (0,1)");
  const double a = eta.left_tailweight, b = eta.right_tailweight;
  double w = 0.0;
  const double z = boost::math::ibetac_inv(a, b, q, &w);
  return eta.location + eta.scale * detail::standardized_from_coords(z, w, a, b);
}

/// Probability integral transform to the standard normal scale, Phi^{-1}(F(x)).
/// Each tail is inverted from its own probability so the result stays accurate
/// far into both tails; probabilities below 1e-15 are clamped and flagged.
inline GaussScore pit_to_normal(double x, const MarginParams& eta) {
  const TailProbs tails = skewt_tails(x, eta);
  GaussScore out;
  if (tails.lower <= tails.upper) {
    double p = tails.lower;
    if (p < kCdfClamp) {
      p = kCdfClamp;
      out.clamped = true;
    }
    out.value = detail::normal_quantile(p);
  } else {
    double q = tails.upper;
    if (q < kCdfClamp) {
      q = kCdfClamp;
      out.clamped = true;
    }
    out.value = -detail::normal_quantile(q);
  }
  return out;
}

/// Inverse of pit_to_normal: the observation whose normal score is y.
inline double normal_to_margin(double y, const MarginParams& eta) {
  if (y <= 0.0) {
    const double p = std::max(detail::normal_cdf(y), std::numeric_limits<double>::min());
    return skewt_quantile(p, eta);
  }
  const double q = std::max(detail::normal_cdf(-y), std::numeric_limits<double>::min());
  return skewt_quantile_upper(q, eta);
}

/// log of the transform derivative a'(x) = f(x) / phi(Phi^{-1}(F(x))).
inline double log_pit_derivative(double x, const MarginParams& eta) {
  const GaussScore y = pit_to_normal(x, eta);
  return skewt_logpdf(x, eta) - detail::normal_logpdf(y.value);
}

inline double pit_derivative(double x, const MarginParams& eta) {
  return std::exp(log_pit_derivative(x, eta));
}

// ---------------------------------------------------------------------------
// Maximum-likelihood fitting

struct MarginFitOptions {
  double rel_tol = 1e-8;
  int max_iter = 500;
  /// Throw ConvergenceError when the optimizer does not meet its tolerance.
  bool require_convergence = true;
};

struct MarginFit {
  MarginParams params;
  double loglik = 0.0;
  double initial_loglik = 0.0;
  MarginParams initial;
  int iterations = 0;
  bool converged = false;
};

/// Mean and variance of the standardized Jones-Faddy variable (a, b > 1).
inline std::array<double, 2> skewt_standard_moments(double a, double b) {
  using std::lgamma;
  const double mean = 0.5 * (a - b) * std::sqrt(a + b) *
                      std::exp(lgamma(a - 0.5) + lgamma(b - 0.5) - lgamma(a) - lgamma(b));
  const double second = 0.25 * (a + b) * ((a - b) * (a - b) + a - 1.0 + b - 1.0) /
                        ((a - 1.0) * (b - 1.0));
  return {mean, second - mean * mean};
}

namespace detail {

inline double weighted_margin_loglik(std::span<const double> xs, std::span<const double> ws,
                                     const MarginParams& eta) {
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = ws.empty() ? 1.0 : ws[i];
    if (w != 0.0) total += w * skewt_logpdf(xs[i], eta);
  }
  return total;
}

inline MarginParams margin_from_coords(const Vector& u) {
  return {u[0], std::exp(u[1]), std::exp(u[2]), std::exp(u[3])};
}

inline Vector coords_from_margin(const MarginParams& m) {
  Vector u(4);
  u << m.location, std::log(m.scale), std::log(m.left_tailweight), std::log(m.right_tailweight);
  return u;
}

}  // namespace detail

/**
 * Moment-matched starting point: for a small grid of tailweight pairs the
 * location and scale are set so that the first two moments match the sample,
 * and the pair with the largest likelihood wins.
 */
inline MarginParams margin_initializer(std::span<const double> xs, std::span<const double> ws = {}) {
  double wsum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = ws.empty() ? 1.0 : ws[i];
    wsum += w;
    mean += w * xs[i];
  }
  mean /= wsum;
  double var = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = ws.empty() ? 1.0 : ws[i];
    var += w * (xs[i] - mean) * (xs[i] - mean);
  }
  var /= wsum;
  const double sd = std::sqrt(var);
  static constexpr std::array<std::array<double, 2>, 9> grid{{{2.5, 2.5},
                                                               {5.0, 5.0},
                                                               {15.0, 15.0},
                                                               {2.5, 6.0},
                                                               {6.0, 2.5},
                                                               {4.0, 8.0},
                                                               {8.0, 4.0},
                                                               {4.0, 15.0},
                                                               {15.0, 4.0}}};
  MarginParams best;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : grid) {
    const auto [m, v] = skewt_standard_moments(a, b);
    const double scale = sd / std::sqrt(v);
    MarginParams cand{mean - scale * m, scale, a, b};
    const double ll = detail::weighted_margin_loglik(xs, ws, cand);
    if (ll > best_ll) {
      best_ll = ll;
      best = cand;
    }
  }
  return best;
}

/**
 * Maximum-likelihood fit of the skew-t margin to (optionally weighted)
 * samples, ignoring serial dependence. The search runs in (location,
 * log scale, log tailweights) from the moment initializer or `start`.
 */
inline MarginFit fit_margin(std::span<const double> samples, std::span<const double> weights = {},
                            std::optional<MarginParams> start = std::nullopt,
                            const MarginFitOptions& options = {}) {
  if (!weights.empty() && weights.size() != samples.size()) {
    throw ShapeError("fit_margin: weights and samples differ in length");
  }
  std::size_t effective = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) throw DomainError("fit_margin: non-finite sample");
    if (!weights.empty() && !(weights[i] > 0.0)) continue;
    ++effective;
    lo = std::min(lo, samples[i]);
    hi = std::max(hi, samples[i]);
  }
  if (effective < 5) throw InsufficientDataError("fit_margin: fewer than 5 samples");
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) {
    throw InsufficientDataError("fit_margin: samples show no variation");
  }

  MarginFit fit;
  fit.initial = margin_initializer(samples, weights);
  if (start && start->valid()) {
    const double ll_start = detail::weighted_margin_loglik(samples, weights, *start);
    if (ll_start > detail::weighted_margin_loglik(samples, weights, fit.initial)) fit.initial = *start;
  }
  fit.initial_loglik = detail::weighted_margin_loglik(samples, weights, fit.initial);

  double wsum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) wsum += weights.empty() ? 1.0 : weights[i];
  const auto objective = [&](const Vector& u) {
    // Tailweights beyond ~1e4 are numerically Gaussian; keep the search bounded.
    if (u[2] > 9.5 || u[3] > 9.5 || u[2] < -4.0 || u[3] < -4.0 || u[1] < -30.0 || u[1] > 30.0) {
      return std::numeric_limits<double>::infinity();
    }
    return -detail::weighted_margin_loglik(samples, weights, detail::margin_from_coords(u)) / wsum;
  };
  OptimOptions opt;
  opt.rel_tol = options.rel_tol;
  opt.max_iter = options.max_iter;
  const OptimResult res = minimize(objective, detail::coords_from_margin(fit.initial), opt);
  fit.params = detail::margin_from_coords(res.x);
  fit.loglik = detail::weighted_margin_loglik(samples, weights, fit.params);
  fit.iterations = res.iterations;
  fit.converged = res.converged;
  if (fit.loglik < fit.initial_loglik) {
    fit.params = fit.initial;
    fit.loglik = fit.initial_loglik;
  }
  if (!fit.converged && options.require_convergence) {
    throw ConvergenceError("fit_margin: optimizer did not converge",
                           {fit.params.location, fit.params.scale, fit.params.left_tailweight,
                            fit.params.right_tailweight});
  }
  return fit;
}

}  // namespace mcrs
