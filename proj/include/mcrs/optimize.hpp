#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mcrs/linalg.hpp"

namespace mcrs {

struct OptimOptions {
  double rel_tol = 1e-6;
  int max_iter = 500;
  /// Relative step for central-difference gradients.
  double fd_step = 1e-5;
  bool simplex_fallback = true;
};

struct OptimResult {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  double initial_value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string method;
};

namespace detail {

class CountingObjective {
 public:
  explicit CountingObjective(const std::function<double(const Vector&)>& f) : f_(f) {}

  double operator()(const Vector& x) {
    ++count_;
    const double v = f_(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }
  int count() const { return count_; }

 private:
  const std::function<double(const Vector&)>& f_;
  int count_ = 0;
};

inline Vector central_gradient(CountingObjective& f, const Vector& x, double fd_step) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (std::isfinite(up) && std::isfinite(down)) {
      g[i] = (up - down) / (2.0 * h);
    } else {
      g[i] = 0.0;
    }
  }
  return g;
}

inline bool small_change(double before, double after, double rel_tol) {
  return std::abs(before - after) <= rel_tol * (std::abs(after) + rel_tol);
}

inline OptimResult bfgs(CountingObjective& f, Vector x, double fx, const OptimOptions& opt) {
  const Eigen::Index n = x.size();
  OptimResult res;
  res.method = "bfgs";
  Matrix h_inv = Matrix::Identity(n, n);
  Vector g = central_gradient(f, x, opt.fd_step);
  int stalls = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    if (g.norm() <= 1e-10) {
      res.converged = true;
      break;
    }
    Vector dir = -h_inv * g;
    if (g.dot(dir) >= 0.0) {
      h_inv.setIdentity();
      dir = -g;
    }
    // Keep the first trial step inside a sane box in the unconstrained coordinates.
    const double max_step = 2.0;
    double step = std::min(1.0, max_step / std::max(dir.cwiseAbs().maxCoeff(), 1e-300));
    const double slope = g.dot(dir);
    Vector x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = f(x_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (h_inv.isIdentity(0.0)) {
        // Steepest descent failed too: either at a minimum up to
        // finite-difference noise, or stuck against a penalty wall.
        res.converged = g.norm() <= 1e-4 * (1.0 + std::abs(fx));
        break;
      }
      h_inv.setIdentity();
      continue;
    }
    const Vector g_new = central_gradient(f, x_new, opt.fd_step);
    const Vector s = x_new - x;
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    const bool tiny = small_change(fx, f_new, opt.rel_tol);
    x = x_new;
    g = g_new;
    const double f_old = fx;
    fx = f_new;
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(n, n);
      h_inv = (eye - rho * s * yv.transpose()) * h_inv * (eye - rho * yv * s.transpose()) +
              rho * s * s.transpose();
    }
    if (tiny) {
      // Two consecutive tiny improvements count as convergence.
      if (++stalls >= 2 || f_old == fx) {
        res.converged = true;
        break;
      }
    } else {
      stalls = 0;
    }
  }
  res.x = x;
  res.value = fx;
  return res;
}

inline OptimResult nelder_mead(CountingObjective& f, const Vector& x0, double f0,
                               const OptimOptions& opt) {
  const Eigen::Index n = x0.size();
  std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(n + 1), f0);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& p = pts[static_cast<std::size_t>(i + 1)];
    p[i] += 0.1 * std::max(1.0, std::abs(p[i]));
    vals[static_cast<std::size_t>(i + 1)] = f(p);
  }
  std::vector<std::size_t> order(pts.size());
  OptimResult res;
  res.method = "nelder-mead";
  const int max_iter = opt.max_iter * static_cast<int>(std::max<Eigen::Index>(n, 1));
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::isfinite(vals[worst]) && small_change(vals[worst], vals[best], opt.rel_tol * 1e-2)) {
      res.converged = true;
      break;
    }
    Vector centroid = Vector::Zero(n);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) centroid += pts[order[k]];
    centroid /= static_cast<double>(n);
    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr < vals[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      const Vector xc = centroid + 0.5 * (pts[worst] - centroid);
      const double fc = f(xc);
      if (fc < vals[worst]) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (std::size_t k = 1; k < order.size(); ++k) {
          auto& p = pts[order[k]];
          p = pts[best] + 0.5 * (p - pts[best]);
          vals[order[k]] = f(p);
        }
      }
    }
  }
  const auto best_it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
  res.value = *best_it;
  return res;
}

}  // namespace detail

/// Deterministic local minimization: quasi-Newton (BFGS) with central-difference
/// gradients, then a Nelder-Mead pass when BFGS stalls. The returned point is the
/// best one evaluated, so `value <= initial_value` always holds.
inline OptimResult minimize(const std::function<double(const Vector&)>& objective,
                            const Vector& x0, const OptimOptions& opt = {}) {
  detail::CountingObjective f(objective);
  OptimResult result;
  result.initial_value = f(x0);
  result.x = x0;
  result.value = result.initial_value;
  if (x0.size() == 0) {
    result.converged = true;
    result.method = "none";
    result.evaluations = f.count();
    return result;
  }
  if (!std::isfinite(result.initial_value)) {
    throw DomainError("minimize: objective is not finite at the starting point");
  }
  OptimResult quasi = detail::bfgs(f, x0, result.initial_value, opt);
  if (quasi.value <= result.value) {
    result.x = quasi.x;
    result.value = quasi.value;
  }
  result.iterations = quasi.iterations;
  result.converged = quasi.converged;
  result.method = quasi.method;
  if (!quasi.converged && opt.simplex_fallback) {
    OptimResult simplex = detail::nelder_mead(f, result.x, result.value, opt);
    result.iterations += simplex.iterations;
    if (simplex.value < result.value) {
      result.x = simplex.x;
      result.value = simplex.value;
    }
    result.converged = simplex.converged;
    result.method = "bfgs+nelder-mead";
  }
  result.evaluations = f.count();
  return result;
}

}  // namespace mcrs
