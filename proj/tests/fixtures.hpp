#pragma once

#include <initializer_list>
#include <random>
#include <vector>

#include "mcrs/mcrs.hpp"

namespace mcrs::testing {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

inline Matrix corr2(double r) { return mat({{1.0, r}, {r, 1.0}}); }

/// Largest absolute entrywise difference.
inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Printed values are rounded to two decimals; exact ties at the half-unit
/// need a little floating-point slack on top of the 0.005 rounding band.
inline constexpr double kPrintedTol = 0.005 + 1e-9;

/// Bivariate, two-regime model with partial autocorrelations
/// (0.8), (0.6, 0.5) in regime 1 and (0.7), (0.4, 0.8) in regime 2,
/// contemporaneous correlations 0.7 and 0.2, and P = diag(0.25, 0.35).
inline RegimeModel example1_model() {
  RegimeModel m = RegimeModel::independent(2, 2, 0);
  m.orders = {{1, 2}, {1, 2}};
  m.pacf = {{{0.8}, {0.6, 0.5}}, {{0.7}, {0.4, 0.8}}};
  m.contemp = {corr2(0.7), corr2(0.2)};
  m.switch_rho = {0.25, 0.35};
  return m;
}

/// Four-variable, two-regime simulation design with AR(1) components.
inline RegimeModel design_model() {
  RegimeModel m = RegimeModel::independent(2, 4, 1);
  m.margins = {{MarginParams{0, 1, 4, 8}, MarginParams{0, 1, 4, 8}, MarginParams{1, 2, 4, 8}, MarginParams{0, 2, 4, 8}},
               {MarginParams{4, 1, 4, 8}, MarginParams{2, 1, 4, 8}, MarginParams{1, 2, 4, 8}, MarginParams{0, 2, 4, 8}}};
  m.pacf = {{{0.3}, {0.3}, {0.5}, {0.5}}, {{0.1}, {0.1}, {0.1}, {0.1}}};
  m.contemp = {mat({{1.0, 0.3, 0.2, 0.2}, {0.3, 1.0, 0.3, 0.2}, {0.2, 0.3, 1.0, 0.8}, {0.2, 0.2, 0.8, 1.0}}),
               mat({{1.0, 0.1, 0.4, 0.1}, {0.1, 1.0, 0.2, 0.1}, {0.4, 0.2, 1.0, -0.8}, {0.1, 0.1, -0.8, 1.0}})};
  m.switch_rho = {0.1, 0.2, 0.1, 0.2};
  m.chain.initial = Vector::Constant(2, 0.5);
  m.chain.transition = mat({{0.95, 0.05}, {0.02, 0.98}});
  return m;
}

/// Random feasible model: small partial autocorrelations and correlations
/// keep every window positive definite with high probability; the caller
/// retries on infeasibility.
inline RegimeModel random_model(std::mt19937_64& rng, std::size_t G, std::size_t d, std::size_t max_order) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> ord(0, max_order);
  for (;;) {
    RegimeModel m = RegimeModel::independent(G, d, 0);
    for (std::size_t g = 0; g < G; ++g) {
      std::vector<double> z;
      for (std::size_t j = 0; j < d * (d - 1) / 2; ++j) z.push_back(0.7 * u(rng));
      m.contemp[g] = corr_from_partials(z, d);
      for (std::size_t i = 0; i < d; ++i) {
        m.orders[g][i] = ord(rng);
        m.pacf[g][i].clear();
        for (std::size_t l = 0; l < m.orders[g][i]; ++l) m.pacf[g][i].push_back(0.6 * u(rng));
        m.margins[g][i] = MarginParams{u(rng), 1.0 + 0.5 * (u(rng) + 1.0), 3.0 + 2.0 * (u(rng) + 1.0), 3.0 + 2.0 * (u(rng) + 1.0)};
      }
    }
    for (std::size_t i = 0; i < d; ++i) m.switch_rho[i] = 0.5 * u(rng);
    Matrix tr(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(G));
    for (Eigen::Index r = 0; r < tr.rows(); ++r) {
      for (Eigen::Index c = 0; c < tr.cols(); ++c) tr(r, c) = 0.2 + (u(rng) + 1.0);
      tr.row(r) /= tr.row(r).sum();
    }
    m.chain.transition = tr;
    Vector init(static_cast<Eigen::Index>(G));
    for (Eigen::Index g = 0; g < init.size(); ++g) init[g] = 0.2 + (u(rng) + 1.0);
    m.chain.initial = init / init.sum();
    if (WindowPatterns(m, false).feasible()) return m;
  }
}

}  // namespace mcrs::testing
