#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fixtures.hpp"

using namespace mcrs::testing;
using mcrs::Matrix;
using mcrs::RegimeWindow;

namespace {

const Matrix kWindow1112 = mat({{1, .20, .25, .18, .20, .12, .16, .12},
                                {.20, 1, .24, .35, .20, .21, .16, .24},
                                {.25, .24, 1, .70, .80, .49, .64, .50},
                                {.18, .35, .70, 1, .56, .60, .45, .68},
                                {.20, .20, .80, .56, 1, .70, .80, .49},
                                {.12, .21, .49, .60, .70, 1, .56, .60},
                                {.16, .16, .64, .45, .80, .56, 1, .70},
                                {.12, .24, .50, .68, .49, .60, .70, 1}});

mcrs::WindowCorr window(const mcrs::RegimeModel& m, std::vector<std::size_t> labels) {
  const std::size_t lags = std::max(labels.size() - 1, m.markov_order());
  const auto rc = mcrs::regime_corrs(m, lags);
  return mcrs::build_window_corr(RegimeWindow{std::move(labels)}, rc, mcrs::SwitchCorr{m.switch_rho});
}

/// Representation of Y_t along the path 1,1,1,1,2,2,2,2 (window t-3..t).
mcrs::StochasticRep rep_at(const mcrs::RegimeModel& m, std::size_t t) {
  const std::vector<std::size_t> path{0, 0, 0, 0, 1, 1, 1, 1};
  return mcrs::conditional_rep(window(m, {path.begin() + static_cast<long>(t - 4), path.begin() + static_cast<long>(t)}));
}

Matrix coef(const mcrs::StochasticRep& r, std::size_t lag) { return r.coefficients.at(lag - 1); }

}  // namespace

TEST(WindowCorr, MatchesPrintedSwitchWindow) {
  const auto w = window(example1_model(), {0, 0, 0, 1});
  EXPECT_LE(max_abs_diff(w.matrix, kWindow1112), kPrintedTol);
  EXPECT_TRUE(mcrs::is_positive_definite(w.matrix));
}

TEST(WindowCorr, NoSwitchIsRegimeBlock) {
  const auto m = example1_model();
  for (std::size_t g = 0; g < 2; ++g) {
    const auto w = window(m, {g, g, g});
    EXPECT_LE(max_abs_diff(w.matrix, m.regime_corr(g).matrix.topLeftCorner(6, 6)), 1e-14);
  }
}

TEST(WindowCorr, ZeroSwitchCorrelationIsBlockDiagonal) {
  auto m = example1_model();
  m.switch_rho = {0.0, 0.0};
  const auto w = window(m, {0, 0, 1, 1});
  EXPECT_LE(w.matrix.block(0, 4, 4, 4).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(max_abs_diff(w.matrix.topLeftCorner(4, 4), m.regime_corr(1).matrix.topLeftCorner(4, 4)), 1e-14);
}

TEST(WindowCorr, SwitchPropagatesThroughP) {
  const auto m = example1_model();
  const auto w = window(m, {0, 0, 0, 1});
  const Matrix p = mcrs::SwitchCorr{m.switch_rho}.matrix();
  for (std::size_t l = 1; l <= 2; ++l) {
    const Matrix lhs = w.matrix.block(0, static_cast<long>(2 * (l + 1)), 2, 2);
    const Matrix rhs = p * w.matrix.block(2, static_cast<long>(2 * (l + 1)), 2, 2);
    EXPECT_LE(max_abs_diff(lhs, rhs), 1e-14);
  }
}

TEST(WindowCorr, ShortInteriorRunLinksOuterRuns) {
  // Labels (1,2,1): the newest block inherits P times the middle block's
  // covariance with the oldest, so the outer runs are correlated.
  const auto m = example1_model();
  const auto w = window(m, {0, 1, 0});
  const Matrix p = mcrs::SwitchCorr{m.switch_rho}.matrix();
  EXPECT_LE(max_abs_diff(w.matrix.block(0, 4, 2, 2), p * w.matrix.block(2, 4, 2, 2)), 1e-14);
  EXPECT_GT(w.matrix.block(0, 4, 2, 2).cwiseAbs().maxCoeff(), 0.01);
}

TEST(WindowCorr, MultipleSwitchesStayFeasible) {
  const auto m = example1_model();
  const auto w = window(m, {0, 1, 0, 1});
  EXPECT_EQ(RegimeWindow({0, 1, 0, 1}).switch_count(), 3u);
  EXPECT_TRUE(mcrs::is_positive_definite(w.matrix));
}

TEST(WindowCorr, RelabelingIsConsistent) {
  std::mt19937_64 rng(8);
  const auto m = random_model(rng, 2, 2, 2);
  const std::vector<std::size_t> perm{1, 0};
  const auto swapped = m.permuted(perm);
  EXPECT_LE(max_abs_diff(window(m, {0, 0, 1, 1}).matrix, window(swapped, {1, 1, 0, 0}).matrix), 0.0);
}

TEST(WindowCorr, ClosedUnderMargins) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = random_model(rng, 2, 3, 2);
    const std::vector<std::size_t> labels{0, 1, 1, 0};
    const std::vector<std::size_t> subset{0, 2};
    const auto full = window(m, labels);
    const auto direct = window(m.subset(subset), labels);
    std::vector<Eigen::Index> idx;
    for (std::size_t b = 0; b < labels.size(); ++b) {
      for (std::size_t i : subset) idx.push_back(static_cast<Eigen::Index>(b * 3 + i));
    }
    EXPECT_LE(max_abs_diff(full.matrix(idx, idx), direct.matrix), 1e-10);
  }
}

TEST(WindowCorr, MarkovOfOrderK) {
  // Newest block is conditionally uncorrelated with the oldest given the k in between.
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> lab(0, 1);
  for (int rep = 0; rep < 40; ++rep) {
    const auto m = random_model(rng, 2, 2, 2);
    const std::size_t k = m.markov_order();
    std::vector<std::size_t> labels(k + 2);
    for (auto& g : labels) g = lab(rng);
    const Matrix w = window(m, labels).matrix;
    const long d = 2, mid = static_cast<long>(k) * d, last = static_cast<long>(k + 1) * d;
    const Matrix s_mid = w.block(d, d, mid, mid);
    const Matrix partial = w.block(0, last, d, d) - w.block(0, d, d, mid) * s_mid.inverse() * w.block(d, last, mid, d);
    EXPECT_LE(partial.cwiseAbs().maxCoeff(), 1e-10) << RegimeWindow{labels}.describe();
  }
}

TEST(WindowCorr, InfeasiblePatternIsNamed) {
  auto m = example1_model();
  m.switch_rho = {0.99, -0.99};
  try {
    window(m, {0, 1, 0, 1});
    FAIL() << "expected an infeasible window";
  } catch (const mcrs::InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("(1,2,1,2)"), std::string::npos) << e.what();
  }
}

TEST(ConditionalRep, PrintedRepresentations) {
  const auto m = example1_model();
  const auto y4 = rep_at(m, 4);
  EXPECT_LE(max_abs_diff(coef(y4, 1), mat({{1.11, -.33}, {.72, -.01}})), 0.01);
  EXPECT_LE(max_abs_diff(coef(y4, 2), mat({{-.33, .38}, {-.70, .82}})), 0.01);
  EXPECT_LE(coef(y4, 3).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(max_abs_diff(y4.innovation, mat({{.30, .17}, {.17, .35}})), 0.01);

  const auto y5 = rep_at(m, 5);
  EXPECT_LE(max_abs_diff(coef(y5, 1), mat({{.25, 0}, {0, .35}})), 1e-10);
  EXPECT_LE(coef(y5, 2).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(max_abs_diff(y5.innovation, mat({{.94, .14}, {.14, .88}})), 0.01);

  const auto y6 = rep_at(m, 6);
  EXPECT_LE(max_abs_diff(coef(y6, 1), mat({{.74, .03}, {.08, .44}})), 0.01);
  EXPECT_LE(max_abs_diff(coef(y6, 2), mat({{-.19, -.01}, {-.02, -.15}})), 0.01);
  EXPECT_LE(max_abs_diff(y6.innovation, mat({{.48, .08}, {.08, .81}})), 0.01);

  const auto y7 = rep_at(m, 7);
  EXPECT_LE(max_abs_diff(coef(y7, 1), mat({{.71, -.06}, {.09, .02}})), 0.01);
  EXPECT_LE(max_abs_diff(coef(y7, 2), mat({{-.01, .12}, {-.10, .94}})), 0.01);
  EXPECT_LE(max_abs_diff(coef(y7, 3), mat({{0, -.04}, {.03, -.33}})), 0.01);
  EXPECT_LE(max_abs_diff(y7.innovation, mat({{.50, .03}, {.03, .21}})), 0.01);

  const auto y8 = rep_at(m, 8);
  EXPECT_LE(max_abs_diff(coef(y8, 1), mat({{.71, -.05}, {.15, .07}})), 0.01);
  EXPECT_LE(max_abs_diff(coef(y8, 2), mat({{-.02, .10}, {-.18, .82}})), 0.01);
  EXPECT_LE(max_abs_diff(y8.innovation, mat({{.50, .04}, {.04, .29}})), 0.01);
}

TEST(ConditionalRep, PrintedRepresentationsWithoutSwitchCorrelation) {
  auto m = example1_model();
  m.switch_rho = {0.0, 0.0};
  const auto y5 = rep_at(m, 5);
  EXPECT_LE(y5.stacked().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(max_abs_diff(y5.innovation, corr2(0.2)), 1e-12);
  const auto y6 = rep_at(m, 6);
  EXPECT_LE(max_abs_diff(coef(y6, 1), mat({{.70, -.01}, {.06, .39}})), 0.01);
  EXPECT_LE(coef(y6, 2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(max_abs_diff(y6.innovation, mat({{.51, .11}, {.11, .84}})), 0.01);
  const auto y7 = rep_at(m, 7);
  EXPECT_LE(max_abs_diff(coef(y7, 1), mat({{.71, -.05}, {.15, .07}})), 0.01);
  EXPECT_LE(max_abs_diff(coef(y7, 2), mat({{-.02, .10}, {-.18, .82}})), 0.01);
  EXPECT_LE(max_abs_diff(y7.innovation, mat({{.50, .04}, {.04, .29}})), 0.01);
}

TEST(ConditionalRep, IdentityAndSingularWindows) {
  const auto r = mcrs::conditional_rep(mcrs::WindowCorr{Matrix::Identity(6, 6), 2});
  EXPECT_LE(r.stacked().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(r.innovation.isIdentity(0.0));
  const Matrix singular = mat({{1, .5, .5}, {.5, 1, 1}, {.5, 1, 1}});
  EXPECT_THROW(mcrs::conditional_rep(mcrs::WindowCorr{singular, 1}), mcrs::DegeneracyError);
}

TEST(WindowDensity, StandardNormalAtOrigin) {
  const mcrs::WindowCorr w{Matrix::Identity(6, 6), 2};
  EXPECT_NEAR(mcrs::window_logdensity(mcrs::Vector::Zero(6), w), -3.0 * std::log(2.0 * M_PI), 1e-14);
}

TEST(WindowDensity, MatchesDenseInverse) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 10; ++rep) {
    Matrix a(8, 8);
    for (long i = 0; i < 64; ++i) a.data()[i] = n01(rng);
    Matrix cov = a * a.transpose() + 0.5 * Matrix::Identity(8, 8);
    const mcrs::Vector sd = cov.diagonal().cwiseSqrt();
    const Matrix corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    mcrs::Vector y(8);
    for (long i = 0; i < 8; ++i) y[i] = n01(rng);
    const double direct = -0.5 * (8 * std::log(2 * M_PI) + std::log(corr.determinant()) + y.dot(corr.inverse() * y));
    EXPECT_NEAR(mcrs::window_logdensity(y, mcrs::WindowCorr{corr, 2}), direct, 1e-10);
  }
}

TEST(WindowDensity, IntegratesToOne) {
  // Importance sampling with a N(0, 2I) proposal.
  const Matrix w = window(example1_model(), {0, 1}).matrix;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  const int n = 1000000;
  double acc = 0.0;
  mcrs::Vector y(4);
  for (int s = 0; s < n; ++s) {
    for (long i = 0; i < 4; ++i) y[i] = std::sqrt(2.0) * n01(rng);
    const double logq = -0.5 * (4 * std::log(4 * M_PI) + y.squaredNorm() / 2.0);
    acc += std::exp(mcrs::window_logdensity(y, mcrs::WindowCorr{w, 2}) - logq);
  }
  EXPECT_NEAR(acc / n, 1.0, 0.01);
}

TEST(ObsWindowDensity, CopulaPlusJacobian) {
  std::mt19937_64 rng(14);
  const auto m = random_model(rng, 2, 2, 1);
  Matrix x = mat({{0.3, -0.4}, {1.1, 0.2}, {-0.5, 0.9}});
  const RegimeWindow win{{0, 1, 1}};
  mcrs::Vector y(6);
  double jac = 0.0;
  for (long b = 0; b < 3; ++b) {
    for (long i = 0; i < 2; ++i) {
      const auto& eta = m.margins[win.labels[static_cast<std::size_t>(b)]][static_cast<std::size_t>(i)];
      y[(2 - b) * 2 + i] = mcrs::pit_to_normal(x(b, i), eta).value;
      jac += std::log(mcrs::pit_derivative(x(b, i), eta));
    }
  }
  const double expected = mcrs::window_logdensity(y, window(m, win.labels)) + jac;
  EXPECT_NEAR(mcrs::obs_window_logdensity(x, win, m), expected, 1e-10);

  // One observation: contemporaneous copula density times the margins.
  const Matrix x1 = x.topRows(1);
  double direct = 0.0;
  mcrs::Vector y1(2);
  for (long i = 0; i < 2; ++i) {
    y1[i] = mcrs::pit_to_normal(x1(0, i), m.margins[0][static_cast<std::size_t>(i)]).value;
    direct += mcrs::skewt_logpdf(x1(0, i), m.margins[0][static_cast<std::size_t>(i)]) + 0.5 * (std::log(2 * M_PI) + y1[i] * y1[i]);
  }
  direct += mcrs::window_logdensity(y1, mcrs::WindowCorr{m.contemp[0], 2});
  EXPECT_NEAR(mcrs::obs_window_logdensity(x1, RegimeWindow{{0}}, m), direct, 1e-10);
}
