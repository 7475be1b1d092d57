// Builds the bivariate two-regime model, prints the regime correlation
// matrices, the window correlation across a switch and the stochastic
// representation of each observation along a fixed regime path.
#include <iomanip>
#include <iostream>

#include "mcrs/mcrs.hpp"

namespace {

mcrs::Matrix corr2(double r) {
  mcrs::Matrix m(2, 2);
  m << 1.0, r, r, 1.0;
  return m;
}

}  // namespace

int main() {
  using namespace mcrs;
  RegimeModel m = RegimeModel::independent(2, 2, 0);
  m.orders = {{1, 2}, {1, 2}};
  m.pacf = {{{0.8}, {0.6, 0.5}}, {{0.7}, {0.4, 0.8}}};
  m.contemp = {corr2(0.7), corr2(0.2)};
  m.switch_rho = {0.25, 0.35};
  m.validate();

  std::cout << std::fixed << std::setprecision(2);
  for (std::size_t g = 0; g < m.num_regimes; ++g) {
    std::cout << "R_" << g + 1 << ":\n" << m.regime_corr(g).matrix << "\n\n";
  }

  const RegimeWindow w{{0, 0, 0, 1}};
  const auto rc = regime_corrs(m, 3, true);
  const WindowCorr wc = build_window_corr(w, rc, SwitchCorr{m.switch_rho});
  std::cout << "window " << w.describe() << ":\n" << wc.matrix << "\n\n";

  const std::vector<std::size_t> path = {0, 0, 0, 0, 1, 1, 1, 1};
  for (std::size_t t = 3; t < path.size(); ++t) {
    const RegimeWindow win{{path.begin() + static_cast<std::ptrdiff_t>(t - 3), path.begin() + static_cast<std::ptrdiff_t>(t + 1)}};
    const StochasticRep rep = conditional_rep(build_window_corr(win, rc, SwitchCorr{m.switch_rho}));
    std::cout << "Y" << t + 1 << " coefficients (lag 1 first):\n" << rep.stacked() << "\n";
    std::cout << "innovation covariance:\n" << rep.innovation << "\n\n";
  }
  return 0;
}
