#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "mcrs/errors.hpp"
#include "mcrs/likelihood.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/margins.hpp"
#include "mcrs/model.hpp"

namespace mcrs {

using Rng = std::mt19937_64;
inline constexpr const char* kGeneratorName = "std::mt19937_64";

struct SimOutput {
  Matrix x;       // T x d observations
  Matrix y;       // T x d latent Gaussian scores
  RegimeSequence v;
  std::uint64_t seed = 0;
  std::string generator = kGeneratorName;
};

namespace detail {

inline std::size_t draw_index(Rng& rng, const auto& probs) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  const auto n = static_cast<std::size_t>(probs.size());
  for (std::size_t g = 0; g + 1 < n; ++g) {
    acc += probs[static_cast<Eigen::Index>(g)];
    if (u < acc) return g;
  }
  return n - 1;
}

}  // namespace detail

inline RegimeSequence sample_regimes(const ChainParams& chain, std::size_t T, Rng& rng) {
  chain.validate();
  RegimeSequence v;
  v.labels.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    v.labels[t] = t == 0 ? detail::draw_index(rng, chain.initial)
                         : detail::draw_index(rng, chain.transition.row(static_cast<Eigen::Index>(v.labels[t - 1])));
  }
  return v;
}

inline RegimeSequence sample_regimes(const ChainParams& chain, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  return sample_regimes(chain, T, rng);
}

/// Draw observations given a regime path: each latent block from its exact
/// conditional law given the previous min(t, k) blocks, then mapped through
/// the inverse PIT of the current regime's margins.
inline SimOutput sample_series(const RegimeModel& m, const RegimeSequence& v, Rng& rng) {
  m.validate();
  v.validate(m.num_regimes);
  const WindowPatterns wp(m);
  const std::size_t T = v.size(), d = m.dim, k1 = wp.tuple_length();
  const auto dd = static_cast<Eigen::Index>(d);
  SimOutput out;
  out.v = v;
  out.y.resize(static_cast<Eigen::Index>(T), dd);
  out.x.resize(static_cast<Eigen::Index>(T), dd);
  std::normal_distribution<double> n01;
  Vector z(dd);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t len = std::min(t + 1, k1);
    const std::size_t code = wp.encode(std::span<const std::size_t>(v.labels).subspan(t + 1 - len, len));
    const auto& e = wp.entry(len, code);
    for (Eigen::Index i = 0; i < dd; ++i) z[i] = n01(rng);
    Vector y = e.chol * z;
    for (std::size_t l = 1; l < len; ++l) {
      y.noalias() += e.coef.middleCols(static_cast<Eigen::Index>(l - 1) * dd, dd) *
                     out.y.row(static_cast<Eigen::Index>(t - l)).transpose();
    }
    out.y.row(static_cast<Eigen::Index>(t)) = y.transpose();
    for (std::size_t i = 0; i < d; ++i) {
      out.x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
          normal_to_margin(y[static_cast<Eigen::Index>(i)], m.margins[v.labels[t]][i]);
    }
  }
  return out;
}

/// Regime path from the chain, then observations; reproducible from (model, T, seed).
inline SimOutput sample_series(const RegimeModel& m, std::size_t T, std::uint64_t seed) {
  if (T == 0) throw DomainError("sample_series: length must be positive");
  Rng rng(seed);
  const RegimeSequence v = sample_regimes(m.chain, T, rng);
  SimOutput out = sample_series(m, v, rng);
  out.seed = seed;
  return out;
}

}  // namespace mcrs
