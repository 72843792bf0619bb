#pragma once

#include <algorithm>
#include <cmath>

#include "fimfuse/backprop.hpp"
#include "fimfuse/fusion.hpp"
#include "fimfuse/loss.hpp"

namespace fimfuse::testing {

inline constexpr double kFdStep = 1e-5;

// Train-mode loss with dropout masks replayed from a fixed seed.
inline double replay_loss(const embedstore::EmbeddingRecord& rec, const ModelParams<double>& p,
                          std::uint64_t mask_seed) {
  Rng rng(mask_seed);
  const auto out =
      fusion::model_forward(rec, p, fusion::RunOptions{fusion::Mode::Train, &rng, false});
  return train::loss(out, rec, p.config().tasks).total;
}

inline ModelParams<double> analytic_gradient(const embedstore::EmbeddingRecord& rec,
                                             const ModelParams<double>& p,
                                             std::uint64_t mask_seed) {
  Rng rng(mask_seed);
  fusion::ForwardCache<double> cache;
  fusion::model_forward(rec, p, fusion::RunOptions{fusion::Mode::Train, &rng, false}, &cache);
  ModelParams<double> g(p.config());
  train::backward(cache, rec, p, g);
  return g;
}

// Worst relative error between analytic and central-difference gradients
// over every parameter. Gradients below the finite-difference noise floor
// are compared on an absolute scale.
inline double worst_fd_error(const embedstore::EmbeddingRecord& rec, ModelParams<double> p,
                             std::uint64_t mask_seed) {
  const auto g = analytic_gradient(rec, p, mask_seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p.values()[i];
    p.values()[i] = saved + kFdStep;
    const double up = replay_loss(rec, p, mask_seed);
    p.values()[i] = saved - kFdStep;
    const double down = replay_loss(rec, p, mask_seed);
    p.values()[i] = saved;
    const double fd = (up - down) / (2 * kFdStep);
    const double a = g.values()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
  }
  return worst;
}

}  // namespace fimfuse::testing
