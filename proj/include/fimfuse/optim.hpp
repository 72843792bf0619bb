#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fimfuse/model.hpp"

namespace fimfuse::train {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AdamW with decoupled weight decay. One step with gradient g at step t:
///
///   theta <- theta * (1 - lr * wd)
///   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
///   theta <- theta - (lr / (1 - b1^t)) * m / (sqrt(v) / sqrt(1 - b2^t) + eps)
///
/// Decay applies to every parameter, biases included.
template <class Real>
class AdamW {
 public:
  AdamW(std::size_t parameter_count, AdamWConfig config);

  void step(std::span<Real> params, std::span<const Real> grads);
  void step(ModelParams<Real>& params, const ModelParams<Real>& grads) {
    step(params.values(), grads.values());
  }

  const AdamWConfig& config() const { return config_; }
  std::uint64_t step_count() const { return t_; }
  std::span<const Real> first_moment() const { return m_; }
  std::span<const Real> second_moment() const { return v_; }

 private:
  AdamWConfig config_;
  std::vector<Real> m_;
  std::vector<Real> v_;
  std::uint64_t t_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

/// L2 norm over every entry, accumulated in double.
template <class Real>
double global_norm(std::span<const Real> grads);

/// Global-norm clipping: rescales by clip / ||g|| when ||g|| > clip. Returns
/// the norm before clipping. Non-finite gradients raise NumericError and leave
/// `grads` untouched.
template <class Real>
double clip_gradients(std::span<Real> grads, double clip);

}  // namespace fimfuse::train
