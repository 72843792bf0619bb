#include "fimfuse/optim.hpp"

#include <cmath>

#include "fimfuse/errors.hpp"

namespace fimfuse::train {

template <class Real>
AdamW<Real>::AdamW(std::size_t parameter_count, AdamWConfig config)
    : config_(config), m_(parameter_count, Real(0)), v_(parameter_count, Real(0)) {}

template <class Real>
void AdamW<Real>::step(std::span<Real> params, std::span<const Real> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw DimensionError("AdamW: parameter/gradient sizes do not match optimizer state");
  ++t_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const Real decay = static_cast<Real>(1.0 - lr * config_.weight_decay);
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const Real step_size = static_cast<Real>(lr / bc1);
  const Real bc2_sqrt = static_cast<Real>(std::sqrt(bc2));
  const Real eps = static_cast<Real>(config_.epsilon);
  const Real rb1 = static_cast<Real>(b1);
  const Real rb2 = static_cast<Real>(b2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Real g = grads[i];
    params[i] *= decay;
    m_[i] = rb1 * m_[i] + (Real(1) - rb1) * g;
    v_[i] = rb2 * v_[i] + (Real(1) - rb2) * g * g;
    params[i] -= step_size * m_[i] / (std::sqrt(v_[i]) / bc2_sqrt + eps);
  }
}

template class AdamW<float>;
template class AdamW<double>;

template <class Real>
double global_norm(std::span<const Real> grads) {
  double sum = 0.0;
  for (Real g : grads) sum += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sum);
}

template <class Real>
double clip_gradients(std::span<Real> grads, double clip) {
  if (!(clip > 0.0)) throw ConfigError("gradient clip value must be positive");
  const double norm = global_norm<Real>(grads);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > clip) {
    const double scale = clip / norm;
    for (auto& g : grads) g = static_cast<Real>(g * scale);
  }
  return norm;
}

template double global_norm<float>(std::span<const float>);
template double global_norm<double>(std::span<const double>);
template double clip_gradients<float>(std::span<float>, double);
template double clip_gradients<double>(std::span<double>, double);

}  // namespace fimfuse::train
