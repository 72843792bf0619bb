#pragma once

#include <span>
#include <vector>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/fusion.hpp"

namespace fimfuse::train {

/// Gradient of the loss with respect to the classifier input. `dense` is set
/// when the forward pass used a materialized r; `img`/`txt` when it ran the
/// factored cross path.
template <class Real>
struct InputGradient {
  Vec<Real> dense;
  Vec<Real> img;
  Vec<Real> txt;
};

/// Reverse pass through heads and pre-output layers. Parameter gradients are
/// accumulated into `grads` when it is non-null.
///
/// For the factored cross path, with u = dz (x) p_img, the first-layer weight
/// gradient viewed as (m*n) x n receives u p_txt^T, d p_img = Y^T dz where Y
/// holds the cached W_j p_txt rows, and d p_txt = stacked(W)^T u. No n*n
/// vector is formed per unit.
template <class Real>
InputGradient<Real> classifier_backward(const fusion::ClassifierCache<Real>& cache,
                                        const std::vector<Vec<Real>>& dlogits,
                                        const ModelParams<Real>& params, ModelParams<Real>* grads);

template <class Real>
Vec<Real> projection_backward(const fusion::ProjectionCache<Real>& cache, Vec<Real> d_out,
                              std::span<const DenseSlot> layers, const ModelParams<Real>& params,
                              ModelParams<Real>* grads);

/// Accumulates d(loss)/d(params) for one record into `grads`. The cache must
/// come from a forward pass on the same, unmodified parameters; otherwise a
/// ContractViolation is thrown.
template <class Real>
void backward(const fusion::ForwardCache<Real>& cache, const embedstore::EmbeddingRecord& record,
              const ModelParams<Real>& params, ModelParams<Real>& grads);

}  // namespace fimfuse::train
