#include "fimfuse/backprop.hpp"

#include "fimfuse/errors.hpp"
#include "fimfuse/loss.hpp"

namespace fimfuse::train {

template <class Real>
InputGradient<Real> classifier_backward(const fusion::ClassifierCache<Real>& cache,
                                        const std::vector<Vec<Real>>& dlogits,
                                        const ModelParams<Real>& params, ModelParams<Real>* grads) {
  const auto& layout = params.layout();
  if (dlogits.size() != layout.heads.size())
    throw DimensionError("classifier_backward: one logit gradient per head expected");

  Vec<Real> dh = Vec<Real>::Zero(cache.hidden.size());
  for (std::size_t t = 0; t < layout.heads.size(); ++t) {
    const auto& slot = layout.heads[t];
    dh.noalias() += params.weight(slot).transpose() * dlogits[t];
    if (grads) {
      grads->weight(slot).noalias() += dlogits[t] * cache.hidden.transpose();
      grads->bias(slot) += dlogits[t];
    }
  }

  InputGradient<Real> out;
  for (std::size_t l = layout.preoutput.size(); l-- > 0;) {
    const auto& slot = layout.preoutput[l];
    if (cache.masks[l].size() > 0) dh.array() *= cache.masks[l].array();
    Vec<Real> dz = (cache.preacts[l].array() > Real(0)).select(dh, Real(0));
    if (grads) grads->bias(slot) += dz;
    if (l > 0) {
      if (grads) grads->weight(slot).noalias() += dz * cache.layer_inputs[l - 1].transpose();
      dh = params.weight(slot).transpose() * dz;
      continue;
    }
    if (!cache.input.factored()) {
      if (grads) grads->weight(slot).noalias() += dz * cache.input.dense.transpose();
      out.dense = params.weight(slot).transpose() * dz;
    } else {
      const auto& p_img = cache.input.img;
      const auto& p_txt = cache.input.txt;
      const Eigen::Index n = p_img.size();
      const Eigen::Index m = slot.rows;
      Vec<Real> u(m * n);
      for (Eigen::Index j = 0; j < m; ++j) u.segment(j * n, n) = dz(j) * p_img;
      if (grads) {
        Eigen::Map<RowMatrix<Real>> g_stacked(grads->values().data() + slot.weight_offset, m * n, n);
        g_stacked.noalias() += u * p_txt.transpose();
      }
      Eigen::Map<const RowMatrix<Real>> rows(cache.cross_rows.data(), m, n);
      out.img = rows.transpose() * dz;
      Eigen::Map<const RowMatrix<Real>> stacked(params.values().data() + slot.weight_offset, m * n, n);
      out.txt = stacked.transpose() * u;
    }
  }
  return out;
}

template <class Real>
Vec<Real> projection_backward(const fusion::ProjectionCache<Real>& cache, Vec<Real> d_out,
                              std::span<const DenseSlot> layers, const ModelParams<Real>& params,
                              ModelParams<Real>* grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& slot = layers[l];
    if (cache.masks[l].size() > 0) d_out.array() *= cache.masks[l].array();
    if (grads) {
      grads->weight(slot).noalias() += d_out * cache.inputs[l].transpose();
      grads->bias(slot) += d_out;
    }
    d_out = params.weight(slot).transpose() * d_out;
  }
  return d_out;
}

template <class Real>
void backward(const fusion::ForwardCache<Real>& cache, const embedstore::EmbeddingRecord& record,
              const ModelParams<Real>& params, ModelParams<Real>& grads) {
  if (cache.params_version != params.version())
    throw ContractViolation("backward: parameters changed since the forward pass");
  if (grads.size() != params.size())
    throw DimensionError("backward: gradient buffer does not match parameter layout");

  const auto& cfg = params.config();
  const auto dlogits = loss_logit_gradients(cache.output, record, cfg.tasks);
  auto d_in = classifier_backward(cache.classifier, dlogits, params, &grads);

  const auto& p_img = cache.p_img;
  const auto& p_txt = cache.p_txt;
  const Eigen::Index n = p_img.size();
  Vec<Real> d_img;
  Vec<Real> d_txt;
  if (cache.classifier.input.factored()) {
    d_img = std::move(d_in.img);
    d_txt = std::move(d_in.txt);
  } else {
    switch (cfg.fusion_mode) {
      case FusionMode::Concat:
        d_img = d_in.dense.head(n);
        d_txt = d_in.dense.tail(n);
        break;
      case FusionMode::Align:
        d_img = d_in.dense.cwiseProduct(p_txt);
        d_txt = d_in.dense.cwiseProduct(p_img);
        break;
      case FusionMode::Cross: {
        Eigen::Map<const RowMatrix<Real>> g(d_in.dense.data(), n, n);
        d_img = g * p_txt;
        d_txt = g.transpose() * p_img;
        break;
      }
    }
  }
  const auto& layout = params.layout();
  projection_backward(cache.img, std::move(d_img), layout.img_proj, params, &grads);
  projection_backward(cache.txt, std::move(d_txt), layout.txt_proj, params, &grads);
}

#define FIMFUSE_INSTANTIATE(Real)                                                                  \
  template InputGradient<Real> classifier_backward(const fusion::ClassifierCache<Real>&,           \
                                                   const std::vector<Vec<Real>>&,                   \
                                                   const ModelParams<Real>&, ModelParams<Real>*);   \
  template Vec<Real> projection_backward(const fusion::ProjectionCache<Real>&, Vec<Real>,          \
                                         std::span<const DenseSlot>, const ModelParams<Real>&,      \
                                         ModelParams<Real>*);                                       \
  template void backward(const fusion::ForwardCache<Real>&, const embedstore::EmbeddingRecord&,    \
                         const ModelParams<Real>&, ModelParams<Real>&);

FIMFUSE_INSTANTIATE(float)
FIMFUSE_INSTANTIATE(double)

}  // namespace fimfuse::train
