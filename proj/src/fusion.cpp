#include "fimfuse/fusion.hpp"

#include <cmath>

#include "fimfuse/errors.hpp"

namespace fimfuse::fusion {

namespace {

template <class Real>
void apply_dropout(Vec<Real>& h, double rate, const RunOptions& opts, Vec<Real>* mask_out) {
  if (opts.mode != Mode::Train || rate == 0.0) return;
  if (!opts.keep_all_units && opts.rng == nullptr)
    throw ContractViolation("train-mode forward with dropout needs an rng");
  Vec<Real> mask(h.size());
  const Real scale = static_cast<Real>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const bool keep = opts.keep_all_units || opts.rng->uniform() >= rate;
    mask(i) = keep ? scale : Real(0);
  }
  h.array() *= mask.array();
  if (mask_out) *mask_out = std::move(mask);
}

template <class Real>
void check_pair(const Vec<Real>& a, const Vec<Real>& b, const char* op) {
  if (a.size() != b.size())
    throw DimensionError(std::string(op) + ": projection lengths differ (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

template <class Real>
void head_probabilities(const TaskSpec& task, HeadOutput<Real>& head) {
  const auto& z = head.logits;
  head.probs.resize(z.size());
  if (task.kind == TaskKind::BinarySoftmax) {
    const Real mx = z.maxCoeff();
    head.probs = (z.array() - mx).exp().matrix();
    head.probs /= head.probs.sum();
  } else {
    for (Eigen::Index c = 0; c < z.size(); ++c) {
      // Branching keeps exp() from overflowing for large |z|.
      const Real v = z(c);
      head.probs(c) = v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                             : std::exp(v) / (Real(1) + std::exp(v));
    }
  }
}

}  // namespace

template <class Real>
Vec<Real> project(const Vec<Real>& x, std::span<const DenseSlot> layers,
                  const ModelParams<Real>& params, const RunOptions& opts,
                  ProjectionCache<Real>* cache) {
  if (layers.empty()) throw DimensionError("project: empty layer stack");
  if (x.size() != layers.front().cols)
    throw DimensionError("project: input length " + std::to_string(x.size()) +
                         " does not match layer input " + std::to_string(layers.front().cols));
  if (cache) {
    cache->inputs.clear();
    cache->masks.clear();
  }
  Vec<Real> h = x;
  for (const auto& slot : layers) {
    if (cache) cache->inputs.push_back(h);
    Vec<Real> out = params.weight(slot) * h + params.bias(slot);
    Vec<Real> mask;
    apply_dropout(out, params.config().dropout_rate, opts, &mask);
    if (cache) cache->masks.push_back(std::move(mask));
    h = std::move(out);
  }
  return h;
}

template <class Real>
RowMatrix<Real> fuse_cross(const Vec<Real>& p_img, const Vec<Real>& p_txt) {
  check_pair(p_img, p_txt, "fuse_cross");
  return p_img * p_txt.transpose();
}

template <class Real>
Vec<Real> fuse_align(const Vec<Real>& p_img, const Vec<Real>& p_txt) {
  check_pair(p_img, p_txt, "fuse_align");
  return p_img.cwiseProduct(p_txt);
}

template <class Real>
Vec<Real> fuse_concat(const Vec<Real>& p_img, const Vec<Real>& p_txt) {
  check_pair(p_img, p_txt, "fuse_concat");
  Vec<Real> out(p_img.size() + p_txt.size());
  out << p_img, p_txt;
  return out;
}

template <class Real>
FusedInput<Real> fuse(FusionMode mode, const Vec<Real>& p_img, const Vec<Real>& p_txt) {
  switch (mode) {
    case FusionMode::Concat: return FusedInput<Real>::materialized(fuse_concat(p_img, p_txt));
    case FusionMode::Align: return FusedInput<Real>::materialized(fuse_align(p_img, p_txt));
    case FusionMode::Cross:
      check_pair(p_img, p_txt, "fuse");
      return FusedInput<Real>::cross(p_img, p_txt);
  }
  throw ModeError("unknown fusion mode");
}

template <class Real>
ModelOutput<Real> classifier_forward(const FusedInput<Real>& input, const ModelParams<Real>& params,
                                     const RunOptions& opts, ClassifierCache<Real>* cache) {
  const auto& layout = params.layout();
  const auto& cfg = params.config();
  const auto& first = layout.preoutput.front();

  Vec<Real> z;
  Vec<Real> cross_rows;
  if (!input.factored()) {
    if (input.dense.size() != first.cols)
      throw DimensionError("classifier: fused length " + std::to_string(input.dense.size()) +
                           ", expected " + std::to_string(first.cols));
    z = params.weight(first) * input.dense + params.bias(first);
  } else {
    if (cfg.fusion_mode != FusionMode::Cross)
      throw ModeError("factored classifier input requires a cross-fusion model");
    const Eigen::Index n = input.img.size();
    if (input.txt.size() != n || n * n != first.cols)
      throw DimensionError("classifier: factored input of width " + std::to_string(n) +
                           " does not match first layer input " + std::to_string(first.cols));
    // Unit j sees p_img^T W_j p_txt with W_j the j-th weight row viewed as
    // n x n. Stacking all W_j gives an (m*n) x n matrix, so one product
    // yields every W_j p_txt, then a second contracts each block with p_img.
    const Eigen::Index m = first.rows;
    Eigen::Map<const RowMatrix<Real>> stacked(params.values().data() + first.weight_offset, m * n, n);
    cross_rows = stacked * input.txt;
    Eigen::Map<const RowMatrix<Real>> blocks(cross_rows.data(), m, n);
    z = blocks * input.img + params.bias(first);
  }

  if (cache) {
    cache->input = input;
    cache->cross_rows = std::move(cross_rows);
    cache->layer_inputs.clear();
    cache->preacts.clear();
    cache->masks.clear();
  }

  Vec<Real> h;
  for (std::size_t l = 0; l < layout.preoutput.size(); ++l) {
    if (l > 0) {
      const auto& slot = layout.preoutput[l];
      if (cache) cache->layer_inputs.push_back(h);
      z = params.weight(slot) * h + params.bias(slot);
    }
    h = z.cwiseMax(Real(0));
    Vec<Real> mask;
    apply_dropout(h, cfg.dropout_rate, opts, &mask);
    if (cache) {
      cache->preacts.push_back(z);
      cache->masks.push_back(std::move(mask));
    }
  }

  ModelOutput<Real> out;
  out.heads.resize(layout.heads.size());
  for (std::size_t t = 0; t < layout.heads.size(); ++t) {
    const auto& slot = layout.heads[t];
    out.heads[t].logits = params.weight(slot) * h + params.bias(slot);
    head_probabilities(cfg.tasks[t], out.heads[t]);
  }
  if (cache) cache->hidden = std::move(h);
  return out;
}

template <class Real>
ModelOutput<Real> model_forward(const embedstore::EmbeddingRecord& record,
                                const ModelParams<Real>& params, const RunOptions& opts,
                                ForwardCache<Real>* cache) {
  const auto& cfg = params.config();
  if (static_cast<int>(record.image_vec.size()) != cfg.d_img ||
      static_cast<int>(record.text_vec.size()) != cfg.d_txt)
    throw DimensionError("record '" + record.id + "' has dims (" +
                         std::to_string(record.image_vec.size()) + ", " +
                         std::to_string(record.text_vec.size()) + "), model expects (" +
                         std::to_string(cfg.d_img) + ", " + std::to_string(cfg.d_txt) + ")");
  const auto& layout = params.layout();
  Vec<Real> p_img = project<Real>(to_vec<Real>(record.image_vec), layout.img_proj, params, opts,
                                  cache ? &cache->img : nullptr);
  Vec<Real> p_txt = project<Real>(to_vec<Real>(record.text_vec), layout.txt_proj, params, opts,
                                  cache ? &cache->txt : nullptr);
  auto fused = fuse(cfg.fusion_mode, p_img, p_txt);
  auto out = classifier_forward(fused, params, opts, cache ? &cache->classifier : nullptr);
  if (cache) {
    cache->params_version = params.version();
    cache->p_img = std::move(p_img);
    cache->p_txt = std::move(p_txt);
    cache->output = out;
  }
  return out;
}

#define FIMFUSE_INSTANTIATE(Real)                                                              \
  template Vec<Real> project(const Vec<Real>&, std::span<const DenseSlot>,                     \
                             const ModelParams<Real>&, const RunOptions&, ProjectionCache<Real>*); \
  template RowMatrix<Real> fuse_cross(const Vec<Real>&, const Vec<Real>&);                     \
  template Vec<Real> fuse_align(const Vec<Real>&, const Vec<Real>&);                           \
  template Vec<Real> fuse_concat(const Vec<Real>&, const Vec<Real>&);                          \
  template FusedInput<Real> fuse(FusionMode, const Vec<Real>&, const Vec<Real>&);              \
  template ModelOutput<Real> classifier_forward(const FusedInput<Real>&, const ModelParams<Real>&, \
                                                const RunOptions&, ClassifierCache<Real>*);    \
  template ModelOutput<Real> model_forward(const embedstore::EmbeddingRecord&,                 \
                                           const ModelParams<Real>&, const RunOptions&,        \
                                           ForwardCache<Real>*);

FIMFUSE_INSTANTIATE(float)
FIMFUSE_INSTANTIATE(double)

}  // namespace fimfuse::fusion
