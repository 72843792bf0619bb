#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/model.hpp"
#include "fimfuse/rng.hpp"

namespace fimfuse::fusion {

enum class Mode { Eval, Train };

struct RunOptions {
  Mode mode = Mode::Eval;
  /// Dropout mask source; required in Train mode when dropout_rate > 0.
  Rng* rng = nullptr;
  /// Train mode with every unit kept (masks still carry the 1/(1-rate) scale).
  bool keep_all_units = false;
};

/// Per-layer inputs and dropout masks of one projection stack.
template <class Real>
struct ProjectionCache {
  std::vector<Vec<Real>> inputs;
  std::vector<Vec<Real>> masks;  // empty entries when no dropout was applied
};

/// Affine chain over `x` through `layers`. Dropout follows every layer in
/// Train mode; there is no activation.
template <class Real>
Vec<Real> project(const Vec<Real>& x, std::span<const DenseSlot> layers,
                  const ModelParams<Real>& params, const RunOptions& opts,
                  ProjectionCache<Real>* cache = nullptr);

/// Feature interaction matrix R[a][b] = p_i[a] * p_t[b]. Flattening is
/// row-major, image index major.
template <class Real>
RowMatrix<Real> fuse_cross(const Vec<Real>& p_img, const Vec<Real>& p_txt);

template <class Real>
Vec<Real> fuse_align(const Vec<Real>& p_img, const Vec<Real>& p_txt);

template <class Real>
Vec<Real> fuse_concat(const Vec<Real>& p_img, const Vec<Real>& p_txt);

/// Classifier input. Concat and Align always carry the dense vector. Cross
/// normally stays factored as (p_img, p_txt) so the n*n vector is never
/// built; a dense Cross input (length n*n) is accepted too.
template <class Real>
struct FusedInput {
  Vec<Real> dense;
  Vec<Real> img;
  Vec<Real> txt;

  bool factored() const { return dense.size() == 0; }

  static FusedInput materialized(Vec<Real> r) {
    FusedInput f;
    f.dense = std::move(r);
    return f;
  }
  static FusedInput cross(Vec<Real> p_img, Vec<Real> p_txt) {
    FusedInput f;
    f.img = std::move(p_img);
    f.txt = std::move(p_txt);
    return f;
  }
};

template <class Real>
FusedInput<Real> fuse(FusionMode mode, const Vec<Real>& p_img, const Vec<Real>& p_txt);

template <class Real>
struct HeadOutput {
  Vec<Real> logits;
  Vec<Real> probs;  // softmax for binary tasks, per-class sigmoid otherwise
};

template <class Real>
struct ModelOutput {
  std::vector<HeadOutput<Real>> heads;

  /// P(hateful) from the primary head.
  Real hateful_probability() const { return heads.front().probs(1); }
};

template <class Real>
struct ClassifierCache {
  FusedInput<Real> input;
  /// Factored Cross only: W_j * p_txt for every unit j, laid out m x n.
  Vec<Real> cross_rows;
  std::vector<Vec<Real>> layer_inputs;  // input of pre-output layers 1..L-1
  std::vector<Vec<Real>> preacts;
  std::vector<Vec<Real>> masks;
  Vec<Real> hidden;  // input of the heads
};

template <class Real>
ModelOutput<Real> classifier_forward(const FusedInput<Real>& input, const ModelParams<Real>& params,
                                     const RunOptions& opts, ClassifierCache<Real>* cache = nullptr);

template <class Real>
struct ForwardCache {
  std::uint64_t params_version = 0;
  ProjectionCache<Real> img;
  ProjectionCache<Real> txt;
  Vec<Real> p_img;
  Vec<Real> p_txt;
  ClassifierCache<Real> classifier;
  ModelOutput<Real> output;
};

/// project -> fuse -> classify for one record.
template <class Real>
ModelOutput<Real> model_forward(const embedstore::EmbeddingRecord& record,
                                const ModelParams<Real>& params, const RunOptions& opts,
                                ForwardCache<Real>* cache = nullptr);

template <class Real>
Vec<Real> to_vec(std::span<const float> values) {
  Vec<Real> out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out(static_cast<Eigen::Index>(i)) = values[i];
  return out;
}

}  // namespace fimfuse::fusion
