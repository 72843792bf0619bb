#pragma once

#include <vector>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/fusion.hpp"

namespace fimfuse::train {

struct LossValue {
  double total = 0.0;
  std::vector<double> per_task;
};

/// log(1 + e^x) without overflow.
double softplus(double x);

/// Cross-entropy of a softmax over `logits` against class `target`, in
/// log-sum-exp form.
double softmax_cross_entropy(std::span<const double> logits, int target);

/// Mean per-class sigmoid binary cross-entropy, in logit space.
double sigmoid_bce_mean(std::span<const double> logits, std::span<const std::uint8_t> targets);

/// Per-task targets of a record: the class index for binary tasks, the 0/1
/// vector for multilabel tasks.
std::vector<std::vector<std::uint8_t>> task_targets(const embedstore::EmbeddingRecord& record,
                                                    const TaskSchema& tasks);

/// Softmax cross-entropy for the primary task, mean sigmoid BCE per
/// multilabel task, summed without weights. Never evaluates log(0).
template <class Real>
LossValue loss(const fusion::ModelOutput<Real>& output, const embedstore::EmbeddingRecord& record,
               const TaskSchema& tasks);

/// d(total loss)/d(logits) for every head.
template <class Real>
std::vector<Vec<Real>> loss_logit_gradients(const fusion::ModelOutput<Real>& output,
                                            const embedstore::EmbeddingRecord& record,
                                            const TaskSchema& tasks);

}  // namespace fimfuse::train
