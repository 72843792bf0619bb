#pragma once

#include <span>
#include <string>
#include <vector>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/metrics.hpp"
#include "fimfuse/model.hpp"

namespace fimfuse::train {

/// Eval-mode probabilities: probs[example][task][class].
struct Predictions {
  std::vector<std::size_t> indices;
  std::vector<std::vector<std::vector<double>>> probs;
};

template <class Real>
Predictions predict(const embedstore::Dataset& dataset, std::span<const std::size_t> indices,
                    const ModelParams<Real>& params, int threads = 1);

/// Per task: AUROC (binary tasks) and micro-F1 at `threshold`. With more
/// than one task a pooled micro-F1 over every task's cells is added under
/// task "all". Undefined metrics are reported with a flag instead of thrown.
metrics::MetricsReport evaluate_predictions(const embedstore::Dataset& dataset,
                                            const Predictions& predictions,
                                            const std::string& split, double threshold = 0.5);

template <class Real>
metrics::MetricsReport evaluate(const embedstore::Dataset& dataset, embedstore::Split split,
                                const ModelParams<Real>& params, int threads = 1);

}  // namespace fimfuse::train
