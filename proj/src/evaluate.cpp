#include "fimfuse/evaluate.hpp"

#include "fimfuse/errors.hpp"
#include "fimfuse/fusion.hpp"
#include "fimfuse/loss.hpp"
#include "parallel.hpp"

namespace fimfuse::train {

template <class Real>
Predictions predict(const embedstore::Dataset& dataset, std::span<const std::size_t> indices,
                    const ModelParams<Real>& params, int threads) {
  Predictions out;
  out.indices.assign(indices.begin(), indices.end());
  out.probs.resize(indices.size());
  const fusion::RunOptions opts;  // eval
  detail::parallel_for(indices.size(), threads, [&](std::size_t i) {
    const auto result = fusion::model_forward(dataset.records[indices[i]], params, opts);
    auto& row = out.probs[i];
    for (const auto& head : result.heads)
      row.emplace_back(head.probs.data(), head.probs.data() + head.probs.size());
  });
  return out;
}

metrics::MetricsReport evaluate_predictions(const embedstore::Dataset& dataset,
                                            const Predictions& predictions,
                                            const std::string& split, double threshold) {
  const auto& tasks = dataset.manifest.tasks;
  const std::size_t count = predictions.indices.size();
  metrics::MetricsReport report;
  std::vector<metrics::ScoredExample> pooled(count);

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::vector<metrics::ScoredExample> cells;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& rec = dataset.records[predictions.indices[i]];
      const auto targets = task_targets(rec, tasks)[t];
      const auto& probs = predictions.probs[i][t];
      metrics::ScoredExample ex;
      if (tasks[t].kind == TaskKind::BinarySoftmax) {
        ex = metrics::binary_as_two_class(rec.id, probs[1], targets[0]);
        scores.push_back(probs[1]);
        labels.push_back(targets[0]);
      } else {
        ex = metrics::ScoredExample{rec.id, probs, targets};
      }
      auto& pool = pooled[i];
      pool.id = rec.id;
      pool.scores.insert(pool.scores.end(), ex.scores.begin(), ex.scores.end());
      pool.labels.insert(pool.labels.end(), ex.labels.begin(), ex.labels.end());
      cells.push_back(std::move(ex));
    }

    if (tasks[t].kind == TaskKind::BinarySoftmax) {
      metrics::MetricEntry e{split, tasks[t].name, "auroc", std::nullopt, count, {}, std::nullopt};
      if (count == 0) {
        e.degenerate_flags.push_back("empty_split");
      } else {
        try {
          e.value = metrics::auroc(scores, labels);
        } catch (const UndefinedMetricError&) {
          e.degenerate_flags.push_back("single_class");
        }
      }
      report.entries.push_back(std::move(e));
    }
    metrics::MetricEntry f{split, tasks[t].name, "micro_f1", std::nullopt, count, {}, std::nullopt};
    if (count == 0) {
      f.degenerate_flags.push_back("empty_split");
    } else {
      const auto r = metrics::micro_f1(cells, threshold);
      f.value = r.f1;
      f.counts = r;
      if (r.degenerate) f.degenerate_flags.push_back("no_positives");
    }
    report.entries.push_back(std::move(f));
  }

  if (tasks.size() > 1) {
    metrics::MetricEntry f{split, "all", "micro_f1", std::nullopt, count, {}, std::nullopt};
    if (count == 0) {
      f.degenerate_flags.push_back("empty_split");
    } else {
      const auto r = metrics::micro_f1(pooled, threshold);
      f.value = r.f1;
      f.counts = r;
      if (r.degenerate) f.degenerate_flags.push_back("no_positives");
    }
    report.entries.push_back(std::move(f));
  }
  return report;
}

template <class Real>
metrics::MetricsReport evaluate(const embedstore::Dataset& dataset, embedstore::Split split,
                                const ModelParams<Real>& params, int threads) {
  const auto idx = dataset.indices(split);
  const auto preds = predict(dataset, idx, params, threads);
  return evaluate_predictions(dataset, preds, std::string(embedstore::to_string(split)));
}

template Predictions predict(const embedstore::Dataset&, std::span<const std::size_t>,
                             const ModelParams<float>&, int);
template Predictions predict(const embedstore::Dataset&, std::span<const std::size_t>,
                             const ModelParams<double>&, int);
template metrics::MetricsReport evaluate(const embedstore::Dataset&, embedstore::Split,
                                         const ModelParams<float>&, int);
template metrics::MetricsReport evaluate(const embedstore::Dataset&, embedstore::Split,
                                         const ModelParams<double>&, int);

}  // namespace fimfuse::train
