#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fimfuse::metrics {

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties counting
/// one half. O(N log N) via average ranks.
///
/// Throws UndefinedMetricError unless both classes are present, and
/// ConfigError for non-finite scores or mismatched lengths.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct F1Result {
  double f1 = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  /// Set when there are no predicted and no true positives; f1 is then 0.
  bool degenerate = false;
  double threshold = 0.5;
};

/// One example's per-class scores and 0/1 targets.
struct ScoredExample {
  std::string id;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

/// Micro-F1 with global pooling: every (example, class) cell is binarized at
/// `threshold` (score >= threshold is positive) and TP/FP/FN are summed over
/// all cells before F1 = 2TP / (2TP + FP + FN).
F1Result micro_f1(std::span<const ScoredExample> examples, double threshold = 0.5);

/// A binary task scored as a two-class one-hot problem: scores
/// [1 - p, p], labels [1 - y, y].
ScoredExample binary_as_two_class(std::string id, double p, std::uint8_t label);

struct MetricEntry {
  std::string split;
  std::string task;
  std::string metric;
  std::optional<double> value;  // empty when undefined
  std::size_t n_examples = 0;
  std::vector<std::string> degenerate_flags;
  std::optional<F1Result> counts;
};

struct MetricsReport {
  std::vector<MetricEntry> entries;

  const MetricEntry* find(const std::string& task, const std::string& metric) const;

  /// JSON array of {split, task, metric, value, n_examples, degenerate_flags}
  /// objects; micro-F1 entries also carry tp/fp/fn and the threshold.
  nlohmann::json to_json() const;

  /// Plain-text table, values as percentages to 2 decimals. JSON keeps full
  /// precision.
  std::string to_table() const;
};

}  // namespace fimfuse::metrics
