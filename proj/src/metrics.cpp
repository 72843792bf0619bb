#include "fimfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fimfuse/errors.hpp"

namespace fimfuse::metrics {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ConfigError("auroc: scores and labels have different lengths");
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ConfigError("auroc: non-finite score");
    if (labels[i] > 1) throw ConfigError("auroc: labels must be 0 or 1");
    positives += labels[i];
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0)
    throw UndefinedMetricError("auroc is undefined with a single class (" +
                               std::to_string(positives) + " positives, " +
                               std::to_string(negatives) + " negatives)");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based average ranks of the positives; doubled to stay integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) pos_in_group += labels[order[j++]];
    // Ranks i+1..j share the average (i + 1 + j) / 2.
    twice_rank_sum += pos_in_group * (i + 1 + j);
    i = j;
  }
  const double u = static_cast<double>(twice_rank_sum) / 2.0 -
                   static_cast<double>(positives) * static_cast<double>(positives + 1) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

F1Result micro_f1(std::span<const ScoredExample> examples, double threshold) {
  if (examples.empty()) throw UndefinedMetricError("micro_f1 of an empty example set");
  F1Result r;
  r.threshold = threshold;
  for (const auto& ex : examples) {
    if (ex.scores.size() != ex.labels.size())
      throw DimensionError("micro_f1: example '" + ex.id + "' has mismatched scores and labels");
    for (std::size_t c = 0; c < ex.scores.size(); ++c) {
      const bool pred = ex.scores[c] >= threshold;
      const bool truth = ex.labels[c] != 0;
      r.tp += pred && truth;
      r.fp += pred && !truth;
      r.fn += !pred && truth;
    }
  }
  const auto denom = 2 * r.tp + r.fp + r.fn;
  if (denom == 0) {
    r.degenerate = true;
    r.f1 = 0.0;
  } else {
    r.f1 = static_cast<double>(2 * r.tp) / static_cast<double>(denom);
  }
  return r;
}

ScoredExample binary_as_two_class(std::string id, double p, std::uint8_t label) {
  return ScoredExample{std::move(id), {1.0 - p, p},
                       {static_cast<std::uint8_t>(label ? 0 : 1), static_cast<std::uint8_t>(label ? 1 : 0)}};
}

const MetricEntry* MetricsReport::find(const std::string& task, const std::string& metric) const {
  for (const auto& e : entries)
    if (e.task == task && e.metric == metric) return &e;
  return nullptr;
}

nlohmann::json MetricsReport::to_json() const {
  auto out = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j = {{"split", e.split},
                        {"task", e.task},
                        {"metric", e.metric},
                        {"value", e.value ? nlohmann::json(*e.value) : nlohmann::json(nullptr)},
                        {"n_examples", e.n_examples},
                        {"degenerate_flags", e.degenerate_flags}};
    if (e.counts) {
      j["tp"] = e.counts->tp;
      j["fp"] = e.counts->fp;
      j["fn"] = e.counts->fn;
      j["threshold"] = e.counts->threshold;
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-20s %-10s %10s %8s  %s\n", "split", "task", "metric",
                "value(%)", "n", "flags");
  os << line;
  for (const auto& e : entries) {
    std::string flags;
    for (const auto& f : e.degenerate_flags) flags += (flags.empty() ? "" : ",") + f;
    char value[32];
    if (e.value)
      std::snprintf(value, sizeof value, "%.2f", 100.0 * *e.value);
    else
      std::snprintf(value, sizeof value, "undefined");
    std::snprintf(line, sizeof line, "%-8s %-20s %-10s %10s %8zu  %s\n", e.split.c_str(),
                  e.task.c_str(), e.metric.c_str(), value, e.n_examples, flags.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace fimfuse::metrics
