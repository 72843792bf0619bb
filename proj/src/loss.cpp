#include "fimfuse/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fimfuse/errors.hpp"

namespace fimfuse::train {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softmax_cross_entropy(std::span<const double> logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
    throw DimensionError("softmax_cross_entropy: target out of range");
  if (logits.size() == 2) return softplus(logits[1 - target] - logits[target]);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return mx + std::log(sum) - logits[target];
}

double sigmoid_bce_mean(std::span<const double> logits, std::span<const std::uint8_t> targets) {
  if (logits.size() != targets.size() || logits.empty())
    throw DimensionError("sigmoid_bce_mean: logits and targets disagree");
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c)
    sum += softplus(logits[c]) - (targets[c] ? logits[c] : 0.0);
  return sum / static_cast<double>(logits.size());
}

std::vector<std::vector<std::uint8_t>> task_targets(const embedstore::EmbeddingRecord& record,
                                                    const TaskSchema& tasks) {
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(tasks.size());
  out.push_back({record.label});
  std::size_t off = 0;
  for (std::size_t t = 1; t < tasks.size(); ++t) {
    const auto width = static_cast<std::size_t>(tasks[t].label_bytes());
    if (off + width > record.aux_labels.size())
      throw DimensionError("record '" + record.id + "' has too few aux label bytes");
    out.emplace_back(record.aux_labels.begin() + off, record.aux_labels.begin() + off + width);
    off += width;
  }
  return out;
}

namespace {

template <class Real>
std::vector<double> widen(const Vec<Real>& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

template <class Real>
LossValue loss(const fusion::ModelOutput<Real>& output, const embedstore::EmbeddingRecord& record,
               const TaskSchema& tasks) {
  if (output.heads.size() != tasks.size())
    throw DimensionError("loss: output heads do not match task schema");
  const auto targets = task_targets(record, tasks);
  LossValue value;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto logits = widen(output.heads[t].logits);
    const double l = tasks[t].kind == TaskKind::BinarySoftmax
                         ? softmax_cross_entropy(logits, targets[t][0])
                         : sigmoid_bce_mean(logits, targets[t]);
    value.per_task.push_back(l);
    value.total += l;
  }
  return value;
}

template <class Real>
std::vector<Vec<Real>> loss_logit_gradients(const fusion::ModelOutput<Real>& output,
                                            const embedstore::EmbeddingRecord& record,
                                            const TaskSchema& tasks) {
  if (output.heads.size() != tasks.size())
    throw DimensionError("loss: output heads do not match task schema");
  const auto targets = task_targets(record, tasks);
  std::vector<Vec<Real>> grads;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    Vec<Real> g = output.heads[t].probs;
    if (tasks[t].kind == TaskKind::BinarySoftmax) {
      g(targets[t][0]) -= Real(1);
    } else {
      for (Eigen::Index c = 0; c < g.size(); ++c) g(c) -= static_cast<Real>(targets[t][c]);
      g /= static_cast<Real>(g.size());
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

template LossValue loss(const fusion::ModelOutput<float>&, const embedstore::EmbeddingRecord&, const TaskSchema&);
template LossValue loss(const fusion::ModelOutput<double>&, const embedstore::EmbeddingRecord&, const TaskSchema&);
template std::vector<Vec<float>> loss_logit_gradients(const fusion::ModelOutput<float>&,
                                                      const embedstore::EmbeddingRecord&, const TaskSchema&);
template std::vector<Vec<double>> loss_logit_gradients(const fusion::ModelOutput<double>&,
                                                       const embedstore::EmbeddingRecord&, const TaskSchema&);

}  // namespace fimfuse::train
