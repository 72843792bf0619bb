#include "fimfuse/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fimfuse/backprop.hpp"
#include "fimfuse/errors.hpp"
#include "fimfuse/fusion.hpp"
#include "parallel.hpp"

namespace fimfuse::interpret {

template <class Real>
GradientMatrix gradient_matrix(const ModelParams<Real>& params, std::uint32_t model_crc) {
  const auto& cfg = params.config();
  if (cfg.fusion_mode != FusionMode::Cross)
    throw ModeError("gradient matrix needs a cross-fusion model, got " +
                    std::string(to_string(cfg.fusion_mode)));
  const Eigen::Index n = cfg.n;
  fusion::ClassifierCache<Real> cache;
  const auto out = fusion::classifier_forward(
      fusion::FusedInput<Real>::materialized(Vec<Real>::Zero(n * n)), params, fusion::RunOptions{},
      &cache);

  std::vector<Vec<Real>> dlogits;
  for (const auto& head : out.heads) dlogits.push_back(Vec<Real>::Zero(head.logits.size()));
  dlogits.front() = out.heads.front().probs;
  dlogits.front()(0) -= Real(1);  // target: non-hateful

  const auto d_in = train::classifier_backward<Real>(cache, dlogits, params, nullptr);
  GradientMatrix g;
  g.model_crc = model_crc;
  g.values = Eigen::Map<const RowMatrix<Real>>(d_in.dense.data(), n, n).template cast<double>();
  return g;
}

std::size_t BinaryMatrix::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t TriggerVector::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

std::size_t band_size(double pct, std::size_t count) {
  // Nearest rank; the small slack absorbs products such as 0.2 * 100 that
  // land a hair above an integer.
  const double raw = pct * static_cast<double>(count) / 100.0;
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

}  // namespace

BinaryMatrix binarize_signed_percentile(const RowMatrix<double>& values, double lower_pct,
                                        double upper_pct) {
  if (!(lower_pct >= 0.0 && lower_pct < upper_pct && upper_pct <= 100.0))
    throw ConfigError("percentile bounds must satisfy 0 <= lower < upper <= 100");
  BinaryMatrix out;
  out.rows = static_cast<int>(values.rows());
  out.cols = static_cast<int>(values.cols());
  const auto count = static_cast<std::size_t>(values.size());
  out.bits.assign(count, 0);
  if (count == 0) return out;
  if (!values.allFinite()) throw ConfigError("cannot binarize a matrix with non-finite entries");

  std::vector<double> sorted(values.data(), values.data() + count);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    out.degenerate = true;
    return out;
  }
  const std::size_t low = std::min(band_size(lower_pct, count), count);
  const std::size_t high = std::min(band_size(100.0 - upper_pct, count), count);
  const double low_cut = low > 0 ? sorted[low - 1] : -std::numeric_limits<double>::infinity();
  const double high_cut = high > 0 ? sorted[count - high] : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    const double v = values.data()[i];
    out.bits[i] = ((low > 0 && v <= low_cut) || (high > 0 && v >= high_cut)) ? 1 : 0;
  }
  return out;
}

template <class Real>
TriggerVector trigger_vector(const embedstore::EmbeddingRecord& record,
                             const ModelParams<Real>& params, const BinaryMatrix& gradient_bits,
                             double lower_pct, double upper_pct) {
  const auto& cfg = params.config();
  if (cfg.fusion_mode != FusionMode::Cross)
    throw ModeError("trigger vectors need a cross-fusion model");
  if (record.label != 1)
    throw ConfigError("trigger vectors are defined for hateful records; '" + record.id + "' is not");
  if (gradient_bits.rows != cfg.n || gradient_bits.cols != cfg.n)
    throw DimensionError("binarized gradient matrix is " + std::to_string(gradient_bits.rows) +
                         "x" + std::to_string(gradient_bits.cols) + ", model has n=" +
                         std::to_string(cfg.n));
  if (static_cast<int>(record.image_vec.size()) != cfg.d_img ||
      static_cast<int>(record.text_vec.size()) != cfg.d_txt)
    throw DimensionError("record '" + record.id + "' dims do not match the model");

  const fusion::RunOptions eval;
  const auto& layout = params.layout();
  const auto p_img = fusion::project<Real>(fusion::to_vec<Real>(record.image_vec), layout.img_proj, params, eval);
  const auto p_txt = fusion::project<Real>(fusion::to_vec<Real>(record.text_vec), layout.txt_proj, params, eval);
  const RowMatrix<double> fim = fusion::fuse_cross<Real>(p_img, p_txt).template cast<double>();
  const auto fim_bits = binarize_signed_percentile(fim, lower_pct, upper_pct);

  TriggerVector t;
  t.id = record.id;
  t.bits.resize(fim_bits.bits.size());
  for (std::size_t i = 0; i < t.bits.size(); ++i) t.bits[i] = fim_bits.bits[i] & gradient_bits.bits[i];
  return t;
}

nlohmann::json ClusterReport::to_json() const {
  auto list = nlohmann::json::array();
  for (const auto& c : clusters) {
    auto cells = nlohmann::json::array();
    for (const auto& cell : c.top_cells)
      cells.push_back({{"row", cell.row}, {"col", cell.col}, {"frequency", cell.frequency}});
    list.push_back({{"cluster_id", c.cluster_id},
                    {"size", c.member_ids.size()},
                    {"ambiguous", c.ambiguous},
                    {"member_ids", c.member_ids},
                    {"mean_popcount", c.mean_popcount},
                    {"top_cells", cells}});
  }
  return {{"k", k}, {"seed", seed}, {"model_crc", model_crc}, {"clusters", list}};
}

ClusterReport cluster_report(std::span<const int> assignments,
                             std::span<const TriggerVector> triggers, int n, int k,
                             std::uint64_t seed, std::uint32_t model_crc) {
  if (assignments.size() != triggers.size())
    throw DimensionError("cluster_report: one assignment per trigger vector expected");
  const auto cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  ClusterReport report;
  report.k = k;
  report.seed = seed;
  report.model_crc = model_crc;
  report.clusters.resize(static_cast<std::size_t>(k));
  std::vector<std::vector<std::size_t>> counts(static_cast<std::size_t>(k));
  std::vector<std::size_t> popcount_sum(static_cast<std::size_t>(k), 0);

  for (std::size_t i = 0; i < triggers.size(); ++i) {
    const int c = assignments[i];
    if (c < 0 || c >= k) throw DimensionError("cluster_report: assignment out of range");
    if (triggers[i].bits.size() != cells)
      throw DimensionError("cluster_report: trigger vector '" + triggers[i].id + "' has wrong length");
    auto& info = report.clusters[static_cast<std::size_t>(c)];
    info.member_ids.push_back(triggers[i].id);
    auto& cnt = counts[static_cast<std::size_t>(c)];
    if (cnt.empty()) cnt.assign(cells, 0);
    for (std::size_t b = 0; b < cells; ++b) cnt[b] += triggers[i].bits[b];
    popcount_sum[static_cast<std::size_t>(c)] += triggers[i].popcount();
  }

  for (int c = 0; c < k; ++c) {
    auto& info = report.clusters[static_cast<std::size_t>(c)];
    info.cluster_id = c;
    const auto size = info.member_ids.size();
    info.ambiguous = size < kMinUsefulCluster || size > kMaxUsefulCluster;
    if (size == 0) continue;
    info.mean_popcount = static_cast<double>(popcount_sum[static_cast<std::size_t>(c)]) / static_cast<double>(size);
    const auto& cnt = counts[static_cast<std::size_t>(c)];
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    const auto top = std::min(kTopCells, cells);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return cnt[a] != cnt[b] ? cnt[a] > cnt[b] : a < b;
                      });
    for (std::size_t r = 0; r < top && cnt[order[r]] > 0; ++r)
      info.top_cells.push_back({static_cast<int>(order[r] / static_cast<std::size_t>(n)),
                                static_cast<int>(order[r] % static_cast<std::size_t>(n)),
                                static_cast<double>(cnt[order[r]]) / static_cast<double>(size)});
  }
  return report;
}

template <class Real>
PipelineResult run_pipeline(const embedstore::Dataset& dataset, const ModelParams<Real>& params,
                            std::uint32_t model_crc, const PipelineOptions& options) {
  PipelineResult out;
  out.gradient = gradient_matrix(params, model_crc);
  out.gradient_bits =
      binarize_signed_percentile(out.gradient.values, kGradientLowerPct, kGradientUpperPct);

  std::vector<std::size_t> hateful;
  for (auto i : dataset.indices(options.split))
    if (dataset.records[i].label == 1) hateful.push_back(i);
  if (hateful.size() < static_cast<std::size_t>(std::max(options.k, 1)))
    throw ConfigError("only " + std::to_string(hateful.size()) + " hateful records in split '" +
                      std::string(embedstore::to_string(options.split)) + "', need at least k=" +
                      std::to_string(options.k));

  out.triggers.resize(hateful.size());
  detail::parallel_for(hateful.size(), options.threads, [&](std::size_t i) {
    out.triggers[i] = trigger_vector(dataset.records[hateful[i]], params, out.gradient_bits);
  });

  const auto n = params.config().n;
  const auto cells = static_cast<Eigen::Index>(n) * n;
  RowMatrix<double> points(static_cast<Eigen::Index>(out.triggers.size()), cells);
  for (std::size_t i = 0; i < out.triggers.size(); ++i)
    for (Eigen::Index b = 0; b < cells; ++b)
      points(static_cast<Eigen::Index>(i), b) = out.triggers[i].bits[static_cast<std::size_t>(b)];
  out.clustering = kmeans(points, options.k, options.seed, options.max_iter);
  out.report = cluster_report(out.clustering.assignments, out.triggers, n, options.k, options.seed,
                              model_crc);
  return out;
}

#define FIMFUSE_INSTANTIATE(Real)                                                               \
  template GradientMatrix gradient_matrix(const ModelParams<Real>&, std::uint32_t);             \
  template TriggerVector trigger_vector(const embedstore::EmbeddingRecord&,                     \
                                        const ModelParams<Real>&, const BinaryMatrix&, double,  \
                                        double);                                                \
  template PipelineResult run_pipeline(const embedstore::Dataset&, const ModelParams<Real>&,    \
                                       std::uint32_t, const PipelineOptions&);

FIMFUSE_INSTANTIATE(float)
FIMFUSE_INSTANTIATE(double)

}  // namespace fimfuse::interpret
