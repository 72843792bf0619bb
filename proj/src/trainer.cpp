#include "fimfuse/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <utility>

#include "fimfuse/backprop.hpp"
#include "fimfuse/errors.hpp"
#include "fimfuse/evaluate.hpp"
#include "fimfuse/fusion.hpp"
#include "fimfuse/loss.hpp"
#include "fimfuse/rng.hpp"
#include "parallel.hpp"

namespace fimfuse::train {

namespace {
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
}  // namespace

std::uint64_t init_seed(std::uint64_t train_seed) { return derive_seed(train_seed, kInitStream); }

std::string_view to_string(SelectMetric metric) {
  return metric == SelectMetric::DevAuroc ? "dev_auroc" : "dev_micro_f1";
}

SelectMetric select_metric_from_string(std::string_view s) {
  if (s == "dev_auroc") return SelectMetric::DevAuroc;
  if (s == "dev_micro_f1") return SelectMetric::DevMicroF1;
  throw ConfigError("unknown select_metric '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  const auto finite_nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError(std::string(name) + " must be finite and non-negative");
  };
  finite_nonneg(learning_rate, "learning_rate");
  finite_nonneg(weight_decay, "weight_decay");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("AdamW betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
          {"grad_clip", c.grad_clip},         {"seed", c.seed},
          {"select_metric", to_string(c.select_metric)},
          {"beta1", c.beta1},                 {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "grad_clip") c.grad_clip = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "select_metric") c.select_metric = select_metric_from_string(value.get<std::string>());
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else throw ConfigError("unknown train config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
  return c;
}

nlohmann::json TrainHistory::to_json() const {
  auto epochs_json = nlohmann::json::array();
  for (const auto& e : epochs)
    epochs_json.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_metric", e.dev_metric}});
  return {{"select_metric", to_string(select_metric)},
          {"best_epoch", best_epoch},
          {"best_metric", best_metric},
          {"epochs", epochs_json}};
}

std::string TrainHistory::loss_curve_tsv() const {
  std::ostringstream os;
  os << "# epoch\ttrain_loss\t" << to_string(select_metric) << "\n";
  char line[128];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%d\t%.17g\t%.17g\n", e.epoch, e.train_loss, e.dev_metric);
    os << line;
  }
  return os.str();
}

template <class Real>
double batch_gradient(const embedstore::Dataset& dataset, std::span<const std::size_t> batch,
                      const ModelParams<Real>& params, ModelParams<Real>& grads,
                      std::uint64_t dropout_seed, int threads) {
  if (batch.empty()) throw ConfigError("batch_gradient: empty batch");
  grads.set_zero();
  const std::size_t chunks = (batch.size() + kReductionChunk - 1) / kReductionChunk;
  const std::size_t wave = std::min<std::size_t>(chunks, static_cast<std::size_t>(std::max(threads, 1)));
  std::vector<ModelParams<Real>> leaves(wave, ModelParams<Real>(params.config()));
  std::vector<double> chunk_loss(chunks, 0.0);
  const auto& tasks = params.config().tasks;

  for (std::size_t first = 0; first < chunks; first += wave) {
    const std::size_t in_wave = std::min(wave, chunks - first);
    detail::parallel_for(in_wave, threads, [&](std::size_t w) {
      const std::size_t c = first + w;
      auto& leaf = leaves[w];
      leaf.set_zero();
      double sum = 0.0;
      const std::size_t end = std::min(batch.size(), (c + 1) * kReductionChunk);
      for (std::size_t k = c * kReductionChunk; k < end; ++k) {
        const auto& rec = dataset.records[batch[k]];
        Rng rng(derive_seed(dropout_seed, k));
        fusion::RunOptions opts{fusion::Mode::Train, &rng, false};
        fusion::ForwardCache<Real> cache;
        fusion::model_forward(rec, params, opts, &cache);
        sum += loss(cache.output, rec, tasks).total;
        backward(cache, rec, params, leaf);
      }
      chunk_loss[c] = sum;
    });
    auto dst = grads.values();
    for (std::size_t w = 0; w < in_wave; ++w) {
      const auto src = std::as_const(leaves[w]).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  const Real inv = Real(1) / static_cast<Real>(batch.size());
  for (auto& g : grads.values()) g *= inv;
  return std::accumulate(chunk_loss.begin(), chunk_loss.end(), 0.0);
}

namespace {

template <class Real>
double dev_metric(const embedstore::Dataset& dataset, std::span<const std::size_t> dev,
                  const ModelParams<Real>& params, SelectMetric metric, int threads) {
  const auto preds = predict(dataset, dev, params, threads);
  const auto report = evaluate_predictions(dataset, preds, "dev");
  const auto& tasks = dataset.manifest.tasks;
  const metrics::MetricEntry* entry =
      metric == SelectMetric::DevAuroc
          ? report.find(tasks.front().name, "auroc")
          : report.find(tasks.size() > 1 ? "all" : tasks.front().name, "micro_f1");
  if (entry == nullptr || !entry->value)
    throw ConfigError(std::string("selection metric ") + std::string(to_string(metric)) +
                      " is undefined on the dev split");
  return *entry->value;
}

void check_compatible(const embedstore::Dataset& dataset, const ModelConfig& cfg) {
  const auto& m = dataset.manifest;
  if (cfg.d_img != m.d_img || cfg.d_txt != m.d_txt)
    throw DimensionError("model expects (d_img, d_txt) = (" + std::to_string(cfg.d_img) + ", " +
                         std::to_string(cfg.d_txt) + ") but dataset has (" +
                         std::to_string(m.d_img) + ", " + std::to_string(m.d_txt) + ")");
  if (cfg.tasks != m.tasks) throw ConfigError("model task schema differs from the dataset's");
}

}  // namespace

template <class Real>
FitResult<Real> fit(const embedstore::Dataset& dataset, ModelParams<Real> initial,
                    const TrainConfig& config, const FitOptions& options) {
  config.validate();
  check_compatible(dataset, initial.config());
  std::vector<std::size_t> train_idx = dataset.indices(embedstore::Split::Train);
  const std::vector<std::size_t> dev_idx = dataset.indices(embedstore::Split::Dev);
  if (train_idx.empty()) throw ConfigError("dataset has no train records");
  if (dev_idx.empty()) throw ConfigError("dataset has no dev records for model selection");
  if (config.select_metric == SelectMetric::DevAuroc) {
    std::size_t positives = 0;
    for (auto i : dev_idx) positives += dataset.records[i].label;
    if (positives == 0 || positives == dev_idx.size())
      throw ConfigError("dev_auroc selection needs both classes in the dev split");
  }

  ModelParams<Real> params = std::move(initial);
  ModelParams<Real> grads(params.config());
  AdamW<Real> optimizer(params.size(), config.adamw());

  FitResult<Real> result{params, {}};
  result.history.select_metric = config.select_metric;
  const std::uint64_t shuffle_seed = derive_seed(config.seed, kShuffleStream);
  const std::uint64_t dropout_seed = derive_seed(config.seed, kDropoutStream);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffler(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[shuffler.below(i)]);

    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t first = 0; first < train_idx.size(); first += batch, ++batch_no) {
      const std::span<const std::size_t> members(
          train_idx.data() + first, std::min(batch, train_idx.size() - first));
      const auto context = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no);
      const double batch_loss = batch_gradient(
          dataset, members, params, grads,
          derive_seed(dropout_seed, static_cast<std::uint64_t>(epoch), batch_no, 0), options.threads);
      if (!std::isfinite(batch_loss)) throw NumericError("non-finite loss at " + context);
      try {
        clip_gradients<Real>(grads.values(), config.grad_clip);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + context);
      }
      optimizer.step(params, grads);
      loss_sum += batch_loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
    rec.dev_metric = dev_metric(dataset, dev_idx, params, config.select_metric, options.threads);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.history.best_epoch == 0 || rec.dev_metric > result.history.best_metric) {
      result.history.best_epoch = epoch;
      result.history.best_metric = rec.dev_metric;
      result.best_params = params;
    }
    result.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  return result;
}

template <class Real>
FitResult<Real> fit(const embedstore::Dataset& dataset, const ModelConfig& model_config,
                    const TrainConfig& config, const FitOptions& options) {
  model_config.validate();
  return fit(dataset, init_params<Real>(model_config, init_seed(config.seed)), config, options);
}

#define FIMFUSE_INSTANTIATE(Real)                                                                 \
  template double batch_gradient(const embedstore::Dataset&, std::span<const std::size_t>,        \
                                 const ModelParams<Real>&, ModelParams<Real>&, std::uint64_t, int); \
  template FitResult<Real> fit(const embedstore::Dataset&, ModelParams<Real>, const TrainConfig&, \
                               const FitOptions&);                                                \
  template FitResult<Real> fit(const embedstore::Dataset&, const ModelConfig&, const TrainConfig&, \
                               const FitOptions&);

FIMFUSE_INSTANTIATE(float)
FIMFUSE_INSTANTIATE(double)

}  // namespace fimfuse::train
