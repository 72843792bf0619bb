#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/model.hpp"
#include "fimfuse/optim.hpp"

namespace fimfuse::train {

enum class SelectMetric { DevAuroc, DevMicroF1 };

std::string_view to_string(SelectMetric metric);
SelectMetric select_metric_from_string(std::string_view s);

/// Defaults are the published hyperparameters (AdamW, lr 1e-4, decay 1e-4,
/// batch 64, 20 epochs, clip 0.1).
struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int max_epochs = 20;
  double grad_clip = 0.1;
  std::uint64_t seed = 0;
  SelectMetric select_metric = SelectMetric::DevAuroc;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamWConfig adamw() const { return {learning_rate, weight_decay, beta1, beta2, epsilon}; }
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
/// Strict: unknown keys are a ConfigError naming the key.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_metric = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_metric = 0.0;
  SelectMetric select_metric = SelectMetric::DevAuroc;

  /// Timing is excluded so two identical runs serialize identically.
  nlohmann::json to_json() const;
  /// Tab-separated epoch, train_loss, dev_metric (gnuplot friendly).
  std::string loss_curve_tsv() const;
};

struct FitOptions {
  /// Worker threads for per-record forward/backward. Results do not depend
  /// on this value.
  int threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <class Real>
struct FitResult {
  ModelParams<Real> best_params;
  TrainHistory history;
};

/// Records per reduction leaf. Batch gradients are summed leaf by leaf in
/// index order, which fixes the floating-point summation tree regardless of
/// thread count.
inline constexpr std::size_t kReductionChunk = 8;

/// Mean gradient over `batch` written to `grads`; returns the summed loss.
/// Train-mode dropout for the record at position k uses seed
/// derive_seed(dropout_seed, k).
template <class Real>
double batch_gradient(const embedstore::Dataset& dataset, std::span<const std::size_t> batch,
                      const ModelParams<Real>& params, ModelParams<Real>& grads,
                      std::uint64_t dropout_seed, int threads = 1);

/// Epoch loop with seeded shuffling, mean-gradient batches (last partial
/// batch kept), global-norm clipping and AdamW. The best epoch on the dev
/// selection metric wins; ties keep the earlier epoch.
template <class Real>
FitResult<Real> fit(const embedstore::Dataset& dataset, ModelParams<Real> initial,
                    const TrainConfig& config, const FitOptions& options = {});

/// Same, starting from init_params(model_config, seed-derived stream).
template <class Real>
FitResult<Real> fit(const embedstore::Dataset& dataset, const ModelConfig& model_config,
                    const TrainConfig& config, const FitOptions& options = {});

/// Seed for parameter initialization derived from the training seed.
std::uint64_t init_seed(std::uint64_t train_seed);

}  // namespace fimfuse::train
