#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fimfuse/schema.hpp"

namespace fimfuse {

enum class FusionMode { Concat, Align, Cross };

std::string_view to_string(FusionMode mode);
FusionMode fusion_mode_from_string(std::string_view s);

struct ModelConfig {
  int d_img = 0;
  int d_txt = 0;
  int n = 1024;  // projection width
  int m = 1024;  // pre-output width
  int num_proj_layers = 1;
  int num_preoutput_layers = 1;
  FusionMode fusion_mode = FusionMode::Align;
  double dropout_rate = 0.1;
  TaskSchema tasks = primary_only_schema();

  /// Width of the fused representation: 2n, n or n*n.
  std::size_t fused_dim() const;

  /// Throws ConfigError when any invariant fails.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Exact number of trainable scalars, computed in closed form.
std::uint64_t parameter_count(const ModelConfig& config);

/// Location of one affine layer inside the flat parameter buffer. The weight
/// is stored row-major as rows (outputs) x cols (inputs), followed by the bias.
struct DenseSlot {
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  int rows = 0;
  int cols = 0;
};

/// Declaration order: image projections, text projections, pre-output
/// layers, then one head per task. Checkpoints serialize in this order.
struct ParamLayout {
  std::vector<DenseSlot> img_proj;
  std::vector<DenseSlot> txt_proj;
  std::vector<DenseSlot> preoutput;
  std::vector<DenseSlot> heads;
  std::size_t total = 0;

  static ParamLayout for_config(const ModelConfig& config);

  /// All slots in declaration order.
  std::vector<DenseSlot> all() const;
};

template <class Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <class Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Every trainable weight of the model in one contiguous buffer, with typed
/// views per layer. The same type doubles as the gradient container.
///
/// Each mutable access stamps the object with a fresh version so forward
/// caches can detect that parameters changed underneath them.
template <class Real>
class ModelParams {
 public:
  using WeightMap = Eigen::Map<RowMatrix<Real>>;
  using ConstWeightMap = Eigen::Map<const RowMatrix<Real>>;
  using BiasMap = Eigen::Map<Vec<Real>>;
  using ConstBiasMap = Eigen::Map<const Vec<Real>>;

  /// Zero-initialized parameters for `config`.
  explicit ModelParams(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return data_.size(); }

  std::span<const Real> values() const { return data_; }
  std::span<Real> values() {
    touch();
    return data_;
  }

  ConstWeightMap weight(const DenseSlot& s) const {
    return ConstWeightMap(data_.data() + s.weight_offset, s.rows, s.cols);
  }
  WeightMap weight(const DenseSlot& s) {
    touch();
    return WeightMap(data_.data() + s.weight_offset, s.rows, s.cols);
  }
  ConstBiasMap bias(const DenseSlot& s) const {
    return ConstBiasMap(data_.data() + s.bias_offset, s.rows);
  }
  BiasMap bias(const DenseSlot& s) {
    touch();
    return BiasMap(data_.data() + s.bias_offset, s.rows);
  }

  void set_zero();

  std::uint64_t version() const { return version_; }
  void touch();

  template <class Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out(config_);
    auto dst = out.values();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<Other>(data_[i]);
    return out;
  }

 private:
  ModelConfig config_;
  ParamLayout layout_;
  std::vector<Real> data_;
  std::uint64_t version_ = 0;
};

extern template class ModelParams<float>;
extern template class ModelParams<double>;

/// Weights and biases uniform in +-1 / sqrt(fan_in), drawn in declaration
/// order from `seed`.
template <class Real>
ModelParams<Real> init_params(const ModelConfig& config, std::uint64_t seed);

nlohmann::json model_config_to_json(const ModelConfig& config);

/// Strict: unknown keys are a ConfigError naming the key. Missing keys keep
/// their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace fimfuse
