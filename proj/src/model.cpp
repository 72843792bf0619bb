#include "fimfuse/model.hpp"

#include <atomic>
#include <cmath>

#include "fimfuse/errors.hpp"
#include "fimfuse/rng.hpp"

namespace fimfuse {

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Concat: return "concat";
    case FusionMode::Align: return "align";
    case FusionMode::Cross: return "cross";
  }
  return "?";
}

FusionMode fusion_mode_from_string(std::string_view s) {
  if (s == "concat") return FusionMode::Concat;
  if (s == "align") return FusionMode::Align;
  if (s == "cross") return FusionMode::Cross;
  throw ConfigError("unknown fusion_mode '" + std::string(s) + "' (expected concat, align or cross)");
}

std::size_t ModelConfig::fused_dim() const {
  const auto width = static_cast<std::size_t>(n);
  switch (fusion_mode) {
    case FusionMode::Concat: return 2 * width;
    case FusionMode::Align: return width;
    case FusionMode::Cross: return width * width;
  }
  return 0;
}

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
  };
  positive(d_img, "d_img");
  positive(d_txt, "d_txt");
  positive(n, "n");
  positive(m, "m");
  positive(num_proj_layers, "num_proj_layers");
  positive(num_preoutput_layers, "num_preoutput_layers");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout_rate must lie in [0, 1)");
  validate_schema(tasks);
}

std::uint64_t parameter_count(const ModelConfig& c) {
  const auto affine = [](std::uint64_t in, std::uint64_t out) { return in * out + out; };
  const std::uint64_t n = c.n;
  const std::uint64_t m = c.m;
  const std::uint64_t extra_proj = static_cast<std::uint64_t>(c.num_proj_layers - 1);
  const std::uint64_t extra_pre = static_cast<std::uint64_t>(c.num_preoutput_layers - 1);
  std::uint64_t total = affine(c.d_img, n) + affine(c.d_txt, n) + 2 * extra_proj * affine(n, n);
  total += affine(c.fused_dim(), m) + extra_pre * affine(m, m);
  for (const auto& t : c.tasks) total += affine(m, static_cast<std::uint64_t>(t.num_classes));
  return total;
}

ParamLayout ParamLayout::for_config(const ModelConfig& c) {
  c.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  const auto add = [&](std::vector<DenseSlot>& group, std::size_t in, std::size_t out) {
    DenseSlot s;
    s.rows = static_cast<int>(out);
    s.cols = static_cast<int>(in);
    s.weight_offset = offset;
    offset += in * out;
    s.bias_offset = offset;
    offset += out;
    group.push_back(s);
  };
  const auto n = static_cast<std::size_t>(c.n);
  const auto m = static_cast<std::size_t>(c.m);
  for (int l = 0; l < c.num_proj_layers; ++l)
    add(layout.img_proj, l == 0 ? static_cast<std::size_t>(c.d_img) : n, n);
  for (int l = 0; l < c.num_proj_layers; ++l)
    add(layout.txt_proj, l == 0 ? static_cast<std::size_t>(c.d_txt) : n, n);
  for (int l = 0; l < c.num_preoutput_layers; ++l)
    add(layout.preoutput, l == 0 ? c.fused_dim() : m, m);
  for (const auto& t : c.tasks) add(layout.heads, m, static_cast<std::size_t>(t.num_classes));
  layout.total = offset;
  return layout;
}

std::vector<DenseSlot> ParamLayout::all() const {
  std::vector<DenseSlot> out;
  for (const auto* group : {&img_proj, &txt_proj, &preoutput, &heads})
    out.insert(out.end(), group->begin(), group->end());
  return out;
}

namespace {
std::atomic<std::uint64_t> g_version_counter{1};
}

template <class Real>
ModelParams<Real>::ModelParams(ModelConfig config)
    : config_(std::move(config)),
      layout_(ParamLayout::for_config(config_)),
      data_(layout_.total, Real(0)) {
  touch();
}

template <class Real>
void ModelParams<Real>::touch() {
  version_ = g_version_counter.fetch_add(1, std::memory_order_relaxed);
}

template <class Real>
void ModelParams<Real>::set_zero() {
  std::fill(data_.begin(), data_.end(), Real(0));
  touch();
}

template class ModelParams<float>;
template class ModelParams<double>;

template <class Real>
ModelParams<Real> init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<Real> params(config);
  Rng rng(seed);
  for (const auto& slot : params.layout().all()) {
    const double fan_in = slot.cols;
    const double bound = 1.0 / std::sqrt(fan_in);
    auto w = params.weight(slot);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = static_cast<Real>(rng.uniform(-bound, bound));
    auto b = params.bias(slot);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = static_cast<Real>(rng.uniform(-bound, bound));
  }
  return params;
}

template ModelParams<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_params<double>(const ModelConfig&, std::uint64_t);

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"d_img", c.d_img},
          {"d_txt", c.d_txt},
          {"n", c.n},
          {"m", c.m},
          {"num_proj_layers", c.num_proj_layers},
          {"num_preoutput_layers", c.num_preoutput_layers},
          {"fusion_mode", to_string(c.fusion_mode)},
          {"dropout_rate", c.dropout_rate},
          {"task_schema", schema_to_json(c.tasks)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "d_img") c.d_img = value.get<int>();
      else if (key == "d_txt") c.d_txt = value.get<int>();
      else if (key == "n") c.n = value.get<int>();
      else if (key == "m") c.m = value.get<int>();
      else if (key == "num_proj_layers") c.num_proj_layers = value.get<int>();
      else if (key == "num_preoutput_layers") c.num_preoutput_layers = value.get<int>();
      else if (key == "fusion_mode") c.fusion_mode = fusion_mode_from_string(value.get<std::string>());
      else if (key == "dropout_rate") c.dropout_rate = value.get<double>();
      else if (key == "task_schema") c.tasks = schema_from_json(value);
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config key '" + key + "': " + e.what());
    }
  }
  return c;
}

}  // namespace fimfuse
