#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/model.hpp"
#include "fimfuse/rng.hpp"

namespace fimfuse::testing {

inline ModelConfig small_config(FusionMode mode, int n, int m, int d_img, int d_txt,
                                TaskSchema tasks = primary_only_schema()) {
  ModelConfig c;
  c.d_img = d_img;
  c.d_txt = d_txt;
  c.n = n;
  c.m = m;
  c.fusion_mode = mode;
  c.dropout_rate = 0.0;
  c.tasks = std::move(tasks);
  return c;
}

inline TaskSchema schema_with_aux(int classes) {
  auto s = primary_only_schema();
  s.push_back({"aux", classes, TaskKind::MultilabelSigmoid});
  return s;
}

inline embedstore::EmbeddingRecord random_record(Rng& rng, int d_img, int d_txt,
                                                 const TaskSchema& tasks, std::string id = "r") {
  embedstore::EmbeddingRecord r;
  r.id = std::move(id);
  for (int i = 0; i < d_img; ++i) r.image_vec.push_back(static_cast<float>(rng.normal()));
  for (int i = 0; i < d_txt; ++i) r.text_vec.push_back(static_cast<float>(rng.normal()));
  r.label = static_cast<std::uint8_t>(rng.below(2));
  for (int b = 0; b < aux_label_bytes(tasks); ++b)
    r.aux_labels.push_back(static_cast<std::uint8_t>(rng.below(2)));
  return r;
}

/// Parameters drawn uniformly in [-scale, scale].
inline ModelParams<double> random_params(const ModelConfig& config, std::uint64_t seed,
                                         double scale = 0.5) {
  ModelParams<double> p(config);
  Rng rng(seed);
  for (auto& v : p.values()) v = rng.uniform(-scale, scale);
  return p;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() /
            ("fimfuse-" + tag + "-" + std::to_string(rng.next_u64() % 1000000000ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fimfuse::testing
