#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fimfuse/schema.hpp"

namespace fimfuse::embedstore {

inline constexpr std::array<char, 4> kMagic = {'F', 'I', 'M', 'F'};
inline constexpr std::uint32_t kFormatVersion = 1;

enum class Split : std::uint8_t { Train = 0, Dev = 1, Test = 2 };

std::string_view to_string(Split split);
Split split_from_string(std::string_view s);

/// One meme: precomputed image/text embeddings plus labels.
struct EmbeddingRecord {
  std::string id;
  std::vector<float> image_vec;
  std::vector<float> text_vec;
  std::uint8_t label = 0;
  /// Label bytes of every task after the primary one, concatenated in
  /// schema order.
  std::vector<std::uint8_t> aux_labels;
  Split split = Split::Train;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct DatasetManifest {
  std::uint32_t format_version = kFormatVersion;
  int d_img = 0;
  int d_txt = 0;
  TaskSchema tasks = primary_only_schema();
  std::array<std::uint64_t, 3> record_counts{};  // indexed by Split
  /// Free-form provenance (generator parameters, extractor settings).
  nlohmann::json metadata = nlohmann::json::object();

  std::uint64_t count(Split s) const { return record_counts[static_cast<int>(s)]; }
  std::uint64_t total() const { return record_counts[0] + record_counts[1] + record_counts[2]; }

  bool operator==(const DatasetManifest&) const = default;
};

/// Immutable after load; safe to share across threads.
struct Dataset {
  DatasetManifest manifest;
  std::vector<EmbeddingRecord> records;

  std::vector<std::size_t> indices(Split split) const;
};

/// Manifest with counts filled in from `records`.
DatasetManifest make_manifest(int d_img, int d_txt, TaskSchema tasks,
                              std::span<const EmbeddingRecord> records);

/// Checks every record against the manifest. Throws ValidationError naming the
/// first offending record.
void validate(std::span<const EmbeddingRecord> records, const DatasetManifest& manifest);

/// Exact byte size of one encoded record.
std::size_t record_size(const DatasetManifest& manifest, std::size_t id_bytes);

std::vector<std::uint8_t> encode(std::span<const EmbeddingRecord> records,
                                 const DatasetManifest& manifest);
Dataset decode(std::span<const std::uint8_t> bytes);

void write_dataset(std::span<const EmbeddingRecord> records, const DatasetManifest& manifest,
                   const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// Synthetic bilinear-label data. Labels depend only on the interaction of the
// two latent codes, so neither modality alone carries signal.
struct SyntheticSpec {
  int latent_dim = 8;
  int d_img = 32;
  int d_txt = 32;
  std::size_t num_train = 2000;
  std::size_t num_dev = 500;
  std::size_t num_test = 500;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Optional multilabel task "latent_sign" with this many classes; class c
  /// is on iff z_img[c] * z_txt[c] > 0. Zero disables it.
  int aux_classes = 0;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace fimfuse::embedstore
