#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "fimfuse/model.hpp"

namespace fimfuse {

inline constexpr std::array<char, 4> kCheckpointMagic = {'F', 'I', 'M', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Decoded checkpoint. Parameters are kept as the stored float32 values and
/// widened on demand.
struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<float> values;
  /// CRC32 trailer; identifies the checkpoint in interpretability reports.
  std::uint32_t crc = 0;

  template <class Real>
  ModelParams<Real> params() const {
    ModelParams<Real> out(config);
    auto dst = out.values();
    for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<Real>(values[i]);
    return out;
  }
};

template <class Real>
std::vector<std::uint8_t> encode_checkpoint(const ModelParams<Real>& params,
                                            const nlohmann::json& metadata);

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<Real>& params,
                     const nlohmann::json& metadata = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace fimfuse
