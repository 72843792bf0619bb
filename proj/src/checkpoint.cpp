#include "fimfuse/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>

#include "binary_io.hpp"
#include "fimfuse/errors.hpp"

namespace fimfuse {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto len = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

template <class Real>
std::vector<std::uint8_t> encode_checkpoint(const ModelParams<Real>& params,
                                            const nlohmann::json& metadata) {
  detail::ByteWriter w;
  w.put_chars(std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()));
  w.put_u32(kCheckpointVersion);
  const nlohmann::json header = {{"model", model_config_to_json(params.config())},
                                 {"parameter_count", params.size()},
                                 {"metadata", metadata}};
  const std::string json = header.dump();
  w.put_u32(static_cast<std::uint32_t>(json.size()));
  w.put_chars(json);
  w.bytes().reserve(w.bytes().size() + 4 * params.size() + 4);
  for (Real v : params.values()) w.put_f32(static_cast<float>(v));
  w.put_u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  auto magic = in.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin()))
    throw FormatError("not a checkpoint file (bad magic)");
  const auto version = in.u32("checkpoint version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() < 16) throw CorruptionError("checkpoint too short", bytes.size());

  const std::size_t crc_offset = bytes.size() - 4;
  detail::ByteReader trailer(bytes.subspan(crc_offset));
  const std::uint32_t stored = trailer.u32("crc");
  const std::uint32_t actual = crc32_of(bytes.first(crc_offset));
  if (stored != actual)
    throw CorruptionError("checkpoint CRC mismatch (stored " + std::to_string(stored) +
                              ", computed " + std::to_string(actual) + ")",
                          crc_offset);

  const auto json_len = in.u32("config length");
  const auto json_offset = in.offset();
  if (json_len > crc_offset - json_offset)
    throw CorruptionError("config length overruns file", json_offset);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.string(json_len, "config"));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptionError(std::string("checkpoint config is not valid JSON: ") + e.what(),
                          json_offset);
  }

  Checkpoint ckpt;
  ckpt.crc = stored;
  try {
    ckpt.config = model_config_from_json(header.at("model"));
    if (header.contains("metadata")) ckpt.metadata = header.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what());
  }
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what());
  }

  const auto expected = parameter_count(ckpt.config);
  const std::size_t payload = crc_offset - in.offset();
  if (payload != 4 * expected)
    throw CorruptionError("parameter payload holds " + std::to_string(payload / 4) +
                              " floats, config implies " + std::to_string(expected),
                          in.offset());
  ckpt.values.resize(expected);
  for (auto& v : ckpt.values) v = in.f32("parameters");
  return ckpt;
}

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<Real>& params,
                     const nlohmann::json& metadata) {
  const auto bytes = encode_checkpoint(params, metadata);
  detail::write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

template std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>&, const nlohmann::json&);
template std::vector<std::uint8_t> encode_checkpoint(const ModelParams<double>&, const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const ModelParams<float>&, const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const ModelParams<double>&, const nlohmann::json&);

}  // namespace fimfuse
