#include "fimfuse/embedstore.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "binary_io.hpp"
#include "fimfuse/errors.hpp"
#include "fimfuse/rng.hpp"

namespace fimfuse::embedstore {

using detail::ByteReader;
using detail::ByteWriter;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train, dev or test)");
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

DatasetManifest make_manifest(int d_img, int d_txt, TaskSchema tasks,
                              std::span<const EmbeddingRecord> records) {
  DatasetManifest m;
  m.d_img = d_img;
  m.d_txt = d_txt;
  m.tasks = std::move(tasks);
  for (const auto& r : records) {
    const auto s = static_cast<std::size_t>(r.split);
    if (s < 3) ++m.record_counts[s];
  }
  return m;
}

namespace {

void validate_manifest(const DatasetManifest& m) {
  if (m.d_img < 1 || m.d_txt < 1)
    throw ConfigError("manifest dimensions must be positive (d_img=" + std::to_string(m.d_img) +
                      ", d_txt=" + std::to_string(m.d_txt) + ")");
  validate_schema(m.tasks);
}

void validate_vector(const std::vector<float>& v, std::size_t expected, const std::string& id,
                     const char* which) {
  if (v.size() != expected)
    throw ValidationError("record '" + id + "': " + which + " has length " +
                              std::to_string(v.size()) + ", expected " + std::to_string(expected),
                          id);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw ValidationError("record '" + id + "': non-finite value in " + which + "[" +
                                std::to_string(i) + "]",
                            id);
}

}  // namespace

void validate(std::span<const EmbeddingRecord> records, const DatasetManifest& manifest) {
  validate_manifest(manifest);
  const auto aux_bytes = static_cast<std::size_t>(aux_label_bytes(manifest.tasks));
  std::array<std::uint64_t, 3> counts{};
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (r.id.size() > 0xFFFF)
      throw ValidationError("record id longer than 65535 bytes", r.id.substr(0, 64));
    if (!ids.insert(r.id).second) throw ValidationError("duplicate record id '" + r.id + "'", r.id);
    if (static_cast<unsigned>(r.split) > 2)
      throw ValidationError("record '" + r.id + "': invalid split", r.id);
    if (r.label > 1) throw ValidationError("record '" + r.id + "': label must be 0 or 1", r.id);
    if (r.aux_labels.size() != aux_bytes)
      throw ValidationError("record '" + r.id + "': " + std::to_string(r.aux_labels.size()) +
                                " aux label bytes, schema declares " + std::to_string(aux_bytes),
                            r.id);
    std::size_t off = 0;
    for (std::size_t t = 1; t < manifest.tasks.size(); ++t) {
      const auto& task = manifest.tasks[t];
      for (int c = 0; c < task.label_bytes(); ++c, ++off)
        if (r.aux_labels[off] > 1)
          throw ValidationError("record '" + r.id + "': task '" + task.name +
                                    "' label byte must be 0 or 1",
                                r.id);
    }
    validate_vector(r.image_vec, static_cast<std::size_t>(manifest.d_img), r.id, "image_vec");
    validate_vector(r.text_vec, static_cast<std::size_t>(manifest.d_txt), r.id, "text_vec");
    ++counts[static_cast<std::size_t>(r.split)];
  }
  if (counts != manifest.record_counts)
    throw ValidationError("split counts (" + std::to_string(counts[0]) + "/" +
                              std::to_string(counts[1]) + "/" + std::to_string(counts[2]) +
                              ") disagree with manifest (" +
                              std::to_string(manifest.record_counts[0]) + "/" +
                              std::to_string(manifest.record_counts[1]) + "/" +
                              std::to_string(manifest.record_counts[2]) + ")",
                          "");
}

std::size_t record_size(const DatasetManifest& manifest, std::size_t id_bytes) {
  return 2 + id_bytes + 1 + 1 + static_cast<std::size_t>(aux_label_bytes(manifest.tasks)) +
         4 * static_cast<std::size_t>(manifest.d_img + manifest.d_txt);
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  return {{"format_version", m.format_version},
          {"d_img", m.d_img},
          {"d_txt", m.d_txt},
          {"tasks", schema_to_json(m.tasks)},
          {"record_counts",
           {{"train", m.record_counts[0]}, {"dev", m.record_counts[1]}, {"test", m.record_counts[2]}}},
          {"metadata", m.metadata}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.d_img = j.at("d_img").get<int>();
    m.d_txt = j.at("d_txt").get<int>();
    m.tasks = schema_from_json(j.at("tasks"));
    const auto& rc = j.at("record_counts");
    m.record_counts = {rc.at("train").get<std::uint64_t>(), rc.at("dev").get<std::uint64_t>(),
                       rc.at("test").get<std::uint64_t>()};
    if (j.contains("metadata")) m.metadata = j.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid manifest: ") + e.what());
  }
  return m;
}

std::vector<std::uint8_t> encode(std::span<const EmbeddingRecord> records,
                                 const DatasetManifest& manifest) {
  validate(records, manifest);
  ByteWriter w;
  w.put_chars(std::string_view(kMagic.data(), kMagic.size()));
  w.put_u32(manifest.format_version);
  const std::string json = manifest_to_json(manifest).dump();
  w.put_u32(static_cast<std::uint32_t>(json.size()));
  w.put_chars(json);
  for (const auto& r : records) {
    w.put_u16(static_cast<std::uint16_t>(r.id.size()));
    w.put_chars(r.id);
    w.put_u8(static_cast<std::uint8_t>(r.split));
    w.put_u8(r.label);
    w.put_bytes(r.aux_labels);
    for (float v : r.image_vec) w.put_f32(v);
    for (float v : r.text_vec) w.put_f32(v);
  }
  return std::move(w.bytes());
}

Dataset decode(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  auto magic = in.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin()))
    throw FormatError("not an embedding file (bad magic)");
  const auto version = in.u32("format version");
  if (version != kFormatVersion)
    throw FormatError("unsupported embedding format version " + std::to_string(version));

  const auto json_len = in.u32("manifest length");
  const auto json_offset = in.offset();
  const std::string json_text = in.string(json_len, "manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptionError(std::string("manifest is not valid JSON: ") + e.what(), json_offset);
  }
  Dataset ds;
  ds.manifest = manifest_from_json(j);
  if (ds.manifest.format_version != version)
    throw FormatError("manifest format_version disagrees with header");
  validate_manifest(ds.manifest);

  const auto aux_bytes = static_cast<std::size_t>(aux_label_bytes(ds.manifest.tasks));
  const auto d_img = static_cast<std::size_t>(ds.manifest.d_img);
  const auto d_txt = static_cast<std::size_t>(ds.manifest.d_txt);
  const auto total = ds.manifest.total();
  // Each record needs at least its fixed part, which bounds the reservation.
  const std::size_t min_record = 4 + aux_bytes + 4 * (d_img + d_txt);
  ds.records.reserve(std::min<std::uint64_t>(total, in.remaining() / min_record + 1));
  for (std::uint64_t i = 0; i < total; ++i) {
    EmbeddingRecord r;
    const auto id_len = in.u16("record id length");
    r.id = in.string(id_len, "record id");
    const auto split = in.u8("split");
    if (split > 2)
      throw ValidationError("record '" + r.id + "': invalid split byte " + std::to_string(split),
                            r.id);
    r.split = static_cast<Split>(split);
    r.label = in.u8("label");
    auto aux = in.bytes(aux_bytes, "aux labels");
    r.aux_labels.assign(aux.begin(), aux.end());
    in.require(4 * (d_img + d_txt), "embedding vectors");
    r.image_vec.resize(d_img);
    for (auto& v : r.image_vec) v = in.f32("image_vec");
    r.text_vec.resize(d_txt);
    for (auto& v : r.text_vec) v = in.f32("text_vec");
    ds.records.push_back(std::move(r));
  }
  if (in.remaining() != 0)
    throw CorruptionError(std::to_string(in.remaining()) + " trailing bytes after last record",
                          in.offset());
  validate(ds.records, ds.manifest);
  return ds;
}

void write_dataset(std::span<const EmbeddingRecord> records, const DatasetManifest& manifest,
                   const std::filesystem::path& path) {
  const auto bytes = encode(records, manifest);
  detail::write_file(path, bytes);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode(bytes);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  const int k = spec.latent_dim;
  if (k < 1) throw ConfigError("latent_dim must be at least 1");
  if (spec.d_img < 1 || spec.d_txt < 1) throw ConfigError("d_img and d_txt must be positive");
  if (k > std::min(spec.d_img, spec.d_txt))
    throw ConfigError("latent_dim k=" + std::to_string(k) + " exceeds min(d_img, d_txt)=" +
                      std::to_string(std::min(spec.d_img, spec.d_txt)));
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma))
    throw ConfigError("noise_sigma must be finite and non-negative");
  if (spec.aux_classes < 0 || spec.aux_classes > k)
    throw ConfigError("aux_classes must lie in [0, latent_dim]");

  Rng rng(spec.seed);
  const auto draw = [&](std::size_t count) {
    std::vector<double> out(count);
    for (auto& v : out) v = rng.normal();
    return out;
  };
  const auto kk = static_cast<std::size_t>(k);
  const auto interaction = draw(kk * kk);
  const auto embed_img = draw(static_cast<std::size_t>(spec.d_img) * kk);
  const auto embed_txt = draw(static_cast<std::size_t>(spec.d_txt) * kk);

  const auto embed = [&](const std::vector<double>& map, const std::vector<double>& z, int rows) {
    std::vector<float> out(static_cast<std::size_t>(rows));
    for (std::size_t r = 0; r < out.size(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < kk; ++c) acc += map[r * kk + c] * z[c];
      out[r] = static_cast<float>(acc);
    }
    return out;
  };

  Dataset ds;
  ds.manifest.d_img = spec.d_img;
  ds.manifest.d_txt = spec.d_txt;
  if (spec.aux_classes > 0)
    ds.manifest.tasks.push_back({"latent_sign", spec.aux_classes, TaskKind::MultilabelSigmoid});
  ds.manifest.record_counts = {spec.num_train, spec.num_dev, spec.num_test};
  ds.manifest.metadata = {{"generator",
                           {{"name", "bilinear-synthetic"},
                            {"version", 1},
                            {"prng", Rng::kAlgorithm},
                            {"seed", spec.seed},
                            {"latent_dim", k},
                            {"noise_sigma", spec.noise_sigma},
                            {"aux_classes", spec.aux_classes}}}};

  const std::size_t total = spec.num_train + spec.num_dev + spec.num_test;
  ds.records.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto z_img = draw(kk);
    const auto z_txt = draw(kk);
    const double eps = rng.normal();
    double score = 0.0;
    for (std::size_t a = 0; a < kk; ++a)
      for (std::size_t b = 0; b < kk; ++b) score += z_img[a] * interaction[a * kk + b] * z_txt[b];
    score += spec.noise_sigma * eps;

    EmbeddingRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    r.id = id;
    r.split = i < spec.num_train                  ? Split::Train
              : i < spec.num_train + spec.num_dev ? Split::Dev
                                                  : Split::Test;
    r.label = score > 0.0 ? 1 : 0;
    for (int c = 0; c < spec.aux_classes; ++c)
      r.aux_labels.push_back(z_img[c] * z_txt[c] > 0.0 ? 1 : 0);
    r.image_vec = embed(embed_img, z_img, spec.d_img);
    r.text_vec = embed(embed_txt, z_txt, spec.d_txt);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace fimfuse::embedstore
