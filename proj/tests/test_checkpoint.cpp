#include <gtest/gtest.h>

#include "fimfuse/checkpoint.hpp"
#include "fimfuse/errors.hpp"
#include "support.hpp"

namespace fimfuse {
namespace {

TEST(Checkpoint, RoundTripKeepsFloat32Values) {
  auto c = testing::small_config(FusionMode::Cross, 3, 4, 5, 2, testing::schema_with_aux(2));
  c.dropout_rate = 0.2;
  const auto p = init_params<double>(c, 1);
  const nlohmann::json meta = {{"note", "x"}, {"best_epoch", 3}};
  const auto bytes = encode_checkpoint(p, meta);
  const auto ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.config, c);
  EXPECT_EQ(ck.metadata, meta);
  ASSERT_EQ(ck.values.size(), parameter_count(c));
  for (std::size_t i = 0; i < ck.values.size(); ++i)
    EXPECT_EQ(ck.values[i], static_cast<float>(p.values()[i]));
  EXPECT_EQ(ck.crc, crc32_of(std::span(bytes).first(bytes.size() - 4)));
  const auto back = ck.params<float>();
  EXPECT_EQ(encode_checkpoint(back, meta), bytes);
}

TEST(Checkpoint, SaveAndLoad) {
  auto c = testing::small_config(FusionMode::Align, 2, 2, 2, 2);
  const auto p = init_params<float>(c, 2);
  testing::TempDir dir("ckpt");
  save_checkpoint(dir / "m.fimm", p);
  const auto ck = load_checkpoint(dir / "m.fimm");
  EXPECT_EQ(ck.config, c);
  EXPECT_THROW(load_checkpoint(dir / "missing.fimm"), IoError);
}

TEST(Checkpoint, EveryFlippedByteIsDetected) {
  auto c = testing::small_config(FusionMode::Concat, 2, 3, 2, 2);
  const auto bytes = encode_checkpoint(init_params<double>(c, 3), {});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(bad), IoError) << "byte " << i;
    if (i >= 8) {
      EXPECT_THROW(decode_checkpoint(bad), CorruptionError) << "byte " << i;
    }
  }
}

TEST(Checkpoint, TruncationIsTypedError) {
  auto c = testing::small_config(FusionMode::Concat, 2, 3, 2, 2);
  const auto bytes = encode_checkpoint(init_params<double>(c, 4), {});
  for (std::size_t len = 0; len < bytes.size(); ++len)
    EXPECT_THROW(decode_checkpoint(std::span(bytes).first(len)), IoError) << len;
}

TEST(Checkpoint, InitIsSeededAndBounded) {
  auto c = testing::small_config(FusionMode::Cross, 4, 6, 9, 3);
  const auto a = init_params<double>(c, 5);
  const auto b = init_params<double>(c, 5);
  const auto d = init_params<double>(c, 6);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), d.values().begin()));
  for (const auto& s : a.layout().all()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
    EXPECT_LE(a.weight(s).cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(a.bias(s).cwiseAbs().maxCoeff(), bound);
  }
}

}  // namespace
}  // namespace fimfuse
