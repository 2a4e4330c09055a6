#include <gtest/gtest.h>

#include <cstring>

#include "fixtures.hpp"
#include "latentsteer/binary_format.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;

std::uint32_t read_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(bytes[at + i]);
  return v;
}

TEST(BinaryFormat, BlockHeaderLayout) {
  const Vector v = Vector::LinSpaced(5, -1.0, 1.0);
  const std::string bytes = encode_block(v);
  ASSERT_EQ(bytes.size(), 16u + 5u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "SCLT");
  EXPECT_EQ(read_u32(bytes, 4), 1u);
  EXPECT_EQ(read_u32(bytes, 8), 5u);
  EXPECT_EQ(read_u32(bytes, 12), 0u);
  // Little-endian float32 payload.
  const std::uint32_t first = read_u32(bytes, 16);
  float f;
  std::memcpy(&f, &first, 4);
  EXPECT_EQ(f, -1.0f);
}

TEST(BinaryFormat, RoundTripAtFloatPrecision) {
  std::mt19937_64 rng(1);
  const Vector v = testing::gaussian_vector(rng, 100);
  const Vector back = decode_block(encode_block(v));
  ASSERT_EQ(back.size(), v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(v[i])));
}

TEST(BinaryFormat, RejectsCorruptBlocks) {
  const std::string good = encode_block(Vector::Ones(3));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_code_of([&] { decode_block(bad_magic); }), ErrorCode::kFormat);
  EXPECT_EQ(error_code_of([&] { decode_block(good.substr(0, good.size() - 1)); }), ErrorCode::kFormat);
  EXPECT_EQ(error_code_of([&] { decode_block(good + "x"); }), ErrorCode::kFormat);
  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(error_code_of([&] { decode_block(bad_version); }), ErrorCode::kFormat);
  EXPECT_EQ(error_code_of([&] { decode_block(""); }), ErrorCode::kFormat);
}

TEST(BinaryFormat, CodesAndDirections) {
  std::mt19937_64 rng(2);
  const auto g = share(toy_geometry());
  const WPlusCode w = testing::random_code(g, rng);
  const WPlusCode w2 = decode_wplus(encode_wplus(w), g);
  EXPECT_LE((w2.values() - w.values()).cwiseAbs().maxCoeff(), 1e-7);

  Vector dv = Vector::Zero(64);
  dv[5] = 0.25;
  dv[40] = -0.5;
  const StyleDirection d = decode_direction(encode_direction(StyleDirection(g, dv)), g);
  EXPECT_EQ(d.active_count(), 2);
  EXPECT_EQ(d.values()[40], -0.5);

  EXPECT_EQ(error_code_of([&] { decode_wplus(encode_wplus(w), share(testing::wide_geometry())); }),
            ErrorCode::kShapeMismatch);
}

TEST(BinaryFormat, DocumentRoundTrip) {
  BinaryDocument doc;
  doc.header = {{"format", "test"}, {"n", 2}};
  doc.blocks = {Vector::Ones(3), Vector::Constant(2, 0.5)};
  const BinaryDocument back = BinaryDocument::decode(doc.encode());
  EXPECT_EQ(back.header, doc.header);
  ASSERT_EQ(back.blocks.size(), 2u);
  EXPECT_EQ(back.blocks[1][1], 0.5);
  EXPECT_EQ(error_code_of([&] { BinaryDocument::decode("SCLJ"); }), ErrorCode::kFormat);
}

TEST(BinaryFormat, AtomicWriteLeavesNoTemporary) {
  const auto dir = testing::temp_dir("atomic");
  const auto path = dir / "sub" / "x.bin";
  write_file_atomic(path, "hello");
  EXPECT_EQ(read_file(path), "hello");
  write_file_atomic(path, "bye");
  EXPECT_EQ(read_file(path), "bye");
  for (const auto& e : std::filesystem::directory_iterator(dir / "sub")) {
    EXPECT_NE(e.path().extension(), ".tmp");
  }
  EXPECT_EQ(error_code_of([&] { read_file(dir / "missing"); }), ErrorCode::kIo);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace latentsteer
