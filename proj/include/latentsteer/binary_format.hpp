#pragma once

// Float32 binary blocks shared by codes, toy matrices, channel stats and mapper
// checkpoints.
//
// Block:     "SCLT" | u32 version | u64 element count | count x f32   (all LE)
// Document:  "SCLJ" | u32 header length | UTF-8 JSON header | block*

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "latentsteer/latent_spaces.hpp"

namespace latentsteer {

inline constexpr std::uint32_t kBlockVersion = 1;
inline constexpr std::size_t kBlockHeaderSize = 16;

void append_block(std::string& out, const Eigen::Ref<const Eigen::VectorXd>& values);
std::string encode_block(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Decodes the block at `offset` and advances it past the block.
Vector decode_block(std::string_view bytes, std::size_t& offset);
Vector decode_block(std::string_view bytes);

struct BinaryDocument {
  nlohmann::json header;
  std::vector<Vector> blocks;

  std::string encode() const;
  static BinaryDocument decode(std::string_view bytes);
};

std::string encode_wplus(const WPlusCode& w);
WPlusCode decode_wplus(std::string_view bytes, GeometryPtr geometry);
std::string encode_style(const StyleCode& s);
StyleCode decode_style(std::string_view bytes, GeometryPtr geometry);
std::string encode_direction(const StyleDirection& d);
StyleDirection decode_direction(std::string_view bytes, GeometryPtr geometry);

/// Row-major matrix stored as a single block; shape supplied by the reader.
RowMatrix decode_matrix(std::string_view bytes, Eigen::Index rows, Eigen::Index cols);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace latentsteer
