#include "latentsteer/binary_format.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "latentsteer/errors.hpp"

namespace latentsteer {

static_assert(std::endian::native == std::endian::little,
              "binary format assumes a little-endian host");

namespace {

constexpr char kBlockMagic[4] = {'S', 'C', 'L', 'T'};
constexpr char kDocMagic[4] = {'S', 'C', 'L', 'J'};

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) {
    throw Error(ErrorCode::kFormat, "binary data truncated");
  }
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

void append_block(std::string& out, const Eigen::Ref<const Eigen::VectorXd>& values) {
  out.append(kBlockMagic, 4);
  put<std::uint32_t>(out, kBlockVersion);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) put<float>(out, static_cast<float>(values[i]));
}

std::string encode_block(const Eigen::Ref<const Eigen::VectorXd>& values) {
  std::string out;
  out.reserve(kBlockHeaderSize + 4 * values.size());
  append_block(out, values);
  return out;
}

Vector decode_block(std::string_view bytes, std::size_t& offset) {
  if (offset + kBlockHeaderSize > bytes.size() ||
      std::memcmp(bytes.data() + offset, kBlockMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "missing SCLT block header");
  }
  offset += 4;
  const auto version = get<std::uint32_t>(bytes, offset);
  if (version != kBlockVersion) {
    throw Error(ErrorCode::kFormat, "unsupported SCLT block version " + std::to_string(version));
  }
  const auto length = get<std::uint64_t>(bytes, offset);
  if (length > (bytes.size() - offset) / 4) throw Error(ErrorCode::kFormat, "SCLT block truncated");
  Vector values(static_cast<Eigen::Index>(length));
  for (std::uint64_t i = 0; i < length; ++i) values[i] = get<float>(bytes, offset);
  return values;
}

Vector decode_block(std::string_view bytes) {
  std::size_t offset = 0;
  Vector v = decode_block(bytes, offset);
  if (offset != bytes.size()) throw Error(ErrorCode::kFormat, "trailing bytes after SCLT block");
  return v;
}

std::string BinaryDocument::encode() const {
  const std::string text = header.dump();
  std::string out(kDocMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& block : blocks) append_block(out, block);
  return out;
}

BinaryDocument BinaryDocument::decode(std::string_view bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kDocMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "missing SCLJ document header");
  }
  std::size_t offset = 4;
  const auto header_size = get<std::uint32_t>(bytes, offset);
  if (offset + header_size > bytes.size()) throw Error(ErrorCode::kFormat, "document header truncated");
  BinaryDocument doc;
  try {
    doc.header = nlohmann::json::parse(bytes.substr(offset, header_size));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("document header: ") + e.what());
  }
  offset += header_size;
  while (offset < bytes.size()) doc.blocks.push_back(decode_block(bytes, offset));
  return doc;
}

std::string encode_wplus(const WPlusCode& w) { return encode_block(w.flat()); }

WPlusCode decode_wplus(std::string_view bytes, GeometryPtr geometry) {
  return WPlusCode::from_flat(std::move(geometry), decode_block(bytes));
}

std::string encode_style(const StyleCode& s) { return encode_block(s.values()); }

StyleCode decode_style(std::string_view bytes, GeometryPtr geometry) {
  return StyleCode(std::move(geometry), decode_block(bytes));
}

std::string encode_direction(const StyleDirection& d) { return encode_block(d.values()); }

StyleDirection decode_direction(std::string_view bytes, GeometryPtr geometry) {
  return StyleDirection(std::move(geometry), decode_block(bytes));
}

RowMatrix decode_matrix(std::string_view bytes, Eigen::Index rows, Eigen::Index cols) {
  Vector flat = decode_block(bytes);
  if (flat.size() != rows * cols) {
    std::ostringstream msg;
    msg << "matrix block has " << flat.size() << " elements, expected " << rows << "x" << cols;
    throw Error(ErrorCode::kShapeMismatch, msg.str());
  }
  return Eigen::Map<const RowMatrix>(flat.data(), rows, cols);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

}  // namespace latentsteer
