#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace latentsteer {

/// 64-bit FNV-1a. Stable across platforms; used for fingerprints, not security.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::uint8_t> bytes);
  Fnv1a& update(std::string_view text);
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

std::string fingerprint_of(std::string_view text);

}  // namespace latentsteer
