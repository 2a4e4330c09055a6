#include "latentsteer/hashing.hpp"

#include <cstdio>

namespace latentsteer {

Fnv1a& Fnv1a::update(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    state_ ^= b;
    state_ *= 1099511628211ull;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::string_view text) {
  return update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string fingerprint_of(std::string_view text) { return Fnv1a().update(text).hex(); }

}  // namespace latentsteer
