#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latentsteer {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kBackendUnavailable,
  kIdentityUnavailable,
  kInverterUnavailable,
  kDegeneratePrompt,
  kDiverged,
  kNotFound,
  kIntegrity,
  kIo,
  kFormat,
  kCancelled,
};

/// Machine-readable name, e.g. "shape_mismatch". Used in service error bodies.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace latentsteer
