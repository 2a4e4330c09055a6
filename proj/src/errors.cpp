#include "latentsteer/errors.hpp"

namespace latentsteer {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kBackendUnavailable: return "backend_unavailable";
    case ErrorCode::kIdentityUnavailable: return "identity_loss_unavailable";
    case ErrorCode::kInverterUnavailable: return "inversion_unavailable";
    case ErrorCode::kDegeneratePrompt: return "degenerate_prompt";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kIntegrity: return "integrity_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kFormat: return "format_error";
    case ErrorCode::kCancelled: return "cancelled";
  }
  return "unknown";
}

}  // namespace latentsteer
