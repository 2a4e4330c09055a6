#pragma once

#include <filesystem>

#include "json.hpp"
#include "latentsteer/model_gateway.hpp"

namespace latentsteer {

/// Builds a backend from a config document:
///   {"kind": "toy" | "real", "seed": ..., "geometry": {...}, "embed_dim": ...,
///    "weights": {"generator": path, "image_embedder": path, ...}}
/// Relative weight paths resolve against `base_dir`. A "real" backend whose
/// weights are missing, or for which no inference runtime is linked, fails
/// with kBackendUnavailable; it never falls back to the toy backend.
BackendBundle load_backend(const nlohmann::json& config, const std::filesystem::path& base_dir = {});
BackendBundle load_backend_file(const std::filesystem::path& path);

}  // namespace latentsteer
