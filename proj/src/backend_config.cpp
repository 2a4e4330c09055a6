#include "latentsteer/backend_config.hpp"

#include "latentsteer/binary_format.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/toy_backend.hpp"

namespace latentsteer {

namespace {

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).string();
}

}  // namespace

BackendBundle load_backend(const nlohmann::json& config, const std::filesystem::path& base_dir) {
  const std::string kind = config.value("kind", std::string("toy"));
  if (kind == "toy") {
    ToyConfig toy = ToyConfig::from_json(config);
    toy.generator_matrix_path = resolve(base_dir, toy.generator_matrix_path);
    toy.image_embedder_matrix_path = resolve(base_dir, toy.image_embedder_matrix_path);
    return make_toy_backend(toy);
  }
  if (kind == "real") {
    const auto weights = config.value("weights", nlohmann::json::object());
    for (const char* component : {"generator", "image_embedder", "text_embedder"}) {
      const std::string path = resolve(base_dir, weights.value(component, std::string()));
      if (path.empty() || !std::filesystem::exists(path)) {
        throw Error(ErrorCode::kBackendUnavailable,
                    std::string("backend unavailable: missing weights for ") + component +
                        (path.empty() ? "" : " at " + path));
      }
    }
    throw Error(ErrorCode::kBackendUnavailable,
                "backend unavailable: this build links no inference runtime for pretrained "
                "weights; register Python-side components through the latentsteer module");
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown backend kind '" + kind + "'");
}

BackendBundle load_backend_file(const std::filesystem::path& path) {
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "backend config " + path.string() + ": " + e.what());
  }
  return load_backend(config, path.parent_path());
}

}  // namespace latentsteer
