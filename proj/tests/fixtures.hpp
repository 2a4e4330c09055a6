#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "latentsteer/errors.hpp"
#include "latentsteer/toy_backend.hpp"

namespace latentsteer::testing {

/// 8 layers x 8 dims: 64 W+ coordinates and 64 style channels.
inline LatentGeometry wide_geometry() {
  return LatentGeometry(8, 8, {8, 8, 8, 8, 8, 8, 8, 8}, {3, 6});
}

inline BackendBundle toy(std::uint64_t seed = 7) {
  ToyConfig cfg;
  cfg.seed = seed;
  return make_toy_backend(cfg);
}

inline BackendBundle wide_toy(std::uint64_t seed = 11) {
  ToyConfig cfg;
  cfg.seed = seed;
  cfg.geometry = wide_geometry();
  return make_toy_backend(cfg);
}

/// Embedding anchor large enough that the image embedder is linear to ~1e-7.
inline constexpr double kLinearAnchor = 1e7;
/// Prior spread small enough that renders perturbed by 5 sigma stay unclamped.
inline constexpr double kLinearPriorScale = 0.02;

inline ToyConfig linear_config(std::uint64_t seed = 3) {
  ToyConfig cfg;
  cfg.seed = seed;
  cfg.embed_anchor_scale = kLinearAnchor;
  cfg.prior_scale = kLinearPriorScale;
  return cfg;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index n, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline WPlusCode random_code(const GeometryPtr& g, std::mt19937_64& rng, double stddev = 0.1) {
  return WPlusCode::from_flat(g, gaussian_vector(rng, g->wplus_size(), stddev));
}

/// Code of the Error thrown by f, or nullopt when it returns normally.
template <class F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("latentsteer-" + name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace latentsteer::testing
