#pragma once

// Deterministic linear toy backend. All desk-scale tests run against it.
//
//   style  s = W w + b                      (block-diagonal per layer)
//   image  x = clamp(A s, 0, 1)
//   embed  e = normalize(B x + anchor)
//   id     r = normalize(C x)
//   text   table lookup, seeded pseudo-random vector for unknown sentences
//
// A nonzero anchor orthogonal to range(B) puts the image embedder in a linear
// regime: for |Bx| << |anchor| embedding differences are parallel to B dx up
// to O(|Bx| / |anchor|).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "latentsteer/model_gateway.hpp"

namespace latentsteer {

struct ToyMatrices {
  GeometryPtr geometry;
  ImageShape image_shape;
  RowMatrix style_weight;       // S x (L * d)
  Vector style_bias;            // S
  RowMatrix generator;          // P x S
  RowMatrix image_embedder;     // E x P
  Vector embed_anchor;          // E
  RowMatrix identity_embedder;  // F x P; zero rows means no identity network
  std::map<std::string, Vector> text_table;
  std::uint64_t text_seed = 0;
  double prior_scale = 0.1;
  bool with_inverter = true;
};

struct ToyConfig {
  std::uint64_t seed = 7;
  std::optional<LatentGeometry> geometry;  // defaults to toy_geometry()
  ImageShape image_shape{4, 4};
  int embed_dim = 16;
  int identity_dim = 8;  // 0 disables the identity embedder
  double prior_scale = 0.1;
  double embed_anchor_scale = 0.0;
  std::vector<int> inert_channels;
  bool with_inverter = true;
  std::map<std::string, Vector> text_table;
  // Optional SCLT matrix files overriding the seeded generator / embedder.
  std::string generator_matrix_path;
  std::string image_embedder_matrix_path;

  static ToyConfig from_json(const nlohmann::json& j);
};

/// 6 layers x 4 dims, style widths {16,16,8,8,8,8} (64 channels), groups (2, 4).
LatentGeometry toy_geometry();

ToyMatrices make_toy_matrices(const ToyConfig& config);
BackendBundle make_toy_backend(ToyMatrices matrices);
BackendBundle make_toy_backend(const ToyConfig& config = {});

}  // namespace latentsteer
