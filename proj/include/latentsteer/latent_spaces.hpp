#pragma once

// Latent-space data model: W+ codes, flat style codes, sparse style directions
// and the coarse/medium/fine layer grouping.

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace latentsteer {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LayerGroup { kCoarse = 0, kMedium = 1, kFine = 2 };

const char* to_string(LayerGroup group);

/// Half-open range of W+ layer indices.
struct LayerRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

class LatentGeometry {
 public:
  /// Throws Error(kInvalidArgument) when any invariant is violated.
  LatentGeometry(int num_layers, int latent_dim, std::vector<int> style_channel_counts,
                 std::array<int, 2> group_boundaries);

  /// 18-layer, 512-wide geometry of a 1024px style-based generator. Style
  /// widths cover the 17 modulated convolutions; colour-transform layers are
  /// excluded from S.
  static LatentGeometry stylegan2_1024();

  int num_layers() const { return num_layers_; }
  int latent_dim() const { return latent_dim_; }
  int wplus_size() const { return num_layers_ * latent_dim_; }
  const std::vector<int>& style_channel_counts() const { return style_channel_counts_; }
  const std::array<int, 2>& group_boundaries() const { return group_boundaries_; }
  int total_style_channels() const { return total_style_channels_; }
  /// Offset of the first channel of style layer `layer` in the flat style code.
  int style_offset(int layer) const { return style_offsets_.at(layer); }
  LayerRange group(LayerGroup g) const;

  nlohmann::json to_json() const;
  static LatentGeometry from_json(const nlohmann::json& j);
  /// Stable hex hash of the canonical JSON form.
  std::string fingerprint() const;

  bool operator==(const LatentGeometry& other) const;

 private:
  int num_layers_;
  int latent_dim_;
  std::vector<int> style_channel_counts_;
  std::vector<int> style_offsets_;
  std::array<int, 2> group_boundaries_;
  int total_style_channels_;
};

using GeometryPtr = std::shared_ptr<const LatentGeometry>;

GeometryPtr share(LatentGeometry geometry);

/// Extended latent code: one latent vector per generator layer.
class WPlusCode {
 public:
  WPlusCode(GeometryPtr geometry, RowMatrix values);
  static WPlusCode zeros(GeometryPtr geometry);
  /// Builds a code from a layer-major flat vector.
  static WPlusCode from_flat(GeometryPtr geometry, const Vector& flat);

  const RowMatrix& values() const { return values_; }
  const GeometryPtr& geometry() const { return geometry_; }
  Vector flat() const;

 private:
  GeometryPtr geometry_;
  RowMatrix values_;
};

struct GroupedWPlus {
  RowMatrix coarse;
  RowMatrix medium;
  RowMatrix fine;

  const RowMatrix& operator[](LayerGroup g) const;
};

GroupedWPlus split_wplus(const WPlusCode& w, const LatentGeometry& geometry);
WPlusCode merge_wplus(const RowMatrix& coarse, const RowMatrix& medium, const RowMatrix& fine,
                      GeometryPtr geometry);

class StyleCode {
 public:
  StyleCode(GeometryPtr geometry, Vector values);
  static StyleCode zeros(GeometryPtr geometry);

  const Vector& values() const { return values_; }
  const GeometryPtr& geometry() const { return geometry_; }
  Eigen::Index size() const { return values_.size(); }

 private:
  GeometryPtr geometry_;
  Vector values_;
};

/// Direction in style space. Usually sparse; `active_count` caches the number
/// of nonzero channels.
class StyleDirection {
 public:
  StyleDirection(GeometryPtr geometry, Vector values);

  const Vector& values() const { return values_; }
  const GeometryPtr& geometry() const { return geometry_; }
  int active_count() const { return active_count_; }
  /// Indices of nonzero channels in ascending order.
  std::vector<int> active_channels() const;

 private:
  GeometryPtr geometry_;
  Vector values_;
  int active_count_;
};

/// s + alpha * d.
StyleCode add_direction(const StyleCode& s, const StyleDirection& d, double alpha);

}  // namespace latentsteer
