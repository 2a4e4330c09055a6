#include "latentsteer/latent_spaces.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "latentsteer/errors.hpp"
#include "latentsteer/hashing.hpp"

namespace latentsteer {

namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

void require_same_geometry(const GeometryPtr& a, const GeometryPtr& b, const char* what) {
  if (a != b && !(*a == *b)) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": geometry mismatch");
  }
}

}  // namespace

const char* to_string(LayerGroup group) {
  switch (group) {
    case LayerGroup::kCoarse: return "coarse";
    case LayerGroup::kMedium: return "medium";
    case LayerGroup::kFine: return "fine";
  }
  return "?";
}

LatentGeometry::LatentGeometry(int num_layers, int latent_dim, std::vector<int> style_channel_counts,
                               std::array<int, 2> group_boundaries)
    : num_layers_(num_layers),
      latent_dim_(latent_dim),
      style_channel_counts_(std::move(style_channel_counts)),
      group_boundaries_(group_boundaries),
      total_style_channels_(0) {
  if (num_layers_ < 3) invalid("num_layers must be at least 3 to form three layer groups");
  if (latent_dim_ < 1) invalid("latent_dim must be positive");
  if (style_channel_counts_.empty()) invalid("style_channel_counts must not be empty");
  const auto [first, second] = group_boundaries_;
  if (!(first < second)) invalid("group boundaries must be strictly increasing");
  if (first < 1 || second > num_layers_ - 1) {
    invalid("group boundaries must lie within [1, num_layers - 1]");
  }
  style_offsets_.reserve(style_channel_counts_.size());
  for (int count : style_channel_counts_) {
    if (count < 1) invalid("style channel counts must be positive");
    style_offsets_.push_back(total_style_channels_);
    total_style_channels_ += count;
  }
}

LatentGeometry LatentGeometry::stylegan2_1024() {
  std::vector<int> widths(9, 512);
  for (int w : {512, 256, 256, 128, 128, 64, 64, 32}) widths.push_back(w);
  return LatentGeometry(18, 512, std::move(widths), {4, 8});
}

LayerRange LatentGeometry::group(LayerGroup g) const {
  switch (g) {
    case LayerGroup::kCoarse: return {0, group_boundaries_[0]};
    case LayerGroup::kMedium: return {group_boundaries_[0], group_boundaries_[1]};
    case LayerGroup::kFine: return {group_boundaries_[1], num_layers_};
  }
  return {};
}

nlohmann::json LatentGeometry::to_json() const {
  return {{"num_layers", num_layers_},
          {"latent_dim", latent_dim_},
          {"style_channel_counts", style_channel_counts_},
          {"group_boundaries", group_boundaries_}};
}

LatentGeometry LatentGeometry::from_json(const nlohmann::json& j) {
  try {
    return LatentGeometry(j.at("num_layers").get<int>(), j.at("latent_dim").get<int>(),
                          j.at("style_channel_counts").get<std::vector<int>>(),
                          j.at("group_boundaries").get<std::array<int, 2>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("geometry JSON: ") + e.what());
  }
}

std::string LatentGeometry::fingerprint() const { return fingerprint_of(to_json().dump()); }

bool LatentGeometry::operator==(const LatentGeometry& other) const {
  return num_layers_ == other.num_layers_ && latent_dim_ == other.latent_dim_ &&
         style_channel_counts_ == other.style_channel_counts_ &&
         group_boundaries_ == other.group_boundaries_;
}

GeometryPtr share(LatentGeometry geometry) {
  return std::make_shared<const LatentGeometry>(std::move(geometry));
}

WPlusCode::WPlusCode(GeometryPtr geometry, RowMatrix values)
    : geometry_(std::move(geometry)), values_(std::move(values)) {
  if (!geometry_) invalid("WPlusCode requires a geometry");
  if (values_.rows() != geometry_->num_layers() || values_.cols() != geometry_->latent_dim()) {
    std::ostringstream msg;
    msg << "W+ code has shape " << values_.rows() << "x" << values_.cols() << ", geometry expects "
        << geometry_->num_layers() << "x" << geometry_->latent_dim();
    throw Error(ErrorCode::kShapeMismatch, msg.str());
  }
  if (!values_.allFinite()) throw Error(ErrorCode::kNonFinite, "W+ code has non-finite entries");
}

WPlusCode WPlusCode::zeros(GeometryPtr geometry) {
  RowMatrix values = RowMatrix::Zero(geometry->num_layers(), geometry->latent_dim());
  return WPlusCode(std::move(geometry), std::move(values));
}

WPlusCode WPlusCode::from_flat(GeometryPtr geometry, const Vector& flat) {
  if (flat.size() != geometry->wplus_size()) {
    throw Error(ErrorCode::kShapeMismatch, "flat W+ vector has wrong length");
  }
  RowMatrix values = Eigen::Map<const RowMatrix>(flat.data(), geometry->num_layers(),
                                                 geometry->latent_dim());
  return WPlusCode(std::move(geometry), std::move(values));
}

Vector WPlusCode::flat() const {
  return Eigen::Map<const Vector>(values_.data(), values_.size());
}

const RowMatrix& GroupedWPlus::operator[](LayerGroup g) const {
  switch (g) {
    case LayerGroup::kCoarse: return coarse;
    case LayerGroup::kMedium: return medium;
    case LayerGroup::kFine: return fine;
  }
  return coarse;
}

GroupedWPlus split_wplus(const WPlusCode& w, const LatentGeometry& geometry) {
  if (!(*w.geometry() == geometry)) {
    throw Error(ErrorCode::kShapeMismatch, "split_wplus: code does not conform to geometry");
  }
  const auto block = [&](LayerGroup g) -> RowMatrix {
    const LayerRange r = geometry.group(g);
    return w.values().middleRows(r.begin, r.size());
  };
  return {block(LayerGroup::kCoarse), block(LayerGroup::kMedium), block(LayerGroup::kFine)};
}

WPlusCode merge_wplus(const RowMatrix& coarse, const RowMatrix& medium, const RowMatrix& fine,
                      GeometryPtr geometry) {
  const RowMatrix* parts[] = {&coarse, &medium, &fine};
  RowMatrix values(geometry->num_layers(), geometry->latent_dim());
  for (int g = 0; g < 3; ++g) {
    const LayerRange r = geometry->group(static_cast<LayerGroup>(g));
    const RowMatrix& part = *parts[g];
    if (part.rows() != r.size() || part.cols() != geometry->latent_dim()) {
      std::ostringstream msg;
      msg << "merge_wplus: " << to_string(static_cast<LayerGroup>(g)) << " slice has shape "
          << part.rows() << "x" << part.cols() << ", expected " << r.size() << "x"
          << geometry->latent_dim();
      throw Error(ErrorCode::kShapeMismatch, msg.str());
    }
    values.middleRows(r.begin, r.size()) = part;
  }
  return WPlusCode(std::move(geometry), std::move(values));
}

StyleCode::StyleCode(GeometryPtr geometry, Vector values)
    : geometry_(std::move(geometry)), values_(std::move(values)) {
  if (!geometry_) invalid("StyleCode requires a geometry");
  if (values_.size() != geometry_->total_style_channels()) {
    throw Error(ErrorCode::kShapeMismatch, "style code length does not match geometry");
  }
  if (!values_.allFinite()) throw Error(ErrorCode::kNonFinite, "style code has non-finite entries");
}

StyleCode StyleCode::zeros(GeometryPtr geometry) {
  Vector values = Vector::Zero(geometry->total_style_channels());
  return StyleCode(std::move(geometry), std::move(values));
}

StyleDirection::StyleDirection(GeometryPtr geometry, Vector values)
    : geometry_(std::move(geometry)), values_(std::move(values)), active_count_(0) {
  if (!geometry_) invalid("StyleDirection requires a geometry");
  if (values_.size() != geometry_->total_style_channels()) {
    throw Error(ErrorCode::kShapeMismatch, "style direction length does not match geometry");
  }
  if (!values_.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "style direction has non-finite entries");
  }
  active_count_ = static_cast<int>((values_.array() != 0.0).count());
}

std::vector<int> StyleDirection::active_channels() const {
  std::vector<int> out;
  out.reserve(active_count_);
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (values_[i] != 0.0) out.push_back(static_cast<int>(i));
  }
  return out;
}

StyleCode add_direction(const StyleCode& s, const StyleDirection& d, double alpha) {
  require_same_geometry(s.geometry(), d.geometry(), "add_direction");
  if (!std::isfinite(alpha)) throw Error(ErrorCode::kNonFinite, "add_direction: alpha is not finite");
  return StyleCode(s.geometry(), s.values() + alpha * d.values());
}

}  // namespace latentsteer
