#pragma once

#include <string>
#include <string_view>

#include "latentsteer/latent_spaces.hpp"

namespace latentsteer {

struct ImageShape {
  int height = 0;
  int width = 0;
  Eigen::Index size() const { return static_cast<Eigen::Index>(height) * width * 3; }
  bool operator==(const ImageShape&) const = default;
};

/// H x W x 3 image, row-major interleaved RGB, values in [0, 1].
class ImageTensor {
 public:
  ImageTensor(ImageShape shape, Vector pixels, std::string source_id = {});
  /// Clamps `pixels` into [0, 1] first. Non-finite values are rejected.
  static ImageTensor clamped(ImageShape shape, Vector pixels, std::string source_id = {});

  const ImageShape& shape() const { return shape_; }
  const Vector& pixels() const { return pixels_; }
  const std::string& source_id() const { return source_id_; }
  double at(int y, int x, int channel) const {
    return pixels_[(static_cast<Eigen::Index>(y) * shape_.width + x) * 3 + channel];
  }

 private:
  ImageShape shape_;
  Vector pixels_;
  std::string source_id_;
};

/// 8-bit RGB PNG. Quantizes with round-to-nearest.
std::string encode_png(const ImageTensor& image);
/// Accepts any PNG colour type / bit depth; alpha is dropped, grey expanded.
ImageTensor decode_png(std::string_view bytes, std::string source_id = {});

ImageTensor resize_bilinear(const ImageTensor& image, ImageShape target);

}  // namespace latentsteer
