#include "latentsteer/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "latentsteer/errors.hpp"

namespace latentsteer {

ImageTensor::ImageTensor(ImageShape shape, Vector pixels, std::string source_id)
    : shape_(shape), pixels_(std::move(pixels)), source_id_(std::move(source_id)) {
  if (shape_.height < 1 || shape_.width < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  if (pixels_.size() != shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "pixel buffer does not match image shape");
  }
  if (!pixels_.allFinite()) throw Error(ErrorCode::kNonFinite, "image has non-finite pixels");
  if (pixels_.size() > 0 && (pixels_.minCoeff() < 0.0 || pixels_.maxCoeff() > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel values must lie in [0, 1]");
  }
}

ImageTensor ImageTensor::clamped(ImageShape shape, Vector pixels, std::string source_id) {
  if (!pixels.allFinite()) throw Error(ErrorCode::kNonFinite, "image has non-finite pixels");
  pixels = pixels.cwiseMax(0.0).cwiseMin(1.0);
  return ImageTensor(shape, std::move(pixels), std::move(source_id));
}

namespace {

struct PngWriteBuffer {
  std::string data;
};

void png_write_to_string(png_structp png, png_bytep bytes, png_size_t length) {
  auto* buffer = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buffer->data.append(reinterpret_cast<const char*>(bytes), length);
}

void png_flush_noop(png_structp) {}

struct PngReadCursor {
  std::string_view data;
  std::size_t offset = 0;
};

void png_read_from_view(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->data.size()) png_error(png, "PNG data truncated");
  std::memcpy(out, cursor->data.data() + cursor->offset, length);
  cursor->offset += length;
}

void png_error_throw(png_structp png, png_const_charp message) {
  // libpng requires this handler not to return; longjmp back to the caller.
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = message;
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const ImageTensor& image) {
  const int h = image.shape().height;
  const int w = image.shape().width;
  std::vector<png_byte> rows(static_cast<std::size_t>(h) * w * 3);
  for (Eigen::Index i = 0; i < image.pixels().size(); ++i) {
    rows[i] = static_cast<png_byte>(std::lround(image.pixels()[i] * 255.0));
  }

  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_throw,
                                            png_warning_ignore);
  if (!png) throw Error(ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  PngWriteBuffer buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "PNG encode failed: " + error);
  }
  png_set_write_fn(png, &buffer, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, rows.data() + static_cast<std::size_t>(y) * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(buffer.data);
}

ImageTensor decode_png(std::string_view bytes, std::string source_id) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw Error(ErrorCode::kFormat, "not a PNG image");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_throw,
                                           png_warning_ignore);
  if (!png) throw Error(ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngReadCursor cursor{bytes, 0};
  std::vector<png_byte> data;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kFormat, "PNG decode failed: " + error);
  }
  png_set_read_fn(png, &cursor, png_read_from_view);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kFormat, "unsupported PNG layout");
  }
  data.resize(static_cast<std::size_t>(width) * height * 3);
  std::vector<png_bytep> row_ptrs(height);
  for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = data.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Vector pixels(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) pixels[static_cast<Eigen::Index>(i)] = data[i] / 255.0;
  return ImageTensor({static_cast<int>(height), static_cast<int>(width)}, std::move(pixels),
                     std::move(source_id));
}

ImageTensor resize_bilinear(const ImageTensor& image, ImageShape target) {
  if (image.shape() == target) return image;
  const ImageShape src = image.shape();
  Vector out(target.size());
  const double sy = static_cast<double>(src.height) / target.height;
  const double sx = static_cast<double>(src.width) / target.width;
  for (int y = 0; y < target.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < target.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - tx) * image.at(y0, x0, c) + tx * image.at(y0, x1, c);
        const double bottom = (1 - tx) * image.at(y1, x0, c) + tx * image.at(y1, x1, c);
        out[(static_cast<Eigen::Index>(y) * target.width + x) * 3 + c] = (1 - ty) * top + ty * bottom;
      }
    }
  }
  return ImageTensor::clamped(target, std::move(out), image.source_id());
}

}  // namespace latentsteer
