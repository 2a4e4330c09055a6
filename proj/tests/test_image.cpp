#include <gtest/gtest.h>

#include <png.h>

#include "fixtures.hpp"
#include "latentsteer/image.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;

ImageTensor gradient_image(int h, int w) {
  Vector px(static_cast<Eigen::Index>(h) * w * 3);
  for (Eigen::Index i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i % 256) / 255.0;
  return ImageTensor({h, w}, px);
}

TEST(ImageTensor, Validation) {
  EXPECT_EQ(error_code_of([] { ImageTensor({0, 4}, Vector()); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { ImageTensor({2, 2}, Vector::Zero(11)); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(error_code_of([] { ImageTensor({1, 1}, Vector::Constant(3, 1.5)); }), ErrorCode::kInvalidArgument);
  Vector nan = Vector::Zero(3);
  nan[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(error_code_of([&] { ImageTensor({1, 1}, nan); }), ErrorCode::kNonFinite);
  EXPECT_EQ(error_code_of([&] { ImageTensor::clamped({1, 1}, nan); }), ErrorCode::kNonFinite);
}

TEST(ImageTensor, ClampedAndIndexing) {
  Vector px(6);
  px << -1, 0.25, 2, 0.5, 0.75, 1;
  const ImageTensor img = ImageTensor::clamped({1, 2}, px);
  EXPECT_EQ(img.at(0, 0, 0), 0.0);
  EXPECT_EQ(img.at(0, 0, 2), 1.0);
  EXPECT_EQ(img.at(0, 1, 1), 0.75);
}

TEST(Png, RoundTripIsExactOn8BitValues) {
  const ImageTensor img = gradient_image(5, 7);
  const std::string bytes = encode_png(img);
  EXPECT_EQ(bytes.substr(1, 3), "PNG");
  const ImageTensor back = decode_png(bytes);
  EXPECT_EQ(back.shape(), img.shape());
  EXPECT_LE((back.pixels() - img.pixels()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(encode_png(back), bytes);
}

TEST(Png, QuantizesToNearest) {
  Vector px(3);
  px << 0.3 / 255.0, 0.6 / 255.0, 254.4 / 255.0;
  const ImageTensor back = decode_png(encode_png(ImageTensor({1, 1}, px)));
  EXPECT_EQ(back.pixels()[0], 0.0);
  EXPECT_EQ(back.pixels()[1], 1.0 / 255.0);
  EXPECT_EQ(back.pixels()[2], 254.0 / 255.0);
}

TEST(Png, RejectsGarbage) {
  EXPECT_EQ(error_code_of([] { decode_png(""); }), ErrorCode::kFormat);
  EXPECT_EQ(error_code_of([] { decode_png("definitely not a png"); }), ErrorCode::kFormat);
  std::string truncated = encode_png(gradient_image(8, 8));
  truncated.resize(truncated.size() / 2);
  EXPECT_EQ(error_code_of([&] { decode_png(truncated); }), ErrorCode::kFormat);
}

std::string write_png_with(int color_type, int channels, const std::vector<std::uint8_t>& data, int w, int h) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = w;
  image.height = h;
  image.format = color_type;
  png_alloc_size_t size = 0;
  png_image_write_to_memory(&image, nullptr, &size, 0, data.data(), w * channels, nullptr);
  std::string out(size, '\0');
  png_image_write_to_memory(&image, out.data(), &size, 0, data.data(), w * channels, nullptr);
  out.resize(size);
  return out;
}

TEST(Png, ExpandsGreyAndDropsAlpha) {
  const std::string grey = write_png_with(PNG_FORMAT_GRAY, 1, {0, 51, 255, 102}, 2, 2);
  const ImageTensor g = decode_png(grey);
  EXPECT_EQ(g.shape(), (ImageShape{2, 2}));
  for (int c = 0; c < 3; ++c) EXPECT_EQ(g.at(0, 1, c), 0.2);

  const std::string rgba = write_png_with(PNG_FORMAT_RGBA, 4, {255, 0, 51, 0}, 1, 1);
  const ImageTensor a = decode_png(rgba);
  EXPECT_EQ(a.at(0, 0, 0), 1.0);
  EXPECT_EQ(a.at(0, 0, 1), 0.0);
  EXPECT_EQ(a.at(0, 0, 2), 0.2);
}

TEST(Resize, IdentityAndConstant) {
  const ImageTensor img = gradient_image(6, 6);
  EXPECT_EQ(resize_bilinear(img, {6, 6}).pixels(), img.pixels());
  const ImageTensor flat({9, 5}, Vector::Constant(9 * 5 * 3, 0.4));
  const ImageTensor small = resize_bilinear(flat, {4, 4});
  EXPECT_LE((small.pixels().array() - 0.4).abs().maxCoeff(), 1e-12);
  EXPECT_EQ(small.shape(), (ImageShape{4, 4}));
}

TEST(Resize, StaysInRangeAndBetweenNeighbours) {
  const ImageTensor img = gradient_image(3, 3);
  const ImageTensor up = resize_bilinear(img, {7, 7});
  EXPECT_GE(up.pixels().minCoeff(), img.pixels().minCoeff());
  EXPECT_LE(up.pixels().maxCoeff(), img.pixels().maxCoeff());
}

}  // namespace
}  // namespace latentsteer
