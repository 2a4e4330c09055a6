#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "latentsteer/backend_config.hpp"
#include "latentsteer/binary_format.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;

TEST(BackendConfig, ToyDefaultsMatchDirectConstruction) {
  const BackendBundle b = load_backend({{"kind", "toy"}});
  EXPECT_EQ(b.kind, "toy");
  EXPECT_EQ(b.fingerprint(), testing::toy().fingerprint());
  EXPECT_TRUE(b.has_identity());
  EXPECT_TRUE(b.has_inverter());
}

TEST(BackendConfig, ToyOptions) {
  const BackendBundle b = load_backend({{"kind", "toy"},
                                       {"seed", 11},
                                       {"geometry", testing::wide_geometry().to_json()},
                                       {"identity_dim", 0},
                                       {"with_inverter", false},
                                       {"embed_dim", 8},
                                       {"text_table", {{"hello", std::vector<double>(8, 1.0)}}}});
  EXPECT_EQ(b.geometry()->wplus_size(), 64);
  EXPECT_FALSE(b.has_identity());
  EXPECT_FALSE(b.has_inverter());
  EXPECT_EQ(b.image_encoder->embed_dim(), 8);
  EXPECT_NEAR(embed_text(b, "hello").values()[3], 1.0 / std::sqrt(8.0), 1e-15);
}

TEST(BackendConfig, WeightFilesResolveAgainstConfigDir) {
  const auto dir = testing::temp_dir("backend");
  const ToyMatrices m = make_toy_matrices({});
  RowMatrix gen = m.generator * 0.5;
  write_file_atomic(dir / "weights" / "gen.bin", encode_block(Eigen::Map<const Vector>(gen.data(), gen.size())));
  std::ofstream(dir / "backend.json") << R"({"kind": "toy", "weights": {"generator": "weights/gen.bin"}})";
  const BackendBundle b = load_backend_file(dir / "backend.json");
  EXPECT_NE(b.fingerprint(), testing::toy().fingerprint());

  std::ofstream(dir / "bad.json") << R"({"kind": "toy", "weights": {"generator": "weights/none.bin"}})";
  EXPECT_EQ(error_code_of([&] { load_backend_file(dir / "bad.json"); }), ErrorCode::kIo);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(error_code_of([&] { load_backend_file(dir / "broken.json"); }), ErrorCode::kFormat);
  std::filesystem::remove_all(dir);
}

TEST(BackendConfig, RealBackendNeverFallsBack) {
  EXPECT_EQ(error_code_of([] { load_backend({{"kind", "real"}}); }), ErrorCode::kBackendUnavailable);
  const auto dir = testing::temp_dir("real");
  for (const char* f : {"g.pt", "i.pt", "t.pt"}) std::ofstream(dir / f) << "x";
  EXPECT_EQ(error_code_of([&] {
              load_backend({{"kind", "real"},
                            {"weights", {{"generator", "g.pt"}, {"image_embedder", "i.pt"}, {"text_embedder", "t.pt"}}}},
                           dir);
            }),
            ErrorCode::kBackendUnavailable);
  std::filesystem::remove_all(dir);
  EXPECT_EQ(error_code_of([] { load_backend({{"kind", "onnx"}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { load_backend({{"kind", "toy"}, {"seed", "seven"}}); }), ErrorCode::kFormat);
}

}  // namespace
}  // namespace latentsteer
