#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "latentsteer/artifact_store.hpp"
#include "latentsteer/binary_format.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;
namespace fs = std::filesystem;

class ArtifactStoreTest : public ::testing::Test {
 protected:
  void SetUp() override { root_ = testing::temp_dir("store"); }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(ArtifactStoreTest, PutGetAndIdempotence) {
  ArtifactStore store(root_);
  const ArtifactRecord rec = store.put({ArtifactKind::kStats, "abc123", "fp"}, "payload");
  EXPECT_EQ(rec.path, "stats/abc123.bin");
  EXPECT_EQ(rec.size, 7u);
  EXPECT_EQ(store.get(ArtifactKind::kStats, "abc123"), "payload");
  EXPECT_NO_THROW(store.put({ArtifactKind::kStats, "abc123", "fp"}, "payload"));
  EXPECT_EQ(store.list(ArtifactKind::kStats).size(), 1u);
  EXPECT_EQ(error_code_of([&] { store.put({ArtifactKind::kStats, "abc123", "fp"}, "other"); }),
            ErrorCode::kIntegrity);
  EXPECT_EQ(error_code_of([&] { store.get(ArtifactKind::kMapper, "abc123"); }), ErrorCode::kNotFound);
  EXPECT_FALSE(store.find(ArtifactKind::kImage, "zzz").has_value());
}

TEST_F(ArtifactStoreTest, RejectsUnsafeNames) {
  ArtifactStore store(root_);
  EXPECT_EQ(error_code_of([&] { store.put({ArtifactKind::kStats, "../escape", ""}, "x"); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([&] { store.put({ArtifactKind::kStats, "", ""}, "x"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([&] { store.write_document("index", {}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { artifact_kind_from_string("weights"); }), ErrorCode::kInvalidArgument);
}

TEST_F(ArtifactStoreTest, LabelsAndRemove) {
  ArtifactStore store(root_);
  store.put({ArtifactKind::kMapper, "m1", "afro"}, "a");
  store.put({ArtifactKind::kMapper, "m2", "bob"}, "b");
  store.put({ArtifactKind::kMapper, "m3", "afro"}, "c");
  const auto afro = store.find_by_label(ArtifactKind::kMapper, "afro");
  ASSERT_EQ(afro.size(), 2u);
  EXPECT_EQ(afro[0].key.fingerprint, "m1");
  EXPECT_EQ(afro[1].key.fingerprint, "m3");
  store.remove(ArtifactKind::kMapper, "m1");
  EXPECT_EQ(store.find_by_label(ArtifactKind::kMapper, "afro").size(), 1u);
  EXPECT_FALSE(fs::exists(root_ / "mapper" / "m1.bin"));
  EXPECT_EQ(error_code_of([&] { store.remove(ArtifactKind::kMapper, "m1"); }), ErrorCode::kNotFound);
}

TEST_F(ArtifactStoreTest, ReopenKeepsRecords) {
  {
    ArtifactStore store(root_);
    store.put({ArtifactKind::kTrace, "t1", "img"}, "step,total\n");
    store.write_document("jobs", {{"jobs", nlohmann::json::array()}});
  }
  ArtifactStore again(root_);
  EXPECT_EQ(again.repaired_on_open(), 0);
  EXPECT_EQ(again.get(ArtifactKind::kTrace, "t1"), "step,total\n");
  EXPECT_EQ(again.find(ArtifactKind::kTrace, "t1")->key.label, "img");
  EXPECT_TRUE(again.read_document("jobs").has_value());
  EXPECT_FALSE(again.read_document("missing").has_value());
}

TEST_F(ArtifactStoreTest, ReconcilesAfterCrash) {
  {
    ArtifactStore store(root_);
    store.put({ArtifactKind::kImage, "keep", ""}, "png");
    store.put({ArtifactKind::kImage, "gone", ""}, "png2");
  }
  // Simulate a crash: one file lost, a stray temporary, an unindexed complete file.
  fs::remove(root_ / "image" / "gone.bin");
  write_file_atomic(root_ / "image" / "partial.bin.tmp", "half");
  write_file_atomic(root_ / "image" / "orphan.bin", "whole");
  ArtifactStore store(root_);
  EXPECT_EQ(store.repaired_on_open(), 2);
  EXPECT_TRUE(store.find(ArtifactKind::kImage, "keep").has_value());
  EXPECT_FALSE(store.find(ArtifactKind::kImage, "gone").has_value());
  EXPECT_EQ(store.get(ArtifactKind::kImage, "orphan"), "whole");
  EXPECT_FALSE(fs::exists(root_ / "image" / "partial.bin.tmp"));
  ArtifactStore clean(root_);
  EXPECT_EQ(clean.repaired_on_open(), 0);
}

TEST_F(ArtifactStoreTest, CorruptIndexIsFormatError) {
  write_file_atomic(root_ / "index.json", "{not json");
  EXPECT_EQ(error_code_of([&] { ArtifactStore store(root_); }), ErrorCode::kFormat);
}

}  // namespace
}  // namespace latentsteer
