#pragma once

// Filesystem artifact store:
//   <root>/<kind>/<fingerprint>.bin
//   <root>/index.json      append-only record list
//   <root>/<name>.json     small mutable documents (job journal)
//
// Artifacts are written to a temporary file and renamed into place before the
// index references them, so an index rebuilt after a crash never points at a
// partial file.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace latentsteer {

enum class ArtifactKind { kStats, kMapper, kTrace, kImage };

std::string_view to_string(ArtifactKind kind);
/// Throws kInvalidArgument for unknown names.
ArtifactKind artifact_kind_from_string(std::string_view name);

struct ArtifactKey {
  ArtifactKind kind;
  std::string fingerprint;
  std::string label;
};

struct ArtifactRecord {
  ArtifactKey key;
  std::string path;  // relative to the store root
  std::string created_at;
  std::uint64_t size = 0;
  std::string content_hash;

  nlohmann::json to_json() const;
};

class ArtifactStore {
 public:
  /// Opens (creating if needed) and reconciles the index with the files on disk.
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Idempotent for identical bytes; kIntegrity if the same (kind, fingerprint)
  /// already holds different content.
  ArtifactRecord put(const ArtifactKey& key, std::string_view bytes);
  /// kNotFound when absent.
  std::string get(ArtifactKind kind, std::string_view fingerprint) const;
  std::optional<ArtifactRecord> find(ArtifactKind kind, std::string_view fingerprint) const;
  std::vector<ArtifactRecord> list(ArtifactKind kind) const;
  /// Records of `kind` carrying `label`, oldest first.
  std::vector<ArtifactRecord> find_by_label(ArtifactKind kind, std::string_view label) const;
  void remove(ArtifactKind kind, std::string_view fingerprint);

  void write_document(std::string_view name, const nlohmann::json& document);
  std::optional<nlohmann::json> read_document(std::string_view name) const;

  /// Number of index records dropped or adopted while opening.
  int repaired_on_open() const { return repaired_; }

 private:
  void load_and_reconcile();
  void persist_index() const;
  std::filesystem::path artifact_path(ArtifactKind kind, std::string_view fingerprint) const;

  std::filesystem::path root_;
  mutable std::shared_mutex mutex_;
  std::vector<ArtifactRecord> records_;
  int repaired_ = 0;
};

}  // namespace latentsteer
