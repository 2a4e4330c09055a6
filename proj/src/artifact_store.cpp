#include "latentsteer/artifact_store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

#include "latentsteer/binary_format.hpp"
#include "latentsteer/errors.hpp"
#include "latentsteer/hashing.hpp"

namespace latentsteer {

namespace fs = std::filesystem;

namespace {

constexpr ArtifactKind kAllKinds[] = {ArtifactKind::kStats, ArtifactKind::kMapper,
                                      ArtifactKind::kTrace, ArtifactKind::kImage};

void check_name(std::string_view name, const char* what) {
  const bool ok = !name.empty() && name.size() <= 128 &&
                  std::all_of(name.begin(), name.end(), [](char c) {
                    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                           c == '-' || c == '_' || c == '.';
                  }) &&
                  name.front() != '.';
  if (!ok) throw Error(ErrorCode::kInvalidArgument, std::string("invalid ") + what + " '" + std::string(name) + "'");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string content_hash(std::string_view bytes) { return fingerprint_of(bytes); }

}  // namespace

std::string_view to_string(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::kStats: return "stats";
    case ArtifactKind::kMapper: return "mapper";
    case ArtifactKind::kTrace: return "trace";
    case ArtifactKind::kImage: return "image";
  }
  return "?";
}

ArtifactKind artifact_kind_from_string(std::string_view name) {
  for (ArtifactKind k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown artifact kind '" + std::string(name) + "'");
}

nlohmann::json ArtifactRecord::to_json() const {
  return {{"kind", to_string(key.kind)}, {"fingerprint", key.fingerprint}, {"label", key.label},
          {"path", path},  {"created_at", created_at},      {"size", size},
          {"content_hash", content_hash}};
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create store root " + root_.string() + ": " + ec.message());
  load_and_reconcile();
}

fs::path ArtifactStore::artifact_path(ArtifactKind kind, std::string_view fingerprint) const {
  return root_ / std::string(to_string(kind)) / (std::string(fingerprint) + ".bin");
}

void ArtifactStore::load_and_reconcile() {
  std::vector<ArtifactRecord> loaded;
  const fs::path index = root_ / "index.json";
  if (fs::exists(index)) {
    try {
      const auto doc = nlohmann::json::parse(read_file(index));
      for (const auto& r : doc.at("records")) {
        ArtifactRecord rec;
        rec.key = {artifact_kind_from_string(r.at("kind").get<std::string>()),
                   r.at("fingerprint").get<std::string>(), r.value("label", std::string())};
        rec.path = r.at("path").get<std::string>();
        rec.created_at = r.value("created_at", std::string());
        rec.size = r.value("size", std::uint64_t{0});
        rec.content_hash = r.value("content_hash", std::string());
        loaded.push_back(std::move(rec));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, "store index is corrupt: " + std::string(e.what()));
    }
  }

  // Keep records whose file exists with the recorded size.
  for (ArtifactRecord& rec : loaded) {
    std::error_code ec;
    const auto size = fs::file_size(root_ / rec.path, ec);
    if (ec || size != rec.size) {
      ++repaired_;
      continue;
    }
    records_.push_back(std::move(rec));
  }

  // Drop temporaries and adopt complete files the index never recorded.
  for (ArtifactKind kind : kAllKinds) {
    const fs::path dir = root_ / std::string(to_string(kind));
    if (!fs::exists(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const fs::path& p = entry.path();
      if (p.extension() == ".tmp") {
        fs::remove(p);
        continue;
      }
      if (p.extension() != ".bin") continue;
      const std::string fp = p.stem().string();
      const bool known = std::any_of(records_.begin(), records_.end(), [&](const ArtifactRecord& r) {
        return r.key.kind == kind && r.key.fingerprint == fp;
      });
      if (known) continue;
      const std::string bytes = read_file(p);
      records_.push_back({{kind, fp, ""},
                          fs::relative(p, root_).string(),
                          utc_now(),
                          bytes.size(),
                          content_hash(bytes)});
      ++repaired_;
    }
  }
  if (repaired_ > 0) persist_index();
}

void ArtifactStore::persist_index() const {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : records_) records.push_back(r.to_json());
  write_file_atomic(root_ / "index.json", nlohmann::json{{"version", 1}, {"records", records}}.dump(2));
}

ArtifactRecord ArtifactStore::put(const ArtifactKey& key, std::string_view bytes) {
  check_name(key.fingerprint, "fingerprint");
  std::unique_lock lock(mutex_);
  const std::string hash = content_hash(bytes);
  for (const auto& r : records_) {
    if (r.key.kind == key.kind && r.key.fingerprint == key.fingerprint) {
      if (r.size == bytes.size() && r.content_hash == hash && read_file(root_ / r.path) == bytes) {
        return r;
      }
      throw Error(ErrorCode::kIntegrity, "fingerprint collision: " + std::string(to_string(key.kind)) +
                                             "/" + key.fingerprint + " already holds different content");
    }
  }
  const fs::path path = artifact_path(key.kind, key.fingerprint);
  try {
    write_file_atomic(path, bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::kIo, std::string("storage write failed: ") + e.what());
  }
  ArtifactRecord rec{key, fs::relative(path, root_).string(), utc_now(), bytes.size(), hash};
  records_.push_back(rec);
  persist_index();
  return rec;
}

std::optional<ArtifactRecord> ArtifactStore::find(ArtifactKind kind, std::string_view fingerprint) const {
  std::shared_lock lock(mutex_);
  for (const auto& r : records_) {
    if (r.key.kind == kind && r.key.fingerprint == fingerprint) return r;
  }
  return std::nullopt;
}

std::string ArtifactStore::get(ArtifactKind kind, std::string_view fingerprint) const {
  const auto rec = find(kind, fingerprint);
  if (!rec) {
    throw Error(ErrorCode::kNotFound,
                "artifact not found: " + std::string(to_string(kind)) + "/" + std::string(fingerprint));
  }
  std::shared_lock lock(mutex_);
  return read_file(root_ / rec->path);
}

std::vector<ArtifactRecord> ArtifactStore::list(ArtifactKind kind) const {
  std::shared_lock lock(mutex_);
  std::vector<ArtifactRecord> out;
  for (const auto& r : records_) {
    if (r.key.kind == kind) out.push_back(r);
  }
  return out;
}

std::vector<ArtifactRecord> ArtifactStore::find_by_label(ArtifactKind kind, std::string_view label) const {
  std::vector<ArtifactRecord> out = list(kind);
  std::erase_if(out, [&](const ArtifactRecord& r) { return r.key.label != label; });
  return out;
}

void ArtifactStore::remove(ArtifactKind kind, std::string_view fingerprint) {
  std::unique_lock lock(mutex_);
  const auto it = std::find_if(records_.begin(), records_.end(), [&](const ArtifactRecord& r) {
    return r.key.kind == kind && r.key.fingerprint == fingerprint;
  });
  if (it == records_.end()) {
    throw Error(ErrorCode::kNotFound,
                "artifact not found: " + std::string(to_string(kind)) + "/" + std::string(fingerprint));
  }
  const fs::path path = root_ / it->path;
  records_.erase(it);
  persist_index();
  fs::remove(path);
}

void ArtifactStore::write_document(std::string_view name, const nlohmann::json& document) {
  check_name(name, "document name");
  if (name == "index") throw Error(ErrorCode::kInvalidArgument, "document name 'index' is reserved");
  std::unique_lock lock(mutex_);
  write_file_atomic(root_ / (std::string(name) + ".json"), document.dump(2));
}

std::optional<nlohmann::json> ArtifactStore::read_document(std::string_view name) const {
  check_name(name, "document name");
  std::shared_lock lock(mutex_);
  const fs::path path = root_ / (std::string(name) + ".json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "document " + path.string() + ": " + e.what());
  }
}

}  // namespace latentsteer
