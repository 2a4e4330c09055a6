#pragma once

// HTTP/1.1 JSON service over one backend and one artifact store.
//
//   POST /images                       multipart (field "image") or raw image/png
//   GET  /images/{id}                  session info and the unedited render
//   POST /manipulate/global            synchronous style-space edit
//   POST /manipulate/optimize          job
//   POST /mappers                      train job
//   GET  /mappers
//   POST /mappers/{name}/apply
//   POST /directions/precompute        job, coalesced per statistics key
//   GET  /jobs, /jobs/{id}, /jobs/{id}/result;  POST /jobs/{id}/cancel
//   GET  /artifacts?kind=
//   GET  /health
//
// Errors are {"error": {"code": ..., "message": ...}}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include "json.hpp"
#include "latentsteer/artifact_store.hpp"
#include "latentsteer/global_directions.hpp"
#include "latentsteer/job_queue.hpp"
#include "latentsteer/model_gateway.hpp"

namespace httplib {
class Server;
}

namespace latentsteer {

inline constexpr std::size_t kMaxImageBytes = 4u << 20;
inline constexpr const char* kConfigEnvVar = "STYLE_TOOLKIT_CONFIG";

struct ServiceConfig {
  nlohmann::json backend = {{"kind", "toy"}};
  std::filesystem::path base_dir;  // for relative paths inside `backend`
  std::filesystem::path store_root = "store";
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 1;
  std::size_t max_image_bytes = kMaxImageBytes;

  /// {"backend": {...} | "path", "store_root", "host", "port", "workers", "max_image_bytes"}.
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ServiceConfig load(const std::filesystem::path& path);
  /// The file named by STYLE_TOOLKIT_CONFIG when set, else `path`, else defaults.
  static ServiceConfig resolve(const std::optional<std::filesystem::path>& path);
};

struct SessionImage {
  std::string id;
  std::string png;
  WPlusCode inverted;
  StyleCode style;
};

class Service {
 public:
  Service(BackendBundle backend, std::shared_ptr<ArtifactStore> store, int workers = 1,
          std::size_t max_image_bytes = kMaxImageBytes);
  explicit Service(const ServiceConfig& config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port
  /// (pass 0 for an ephemeral one).
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  const BackendBundle& backend() const { return backend_; }
  ArtifactStore& store() { return *store_; }
  JobQueue& jobs() { return *jobs_; }

 private:
  void install_routes();
  std::shared_ptr<const SessionImage> session(const std::string& id) const;
  std::shared_ptr<const ChannelStats> latest_stats() const;

  nlohmann::json health() const;
  nlohmann::json ingest_image(const std::string& png);
  nlohmann::json manipulate_global(const nlohmann::json& body) const;
  nlohmann::json submit_optimize(const nlohmann::json& body);
  nlohmann::json submit_precompute(const nlohmann::json& body);
  nlohmann::json submit_train_mapper(const nlohmann::json& body);
  nlohmann::json list_mappers() const;
  nlohmann::json apply_mapper_to(const std::string& name, const nlohmann::json& body) const;
  nlohmann::json job_result(const std::string& id) const;
  nlohmann::json list_artifacts(const std::string& kind) const;

  BackendBundle backend_;
  std::string backend_fingerprint_;
  std::shared_ptr<ArtifactStore> store_;
  std::size_t max_image_bytes_;
  std::unique_ptr<JobQueue> jobs_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<const SessionImage>> sessions_;

  mutable std::mutex stats_mutex_;
  mutable std::map<std::string, std::shared_ptr<const ChannelStats>> stats_cache_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

}  // namespace latentsteer
