#pragma once

// In-process job queue for long-running work (channel statistics, mapper
// training, latent optimization). Records are journaled through the artifact
// store so a restarted server reports interrupted jobs as failed.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "latentsteer/artifact_store.hpp"

namespace latentsteer {

enum class JobKind { kPrecompute, kTrainMapper, kOptimize };
enum class JobState { kQueued, kRunning, kDone, kFailed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobState state);
JobKind job_kind_from_string(std::string_view name);
JobState job_state_from_string(std::string_view name);

struct JobRecord {
  std::string id;
  JobKind kind = JobKind::kPrecompute;
  JobState state = JobState::kQueued;
  double progress = 0.0;
  std::string coalesce_key;
  std::string result_key;   // primary artifact fingerprint once done
  nlohmann::json result;    // kind-specific summary
  std::string error_code;   // set when failed
  std::string error_message;
  std::string created_at;
  std::string updated_at;

  bool finished() const { return state == JobState::kDone || state == JobState::kFailed; }
  nlohmann::json to_json() const;
  static JobRecord from_json(const nlohmann::json& j);
};

/// Handed to running work. report() returns false once cancellation was requested.
class JobContext {
 public:
  virtual ~JobContext() = default;
  virtual bool report(double fraction) = 0;
  virtual bool cancelled() const = 0;
};

struct JobOutcome {
  std::string result_key;
  nlohmann::json result = nlohmann::json::object();
};

using JobWork = std::function<JobOutcome(JobContext&)>;

class JobQueue {
 public:
  /// `store` may be null (no journal). Unfinished jobs found in the journal are
  /// marked failed with code "interrupted".
  explicit JobQueue(ArtifactStore* store, int workers = 1);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  /// Returns the id of a queued or running job with the same non-empty
  /// coalesce key instead of enqueuing a duplicate.
  std::string submit(JobKind kind, std::string coalesce_key, JobWork work);

  std::optional<JobRecord> get(std::string_view id) const;
  std::vector<JobRecord> list() const;
  /// False when the job is unknown or already finished.
  bool cancel(std::string_view id);
  /// Blocks until the job finishes or the timeout elapses.
  std::optional<JobRecord> wait(std::string_view id, std::chrono::milliseconds timeout) const;
  void shutdown();

 private:
  struct Entry;
  class Context;

  void worker_loop();
  void run(const std::shared_ptr<Entry>& entry);
  void journal_locked();
  void transition_locked(Entry& entry, JobState next);

  static constexpr const char* kJournalName = "jobs";

  ArtifactStore* store_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::condition_variable work_ready_;
  std::map<std::string, std::shared_ptr<Entry>, std::less<>> jobs_;
  std::vector<std::string> order_;
  std::deque<std::shared_ptr<Entry>> pending_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace latentsteer
