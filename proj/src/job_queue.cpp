#include "latentsteer/job_queue.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>

#include "latentsteer/errors.hpp"

namespace latentsteer {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "job-%06llu", static_cast<unsigned long long>(n));
  return buf;
}

}  // namespace

std::string_view to_string(JobKind kind) {
  switch (kind) {
    case JobKind::kPrecompute: return "precompute";
    case JobKind::kTrainMapper: return "train-mapper";
    case JobKind::kOptimize: return "optimize";
  }
  return "?";
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "?";
}

JobKind job_kind_from_string(std::string_view name) {
  for (JobKind k : {JobKind::kPrecompute, JobKind::kTrainMapper, JobKind::kOptimize}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::kFormat, "unknown job kind '" + std::string(name) + "'");
}

JobState job_state_from_string(std::string_view name) {
  for (JobState s : {JobState::kQueued, JobState::kRunning, JobState::kDone, JobState::kFailed}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::kFormat, "unknown job state '" + std::string(name) + "'");
}

nlohmann::json JobRecord::to_json() const {
  nlohmann::json j = {{"id", id},
                      {"kind", to_string(kind)},
                      {"state", to_string(state)},
                      {"progress", progress},
                      {"result_key", result_key},
                      {"result", result},
                      {"created_at", created_at},
                      {"updated_at", updated_at}};
  if (!coalesce_key.empty()) j["coalesce_key"] = coalesce_key;
  if (state == JobState::kFailed) j["error"] = {{"code", error_code}, {"message", error_message}};
  return j;
}

JobRecord JobRecord::from_json(const nlohmann::json& j) {
  JobRecord r;
  r.id = j.at("id").get<std::string>();
  r.kind = job_kind_from_string(j.at("kind").get<std::string>());
  r.state = job_state_from_string(j.at("state").get<std::string>());
  r.progress = j.value("progress", 0.0);
  r.coalesce_key = j.value("coalesce_key", std::string());
  r.result_key = j.value("result_key", std::string());
  r.result = j.value("result", nlohmann::json::object());
  r.created_at = j.value("created_at", std::string());
  r.updated_at = j.value("updated_at", std::string());
  if (j.contains("error")) {
    r.error_code = j["error"].value("code", std::string());
    r.error_message = j["error"].value("message", std::string());
  }
  return r;
}

struct JobQueue::Entry {
  JobRecord record;
  JobWork work;
  std::atomic<bool> cancel_requested{false};
};

class JobQueue::Context : public JobContext {
 public:
  Context(JobQueue& queue, Entry& entry) : queue_(queue), entry_(entry) {}

  bool report(double fraction) override {
    {
      std::lock_guard lock(queue_.mutex_);
      entry_.record.progress = std::max(entry_.record.progress, std::clamp(fraction, 0.0, 1.0));
    }
    queue_.changed_.notify_all();
    return !cancelled();
  }
  bool cancelled() const override { return entry_.cancel_requested.load(); }

 private:
  JobQueue& queue_;
  Entry& entry_;
};

JobQueue::JobQueue(ArtifactStore* store, int workers) : store_(store) {
  if (workers < 1) throw Error(ErrorCode::kInvalidArgument, "job queue needs at least one worker");
  if (store_) {
    if (const auto journal = store_->read_document(kJournalName)) {
      try {
        for (const auto& j : journal->at("jobs")) {
          auto entry = std::make_shared<Entry>();
          entry->record = JobRecord::from_json(j);
          if (!entry->record.finished()) {
            entry->record.state = JobState::kFailed;
            entry->record.error_code = "interrupted";
            entry->record.error_message = "server restarted before the job finished";
            entry->record.updated_at = utc_now();
          }
          unsigned long long n = 0;
          if (std::sscanf(entry->record.id.c_str(), "job-%llu", &n) == 1) {
            next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
          }
          order_.push_back(entry->record.id);
          jobs_.emplace(entry->record.id, std::move(entry));
        }
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kFormat, std::string("job journal is corrupt: ") + e.what());
      }
      std::lock_guard lock(mutex_);
      journal_locked();
    }
  }
  for (int i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobQueue::~JobQueue() { shutdown(); }

void JobQueue::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
    for (auto& [id, entry] : jobs_) {
      if (!entry->record.finished()) entry->cancel_requested = true;
    }
  }
  work_ready_.notify_all();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  std::lock_guard lock(mutex_);
  for (auto& entry : pending_) {
    entry->record.state = JobState::kFailed;
    entry->record.error_code = "interrupted";
    entry->record.error_message = "server stopped before the job started";
    entry->record.updated_at = utc_now();
  }
  pending_.clear();
  journal_locked();
  changed_.notify_all();
}

void JobQueue::journal_locked() {
  if (!store_) return;
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& id : order_) jobs.push_back(jobs_.at(id)->record.to_json());
  try {
    store_->write_document(kJournalName, {{"version", 1}, {"jobs", jobs}});
  } catch (const Error&) {
    // The journal is best effort; in-memory records stay authoritative.
  }
}

void JobQueue::transition_locked(Entry& entry, JobState next) {
  if (static_cast<int>(next) < static_cast<int>(entry.record.state) || entry.record.finished()) {
    throw Error(ErrorCode::kInvalidArgument, "job state can only move forward");
  }
  entry.record.state = next;
  entry.record.updated_at = utc_now();
  if (next == JobState::kDone) entry.record.progress = 1.0;
  journal_locked();
}

std::string JobQueue::submit(JobKind kind, std::string coalesce_key, JobWork work) {
  std::unique_lock lock(mutex_);
  if (stopping_) throw Error(ErrorCode::kCancelled, "job queue is shutting down");
  if (!coalesce_key.empty()) {
    for (const auto& [id, entry] : jobs_) {
      if (entry->record.kind == kind && entry->record.coalesce_key == coalesce_key && !entry->record.finished()) {
        return id;
      }
    }
  }
  auto entry = std::make_shared<Entry>();
  entry->record.id = format_id(next_id_++);
  entry->record.kind = kind;
  entry->record.coalesce_key = std::move(coalesce_key);
  entry->record.created_at = entry->record.updated_at = utc_now();
  entry->work = std::move(work);
  const std::string id = entry->record.id;
  order_.push_back(id);
  jobs_.emplace(id, entry);
  pending_.push_back(std::move(entry));
  journal_locked();
  lock.unlock();
  work_ready_.notify_one();
  changed_.notify_all();
  return id;
}

std::optional<JobRecord> JobQueue::get(std::string_view id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second->record;
}

std::vector<JobRecord> JobQueue::list() const {
  std::lock_guard lock(mutex_);
  std::vector<JobRecord> out;
  for (const auto& id : order_) out.push_back(jobs_.at(id)->record);
  return out;
}

bool JobQueue::cancel(std::string_view id) {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end() || it->second->record.finished()) return false;
  Entry& entry = *it->second;
  entry.cancel_requested = true;
  if (entry.record.state == JobState::kQueued) {
    std::erase_if(pending_, [&](const std::shared_ptr<Entry>& e) { return e.get() == &entry; });
    entry.record.error_code = std::string(to_string(ErrorCode::kCancelled));
    entry.record.error_message = "cancelled before start";
    transition_locked(entry, JobState::kFailed);
    changed_.notify_all();
  }
  return true;
}

std::optional<JobRecord> JobQueue::wait(std::string_view id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  const std::shared_ptr<Entry> entry = it->second;
  changed_.wait_for(lock, timeout, [&] { return entry->record.finished(); });
  return entry->record;
}

void JobQueue::worker_loop() {
  for (;;) {
    std::shared_ptr<Entry> entry;
    {
      std::unique_lock lock(mutex_);
      work_ready_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
      if (stopping_) return;
      entry = pending_.front();
      pending_.pop_front();
      transition_locked(*entry, JobState::kRunning);
    }
    changed_.notify_all();
    run(entry);
  }
}

void JobQueue::run(const std::shared_ptr<Entry>& entry) {
  Context context(*this, *entry);
  JobOutcome outcome;
  std::string code;
  std::string message;
  try {
    outcome = entry->work(context);
    if (context.cancelled()) {
      code = std::string(to_string(ErrorCode::kCancelled));
      message = "cancelled";
    }
  } catch (const Error& e) {
    code = std::string(to_string(e.code()));
    message = e.what();
  } catch (const std::exception& e) {
    code = "internal";
    message = e.what();
  }
  {
    std::lock_guard lock(mutex_);
    if (code.empty()) {
      entry->record.result_key = outcome.result_key;
      entry->record.result = std::move(outcome.result);
      transition_locked(*entry, JobState::kDone);
    } else {
      entry->record.error_code = code;
      entry->record.error_message = message;
      transition_locked(*entry, JobState::kFailed);
    }
    entry->work = nullptr;
  }
  changed_.notify_all();
}

}  // namespace latentsteer
