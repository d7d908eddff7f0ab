#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "boxverify/dataset.hpp"
#include "boxverify/ground_truth.hpp"
#include "boxverify/loop.hpp"
#include "boxverify/mil_init.hpp"

namespace httplib {
class Server;
}

namespace boxverify {

/// Request failure carrying the HTTP status it maps to (400, 404, 409).
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  std::filesystem::path data_dir;     // runs/<run_id>/{checkpoint.json,events.jsonl}
  std::filesystem::path dataset_dir;  // base for relative image_uri values
  MilConfig mil;
  TrainConfig train;
  // A task handed to one annotator is withheld from others for this long.
  std::chrono::seconds lease{120};
};

struct RunRequest {
  std::string class_name;
  Strategy strategy = Strategy::RemoveExtNeg;
  std::optional<QuestionKind> question_kind;
  int max_iterations = 10;
  std::uint64_t seed = 0;
  std::string run_id;  // generated when empty
};

enum class SessionStatus { Running, Suspended, Finished };

struct SessionRecord {
  std::string session_id;
  std::string annotator_id;
  std::string class_name;
  std::string run_id;
  Strategy strategy = Strategy::RemoveExtNeg;
  double created_at = 0.0;  // Unix seconds
  SessionStatus status = SessionStatus::Running;
};

/// Live human-verification runs over one dataset. Every mutation of a run holds
/// that run's mutex; answers are appended (fsync) to the run's event log before
/// they are applied and acknowledged. Nothing derived from ground truth leaves
/// the service except the optional CorLoc figure in progress reports.
class Service {
 public:
  /// Recovers every run found under config.data_dir (checkpoint + log replay;
  /// a corrupt log tail is truncated). `truth` may be null.
  Service(const Dataset& dataset, const GroundTruth* truth, ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// MIL initialization, initial checkpoint, empty log. Returns the run id.
  std::string create_run(const RunRequest& request);

  nlohmann::json list_runs() const;
  nlohmann::json list_sessions() const;
  /// Next task for the annotator: {"status":"task", question_id, image_id, image_uri, box, class, kind,
  /// progress}, or {"status":"waiting"|"finished", progress}.
  nlohmann::json next(const std::string& run_id, const std::string& annotator_id);
  /// Body {question_id, value, elapsed_ms, annotator?}. 409 for stale, duplicate or unknown ids.
  nlohmann::json answer(const std::string& run_id, const nlohmann::json& body);
  /// Marks the annotator's session on the run suspended and returns its leased task to the queue.
  nlohmann::json suspend(const std::string& run_id, const std::string& annotator_id);
  nlohmann::json progress(const std::string& run_id) const;
  /// Path of the image file for `image_id`; 404 when unknown or without image_uri.
  std::filesystem::path image_path(const std::string& image_id) const;

  /// Copy of a run's state (tests and CLI).
  RunState snapshot(const std::string& run_id) const;
  std::vector<std::string> recovery_notes() const;

 private:
  struct Run;
  Run& run(const std::string& run_id) const;
  nlohmann::json progress_locked(const Run& r) const;
  void write_checkpoint_locked(Run& r);
  void close_sessions_locked(const Run& r);

  const Dataset& dataset_;
  const GroundTruth* truth_;
  ServiceConfig config_;
  std::mutex create_mutex_;  // serializes run creation (MIL runs outside the other locks)
  // Lock order: a run's mutex, then sessions_mutex_. runs_mutex_ is never held
  // while waiting for another lock.
  mutable std::mutex runs_mutex_;
  std::map<std::string, std::unique_ptr<Run>> runs_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, SessionRecord> sessions_;
  std::vector<std::string> notes_;
};

/// Registers the /api routes on `server`.
void mount_routes(httplib::Server& server, Service& service);

}  // namespace boxverify
