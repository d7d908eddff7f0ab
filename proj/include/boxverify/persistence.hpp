#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxverify/annotator.hpp"
#include "boxverify/dataset.hpp"
#include "boxverify/loop.hpp"

namespace boxverify {

std::string event_to_json(const VerificationEvent& event);  // one line, no trailing newline
VerificationEvent event_from_json(const std::string& line);

/// Checkpoint document of a RunState (event_log excluded). Deterministic output.
std::string state_to_json(const RunState& state);
RunState state_from_json(const std::string& text);

/// Atomically replaces `path` (temp file, fsync, rename).
void write_checkpoint(const std::filesystem::path& path, const RunState& state);
RunState read_checkpoint(const std::filesystem::path& path);

/// Append-only JSON-lines event log.
class EventLog {
 public:
  /// Opens for appending, creating the file if needed. With `durable` each
  /// append is fsynced before it returns.
  explicit EventLog(const std::filesystem::path& path, bool durable = true);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const VerificationEvent& event);
  void sync();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  bool durable_;
};

struct LogContents {
  std::vector<VerificationEvent> events;
  std::uint64_t valid_bytes = 0;              // length of the prefix holding complete, valid lines
  std::optional<std::uint64_t> corrupt_offset;  // byte offset of the first bad or truncated line
  std::string corrupt_reason;
};

/// Reads events up to the first incomplete or unparsable line. A missing file is an empty log.
LogContents read_event_log(const std::filesystem::path& path);

/// Cuts the log back to `valid_bytes` so appends continue after the last good line.
void truncate_event_log(const std::filesystem::path& path, std::uint64_t valid_bytes);

class RunIdMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Advances `state` through the events it has not consumed yet (seq >= events_applied);
/// earlier events only refill the in-memory log. Applying the same events twice is a no-op.
void replay(RunState& state, const Dataset& dataset, std::span<const VerificationEvent> events,
            const LoopOptions& options);

struct Recovery {
  RunState state;
  std::size_t replayed = 0;
  std::optional<std::uint64_t> corrupt_offset;
  std::string corrupt_reason;
  std::uint64_t valid_bytes = 0;
};

/// Checkpoint plus every logged event after its marker. Throws RunIdMismatch when
/// the log belongs to another run; stops at a corrupt line and reports its offset.
Recovery recover(const std::filesystem::path& checkpoint, const std::filesystem::path& event_log,
                 const Dataset& dataset, const LoopOptions& options);

}  // namespace boxverify
