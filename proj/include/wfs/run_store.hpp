#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "wfs/executor.hpp"
#include "wfs/json_util.hpp"
#include "wfs/search_tree.hpp"

namespace wfs {

enum class EventKind {
  Init,
  HitlFeedback,
  Selected,
  Refined,
  Executed,
  Metrics,
  Scored,
  Backpropagated,
  Converged,
  Aborted,
  LlmCall,
};

std::string to_string(EventKind k);
EventKind parse_event_kind(const std::string& s);

struct RunEvent {
  std::uint64_t seq = 0;
  Timestamp timestamp = 0;
  EventKind kind = EventKind::Init;
  json payload;
};

void to_json(json& j, const RunEvent& e);
void from_json(const json& j, RunEvent& e);

/// Throws ValidationError when `payload` lacks the fields its kind requires.
void validate_event_payload(EventKind kind, const json& payload);

/// One directory per run:
///   events.jsonl   append-only event log, seq 1, 2, 3, ...
///   tree.json      latest search tree
///   state.json     loop state needed to resume (trace, rng, caches)
///   session.json   HITL session, when the run started with one
///   metrics/       per-iteration metric pipeline snapshots
///   export/        dataset exports
///
/// Single writer; readers go through read_events() / the saved files.
class RunStore {
 public:
  enum class Mode { Create, Open };

  /// Create: `dir` must not already hold an event log. Open: the log is
  /// scanned, seq continuity checked, and appends continue after the last.
  RunStore(std::filesystem::path dir, Mode mode);
  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  std::string run_id() const { return dir_.filename().string(); }

  /// Validates, assigns the next seq, writes one line and flushes.
  std::uint64_t append_event(EventKind kind, json payload);
  std::uint64_t last_seq() const;

  /// Events with seq > after_seq. Blocks up to `wait_ms` for new ones when
  /// there are none yet.
  std::vector<RunEvent> events_after(std::uint64_t after_seq, int wait_ms = 0) const;

  void save_tree(const SearchTree& tree) const;
  SearchTree load_tree() const;
  bool has_tree() const;

  void save_json(const std::string& name, const json& value) const;
  json load_json(const std::string& name) const;
  bool has_json(const std::string& name) const;

  void save_metrics_snapshot(int iteration, const json& snapshot) const;

 private:
  std::filesystem::path dir_;
  std::ofstream log_;
  std::uint64_t seq_ = 0;
  mutable std::mutex mutex_;
  mutable std::condition_variable appended_;
};

/// Read and verify an event log (strictly consecutive seq from 1). Throws
/// LoadError with the byte offset of the first bad line. With
/// `allow_partial_tail`, an unterminated last line (a write in progress) is
/// ignored instead.
std::vector<RunEvent> read_event_log(const std::filesystem::path& events_file,
                                     bool allow_partial_tail = false);

/// Rebuild the search tree purely from the event log.
SearchTree replay_tree(const std::vector<RunEvent>& events);

/// Parse a tree file; LoadError carries the byte offset on corruption.
SearchTree load_tree_file(const std::filesystem::path& file);

/// Atomic write (temp file + rename).
void write_file_atomic(const std::filesystem::path& file, const std::string& content);

struct DatasetExport {
  std::filesystem::path records_file;
  json manifest;
};

/// Runs the node's workflow in batches of `base.n` until `count` validated
/// samples are collected and writes records.jsonl + manifest.json under
/// export/node-<id>/. Each record is the payload plus `_meta` {node,
/// iteration}. Three consecutive failed batches propagate the last error.
DatasetExport export_dataset(const RunStore& store, const SearchTree& tree, NodeId node,
                             std::size_t count, const Executor& executor, RunParameters base);

}  // namespace wfs
