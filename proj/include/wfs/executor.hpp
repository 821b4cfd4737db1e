#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wfs/json_util.hpp"
#include "wfs/sample.hpp"
#include "wfs/workflow.hpp"

namespace wfs {

enum class NetworkPolicy {
  /// The script receives the engine's metered LLM endpoint on stdin.
  LlmEndpointsOnly,
  /// No endpoint is handed to the script.
  None,
};

std::string to_string(NetworkPolicy p);
NetworkPolicy parse_network_policy(const std::string& s);

struct ExecutionLimits {
  double wall_timeout_s = 300.0;
  std::size_t max_stdout_bytes = 8u << 20;
  std::vector<std::string> allowed_env = {"PATH", "LANG", "LC_ALL", "TZ"};
  NetworkPolicy network = NetworkPolicy::LlmEndpointsOnly;

  void validate() const;
};

/// interpreter_hint -> argv template. "{script}" is replaced by the path of
/// the script file.
using InterpreterRegistry = std::map<std::string, std::vector<std::string>>;
InterpreterRegistry default_interpreters();

/// What a workflow script is told on standard input.
struct RunParameters {
  std::size_t n = 5;
  std::string task;
  /// LLM endpoint descriptor ({base_url, model, api_key}); ignored under
  /// NetworkPolicy::None.
  std::optional<json> llm;
  std::uint64_t seed = 0;
  /// Ordinal of this batch for the same workflow (export runs many).
  std::uint64_t batch = 0;
};

struct ExecutionOutcome {
  std::vector<Sample> samples;
  std::string stderr_text;
  int exit_code = 0;
};

/// Runs workflow scripts as child processes:
///  - one JSON document on stdin (see stdin_document),
///  - one JSON object per line on stdout; either {"index": i, "payload": {...}}
///    or a bare object that is itself the payload (index = line ordinal),
///  - stderr captured verbatim.
/// Reentrant; each call owns its child process and scratch directory.
class Executor {
 public:
  Executor(InterpreterRegistry interpreters, ExecutionLimits limits);

  /// Exactly `n` validated samples, or ExecutionError / ParseError /
  /// BatchError.
  ExecutionOutcome execute(const Workflow& workflow, const RunParameters& params,
                           NodeId source_node) const;

  json stdin_document(const Workflow& workflow, const RunParameters& params) const;

  const ExecutionLimits& limits() const { return limits_; }
  const InterpreterRegistry& interpreters() const { return interpreters_; }

 private:
  InterpreterRegistry interpreters_;
  ExecutionLimits limits_;
};

/// Parse JSON-lines stdout into samples (no count check).
std::vector<Sample> parse_sample_lines(const std::string& stdout_text, NodeId source_node);

}  // namespace wfs
