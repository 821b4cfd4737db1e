#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "wfs/json_util.hpp"

namespace wfs {

enum class LlmRole { Optimizer, Evaluator };

std::string to_string(LlmRole r);
LlmRole parse_role(const std::string& s);

struct ChatMessage {
  std::string speaker;  // "system", "user" or "assistant"
  std::string text;
};

/// One request to a model role.
struct ChatExchange {
  LlmRole role = LlmRole::Evaluator;
  std::vector<ChatMessage> messages;
  std::optional<json> response_schema;
  /// Falls back to the role's configured temperature.
  std::optional<double> temperature;
  std::uint64_t nonce = 0;
  /// Prompt-pack template name, or "proxy" for workflow-originated traffic.
  std::string purpose;
};

/// Text the matchers and digests see: "[speaker]\ntext\n" per message.
std::string render_prompt(const ChatExchange& ex);
std::string prompt_digest(const ChatExchange& ex);

struct ProviderReply {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ProviderRequest {
  const ChatExchange& exchange;
  std::string model;
  double temperature = 0.0;
  long max_tokens = 0;
};

/// A model backend. Implementations throw TransportError for failures worth
/// retrying and GatewayError (or a subclass) for everything else.
class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual ProviderReply send(const ProviderRequest& request) = 0;
  virtual std::string name() const = 0;
};

struct GatewayBudget {
  long max_calls_per_run = 100000;
  long max_tokens_per_call = 4096;
  int retry_limit = 3;
  int backoff_ms = 500;
  int max_in_flight = 4;

  void validate() const;
};

struct RoleBinding {
  std::shared_ptr<LlmProvider> provider;
  std::string model;
  double temperature = 0.7;
};

/// Extra semantic check applied after schema validation. Returns a message
/// describing the problem, or nullopt when the value is acceptable.
using StructuredCheck = std::function<std::optional<std::string>(const json&)>;

/// Receives one record per provider attempt, including retries and re-asks.
using TranscriptSink = std::function<void(const json&)>;

/// Routes exchanges to the provider bound to their role, with retries,
/// budget accounting, structured-output validation and a full transcript.
/// Safe to call from several threads.
class LlmGateway {
 public:
  LlmGateway(GatewayBudget budget, RoleBinding optimizer, RoleBinding evaluator);

  /// Plain completion. Retries TransportError up to retry_limit times with
  /// exponential backoff, then throws GatewayError. BudgetError when the
  /// per-run call budget is spent.
  std::string complete(ChatExchange exchange);

  /// Completion parsed as JSON and validated against `schema` (+ `check`).
  /// On failure, asks once more with the validation message attached; a
  /// second failure throws FormatError carrying both raw payloads.
  json complete_structured(ChatExchange exchange, const json& schema,
                           const StructuredCheck& check = {});

  void set_sink(TranscriptSink sink);
  long calls_made() const { return calls_.load(); }
  std::vector<json> transcript() const;
  const GatewayBudget& budget() const { return budget_; }

 private:
  ProviderReply attempt(const ChatExchange& exchange, int attempt_no, bool reask);
  void record(json entry);

  GatewayBudget budget_;
  RoleBinding optimizer_;
  RoleBinding evaluator_;
  std::atomic<long> calls_{0};
  std::atomic<long> in_flight_{0};
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  mutable std::mutex log_mutex_;
  std::vector<json> transcript_;
  TranscriptSink sink_;
};

/// Deterministic provider driven by a script:
///   {"matchers": [{"contains": "...", "role": "evaluator", "responses": [...]},
///                 {"digest": "<16 hex>", "responses": [...]}]}
/// The first matcher whose conditions hold serves the call. Its responses
/// are consumed in order; once exhausted the last one repeats unless
/// "repeat_last": false, in which case the matcher stops matching.
/// A response that is a string is returned verbatim, {"$error": "..."}
/// simulates a transport failure, and any other JSON value is returned as
/// its serialized text.
class ScriptedProvider : public LlmProvider {
 public:
  explicit ScriptedProvider(const json& script);
  static std::shared_ptr<ScriptedProvider> from_file(const std::string& path);

  ProviderReply send(const ProviderRequest& request) override;
  std::string name() const override { return "scripted"; }

  /// Number of responses served by matcher i so far.
  std::size_t served(std::size_t matcher) const;

 private:
  struct Matcher {
    std::optional<std::string> contains;
    std::optional<std::string> digest;
    std::optional<LlmRole> role;
    std::vector<json> responses;
    bool repeat_last = true;
    std::size_t next = 0;
  };
  std::vector<Matcher> matchers_;
  mutable std::mutex mutex_;
};

/// OpenAI-compatible chat-completions client.
struct OpenAiConfig {
  std::string endpoint;  // e.g. "https://api.openai.com/v1"
  std::string api_key_env = "WFS_API_KEY";
  int timeout_s = 120;
};

class OpenAiProvider : public LlmProvider {
 public:
  explicit OpenAiProvider(OpenAiConfig config);
  ProviderReply send(const ProviderRequest& request) override;
  std::string name() const override { return "openai-compatible"; }

 private:
  OpenAiConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace wfs
