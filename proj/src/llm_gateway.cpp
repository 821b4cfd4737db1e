#include "wfs/llm_gateway.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <thread>

#include "wfs/errors.hpp"

namespace wfs {

std::string to_string(LlmRole r) { return r == LlmRole::Optimizer ? "optimizer" : "evaluator"; }

LlmRole parse_role(const std::string& s) {
  if (s == "optimizer") return LlmRole::Optimizer;
  if (s == "evaluator") return LlmRole::Evaluator;
  throw ValidationError("unknown LLM role '" + s + "'");
}

std::string render_prompt(const ChatExchange& ex) {
  std::string out;
  for (const auto& m : ex.messages) {
    out += '[';
    out += m.speaker;
    out += "]\n";
    out += m.text;
    out += '\n';
  }
  return out;
}

std::string prompt_digest(const ChatExchange& ex) { return fnv1a_hex(render_prompt(ex)); }

void GatewayBudget::validate() const {
  if (max_calls_per_run <= 0 || max_tokens_per_call <= 0 || retry_limit <= 0 || backoff_ms < 0 ||
      max_in_flight <= 0) {
    throw ValidationError("gateway budget values must be positive");
  }
}

LlmGateway::LlmGateway(GatewayBudget budget, RoleBinding optimizer, RoleBinding evaluator)
    : budget_(budget), optimizer_(std::move(optimizer)), evaluator_(std::move(evaluator)) {
  budget_.validate();
  if (!optimizer_.provider || !evaluator_.provider)
    throw ValidationError("both LLM roles need a provider");
}

void LlmGateway::set_sink(TranscriptSink sink) {
  std::lock_guard lock(log_mutex_);
  sink_ = std::move(sink);
}

std::vector<json> LlmGateway::transcript() const {
  std::lock_guard lock(log_mutex_);
  return transcript_;
}

void LlmGateway::record(json entry) {
  std::lock_guard lock(log_mutex_);
  entry["call_seq"] = transcript_.size() + 1;
  transcript_.push_back(entry);
  if (sink_) sink_(entry);
}

ProviderReply LlmGateway::attempt(const ChatExchange& ex, int attempt_no, bool reask) {
  const RoleBinding& binding = ex.role == LlmRole::Optimizer ? optimizer_ : evaluator_;

  if (calls_.fetch_add(1) >= budget_.max_calls_per_run) {
    calls_.fetch_sub(1);
    throw BudgetError("LLM call budget of " + std::to_string(budget_.max_calls_per_run) +
                      " calls exhausted");
  }

  {
    std::unique_lock lock(slot_mutex_);
    slot_cv_.wait(lock, [&] { return in_flight_.load() < budget_.max_in_flight; });
    ++in_flight_;
  }
  struct SlotRelease {
    LlmGateway& g;
    ~SlotRelease() {
      {
        std::lock_guard lock(g.slot_mutex_);
        --g.in_flight_;
      }
      g.slot_cv_.notify_one();
    }
  } release{*this};

  json entry = {{"role", to_string(ex.role)},
                {"purpose", ex.purpose},
                {"model", binding.model},
                {"provider", binding.provider->name()},
                {"attempt", attempt_no},
                {"reask", reask},
                {"nonce", ex.nonce},
                {"digest", prompt_digest(ex)},
                {"messages", json::array()}};
  for (const auto& m : ex.messages) entry["messages"].push_back({{"speaker", m.speaker}, {"text", m.text}});

  const ProviderRequest request{ex, binding.model, ex.temperature.value_or(binding.temperature),
                                budget_.max_tokens_per_call};
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 start)
        .count();
  };
  try {
    ProviderReply reply = binding.provider->send(request);
    entry["latency_ms"] = elapsed();
    entry["response"] = reply.text;
    entry["tokens"] = {{"prompt", reply.prompt_tokens}, {"completion", reply.completion_tokens}};
    record(std::move(entry));
    return reply;
  } catch (const Error& e) {
    entry["latency_ms"] = elapsed();
    entry["error"] = e.what();
    record(std::move(entry));
    throw;
  }
}

std::string LlmGateway::complete(ChatExchange exchange) {
  if (exchange.messages.empty()) throw ValidationError("chat exchange needs at least one message");
  if (exchange.temperature && *exchange.temperature < 0)
    throw ValidationError("temperature must be >= 0");

  const bool reask = exchange.purpose.ends_with("#reask");
  std::string last_error;
  for (int attempt_no = 0; attempt_no <= budget_.retry_limit; ++attempt_no) {
    if (attempt_no > 0 && budget_.backoff_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(budget_.backoff_ms << (attempt_no - 1)));
    }
    try {
      return attempt(exchange, attempt_no, reask).text;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw GatewayError("gateway gave up after " + std::to_string(budget_.retry_limit) +
                     " retries (" + to_string(exchange.role) + "/" + exchange.purpose +
                     "): " + last_error);
}

json LlmGateway::complete_structured(ChatExchange exchange, const json& schema,
                                     const StructuredCheck& check) {
  exchange.response_schema = schema;
  auto problem_with = [&](const std::string& raw) -> std::pair<std::optional<json>, std::string> {
    auto parsed = extract_json(raw);
    if (!parsed) return {std::nullopt, "response is not valid JSON"};
    if (auto err = validate_schema(*parsed, schema)) return {std::nullopt, *err};
    if (check) {
      if (auto err = check(*parsed)) return {std::nullopt, *err};
    }
    return {std::move(parsed), {}};
  };

  const std::string first = complete(exchange);
  auto [value, problem] = problem_with(first);
  if (value) return *value;

  ChatExchange again = exchange;
  again.purpose += "#reask";
  again.messages.push_back({"assistant", first});
  again.messages.push_back(
      {"user", "Your previous reply was rejected: " + problem +
                   "\nReply again with only a JSON value that satisfies this schema:\n" +
                   schema.dump()});
  const std::string second = complete(again);
  auto [value2, problem2] = problem_with(second);
  if (value2) return *value2;
  throw FormatError("structured response invalid after re-ask (" + exchange.purpose +
                        "): " + problem2,
                    {first, second});
}

// ---- scripted provider -------------------------------------------------------

ScriptedProvider::ScriptedProvider(const json& script) {
  if (!script.is_object() || !script.contains("matchers") || !script["matchers"].is_array())
    throw ValidationError("scripted provider script needs a \"matchers\" array");
  for (const auto& m : script["matchers"]) {
    Matcher matcher;
    if (m.contains("contains")) matcher.contains = m["contains"].get<std::string>();
    if (m.contains("digest")) matcher.digest = m["digest"].get<std::string>();
    if (m.contains("role")) matcher.role = parse_role(m["role"].get<std::string>());
    if (!matcher.contains && !matcher.digest)
      throw ValidationError("scripted matcher needs \"contains\" or \"digest\"");
    matcher.responses = m.at("responses").get<std::vector<json>>();
    if (matcher.responses.empty()) throw ValidationError("scripted matcher has no responses");
    matcher.repeat_last = m.value("repeat_last", true);
    matchers_.push_back(std::move(matcher));
  }
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read provider script " + path);
  auto script = json::parse(in, nullptr, false);
  if (script.is_discarded()) throw ValidationError("provider script " + path + " is not JSON");
  return std::make_shared<ScriptedProvider>(script);
}

ProviderReply ScriptedProvider::send(const ProviderRequest& request) {
  const std::string prompt = render_prompt(request.exchange);
  const std::string digest = fnv1a_hex(prompt);
  json response;
  {
    std::lock_guard lock(mutex_);
    Matcher* hit = nullptr;
    for (auto& m : matchers_) {
      if (m.role && *m.role != request.exchange.role) continue;
      if (m.contains && prompt.find(*m.contains) == std::string::npos) continue;
      if (m.digest && *m.digest != digest) continue;
      if (!m.repeat_last && m.next >= m.responses.size()) continue;
      hit = &m;
      break;
    }
    if (!hit) throw ScriptedMissError(digest);
    const std::size_t i = std::min(hit->next, hit->responses.size() - 1);
    response = hit->responses[i];
    ++hit->next;
  }
  if (response.is_object() && response.contains("$error"))
    throw TransportError("scripted transport failure: " + response["$error"].get<std::string>());

  ProviderReply reply;
  reply.text = response.is_string() ? response.get<std::string>() : response.dump();
  auto words = [](const std::string& s) {
    long n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
      const bool space = std::isspace(c) != 0;
      if (!space && !in_word) ++n;
      in_word = !space;
    }
    return n;
  };
  reply.prompt_tokens = words(prompt);
  reply.completion_tokens = words(reply.text);
  return reply;
}

std::size_t ScriptedProvider::served(std::size_t matcher) const {
  std::lock_guard lock(mutex_);
  return matchers_.at(matcher).next;
}

}  // namespace wfs
