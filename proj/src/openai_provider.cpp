#include <cstdlib>

#include "httplib.h"
#include "wfs/errors.hpp"
#include "wfs/llm_gateway.hpp"

namespace wfs {

OpenAiProvider::OpenAiProvider(OpenAiConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw ValidationError("endpoint must include a scheme: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

ProviderReply OpenAiProvider::send(const ProviderRequest& request) {
  json body = {{"model", request.model},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens},
               {"seed", request.exchange.nonce},
               {"messages", json::array()}};
  for (const auto& m : request.exchange.messages)
    body["messages"].push_back({{"role", m.speaker}, {"content", m.text}});
  if (request.exchange.response_schema) body["response_format"] = {{"type", "json_object"}};

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("provider returned HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw GatewayError("provider returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 500));

  const auto parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty())
    throw TransportError("malformed chat-completions response");
  ProviderReply reply;
  const auto& message = parsed["choices"][0]["message"];
  reply.text = message.value("content", std::string());
  if (parsed.contains("usage")) {
    reply.prompt_tokens = parsed["usage"].value("prompt_tokens", 0L);
    reply.completion_tokens = parsed["usage"].value("completion_tokens", 0L);
  }
  return reply;
}

}  // namespace wfs
