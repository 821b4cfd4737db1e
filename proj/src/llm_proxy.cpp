#include "wfs/llm_proxy.hpp"

#include "httplib.h"
#include "wfs/errors.hpp"

namespace wfs {

LlmProxy::LlmProxy(LlmGateway& gateway, LlmRole role)
    : gateway_(gateway), role_(role), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("messages") || !body["messages"].is_array() ||
        body["messages"].empty()) {
      res.status = 400;
      res.set_content(json{{"error", {{"message", "expected a messages array"}}}}.dump(),
                      "application/json");
      return;
    }
    ChatExchange ex;
    ex.role = role_;
    ex.purpose = "proxy";
    ex.nonce = ++nonce_;
    for (const auto& m : body["messages"]) {
      ex.messages.push_back({m.value("role", std::string("user")), m.value("content", std::string())});
    }
    if (body.contains("temperature") && body["temperature"].is_number())
      ex.temperature = body["temperature"].get<double>();
    try {
      const std::string text = gateway_.complete(ex);
      json reply = {{"id", "proxy-" + std::to_string(ex.nonce)},
                    {"object", "chat.completion"},
                    {"model", to_string(role_)},
                    {"choices",
                     {{{"index", 0},
                       {"message", {{"role", "assistant"}, {"content", text}}},
                       {"finish_reason", "stop"}}}}};
      res.set_content(reply.dump(), "application/json");
    } catch (const Error& e) {
      res.status = 502;
      res.set_content(json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
    }
  });
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw IoError("LLM proxy could not bind a local port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

LlmProxy::~LlmProxy() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

json LlmProxy::descriptor() const {
  return {{"base_url", "http://127.0.0.1:" + std::to_string(port_) + "/v1"},
          {"model", to_string(role_)},
          {"api_key", "proxy"}};
}

}  // namespace wfs
