#pragma once

#include <atomic>
#include <memory>
#include <thread>

#include "wfs/json_util.hpp"
#include "wfs/llm_gateway.hpp"

namespace httplib {
class Server;
}

namespace wfs {

/// Local OpenAI-compatible endpoint handed to workflow scripts, so their
/// generation calls go through the gateway (metered, logged, and routed to
/// the evaluator role). Listens on 127.0.0.1 at an ephemeral port.
class LlmProxy {
 public:
  explicit LlmProxy(LlmGateway& gateway, LlmRole role = LlmRole::Evaluator);
  ~LlmProxy();
  LlmProxy(const LlmProxy&) = delete;
  LlmProxy& operator=(const LlmProxy&) = delete;

  int port() const { return port_; }
  /// {base_url, model, api_key} as delivered on the script's stdin.
  json descriptor() const;

 private:
  LlmGateway& gateway_;
  LlmRole role_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<std::uint64_t> nonce_{0};
  int port_ = 0;
};

}  // namespace wfs
