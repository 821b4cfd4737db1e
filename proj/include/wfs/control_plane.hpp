#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "wfs/config.hpp"

namespace httplib {
class Server;
}

namespace wfs {

/// HTTP status for an exception thrown by the engine: 400 validation,
/// 404 unknown ids, 409 state conflicts, 502 LLM gateway failures, else 500.
int http_status_for(const std::exception& e);

/// Session and run management behind the HTTP API. Every mutation runs on a
/// single engine thread in submission order; reads come from the files the
/// engine writes atomically (tree.json, state.json, session.json,
/// events.jsonl) and never wait for the engine.
class ControlPlane {
 public:
  explicit ControlPlane(AppConfig base);
  ~ControlPlane();
  ControlPlane(const ControlPlane&) = delete;
  ControlPlane& operator=(const ControlPlane&) = delete;

  /// {"task", "config"?: RunConfig overrides} -> session (auto mode: approved).
  json create_session(const json& body);
  json get_session(const std::string& id) const;
  json submit_feedback(const std::string& id, const json& body);
  json approve(const std::string& id);

  /// {"session" | "run_id"} starts the loop on an approved session. Without
  /// either, {"task", "config"?} creates an auto-initialized run first.
  /// Returns immediately with the run id; the loop runs on the engine thread.
  json start_run(const json& body);
  json get_run(const std::string& id) const;
  json get_tree(const std::string& id) const;
  /// Events with seq > after_seq, waiting up to wait_ms for the first one.
  json get_events(const std::string& id, std::uint64_t after_seq, int wait_ms) const;
  json get_node(const std::string& id, std::uint64_t node) const;
  /// Manifests of every export of the run.
  json get_exports(const std::string& id) const;
  /// {"node"?: id (default best), "count"} -> manifest.
  json create_export(const std::string& id, const json& body);

  /// Blocks until every queued command has finished.
  void drain();

  const std::filesystem::path& runs_dir() const { return base_.runs_dir; }

 private:
  std::filesystem::path run_dir(const std::string& id) const;
  std::string allocate_run_id();
  std::shared_ptr<RunContext> context(const std::string& id);
  std::string job_status(const std::string& id) const;

  template <class F>
  auto post(F fn) -> std::future<decltype(fn())> {
    using R = decltype(fn());
    auto task = std::make_shared<std::packaged_task<R()>>(std::move(fn));
    auto fut = task->get_future();
    {
      std::lock_guard lock(queue_mutex_);
      queue_.push_back([task] { (*task)(); });
    }
    queue_cv_.notify_all();
    return fut;
  }

  void worker();

  AppConfig base_;
  mutable std::mutex runs_mutex_;
  std::map<std::string, std::shared_ptr<RunContext>> runs_;
  std::map<std::string, std::string> job_status_;
  int next_run_ = 1;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

/// httplib front end for a ControlPlane.
class HttpService {
 public:
  explicit HttpService(ControlPlane& plane);
  ~HttpService();

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  ControlPlane& plane_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace wfs
