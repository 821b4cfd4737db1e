#include "wfs/control_plane.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "httplib.h"
#include "wfs/errors.hpp"

namespace wfs {

namespace fs = std::filesystem;

int http_status_for(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ValidationError*>(&e)) return 400;
  if (dynamic_cast<const StateError*>(&e)) return 409;
  if (dynamic_cast<const GatewayError*>(&e)) return 502;
  if (dynamic_cast<const json::exception*>(&e)) return 400;
  return 500;
}

namespace {

json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("missing " + p.filename().string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError("unreadable " + p.string());
  return j;
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
  return true;
}

}  // namespace

ControlPlane::ControlPlane(AppConfig base) : base_(std::move(base)) {
  fs::create_directories(base_.runs_dir);
  for (const auto& entry : fs::directory_iterator(base_.runs_dir)) {
    int n = 0;
    if (std::sscanf(entry.path().filename().string().c_str(), "run-%d", &n) == 1)
      next_run_ = std::max(next_run_, n + 1);
  }
  worker_ = std::thread([this] { worker(); });
}

ControlPlane::~ControlPlane() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void ControlPlane::worker() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
    }
    job();
    {
      std::lock_guard lock(queue_mutex_);
      busy_ = false;
    }
    queue_cv_.notify_all();
  }
}

void ControlPlane::drain() {
  std::unique_lock lock(queue_mutex_);
  queue_cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

fs::path ControlPlane::run_dir(const std::string& id) const {
  if (!valid_id(id)) throw NotFoundError("unknown id '" + id + "'");
  const fs::path dir = base_.runs_dir / id;
  if (!fs::exists(dir / "app.json")) throw NotFoundError("unknown id '" + id + "'");
  return dir;
}

std::string ControlPlane::allocate_run_id() {
  std::lock_guard lock(runs_mutex_);
  char buf[32];
  for (;;) {
    std::snprintf(buf, sizeof buf, "run-%04d", next_run_++);
    if (!fs::exists(base_.runs_dir / buf)) return buf;
  }
}

std::shared_ptr<RunContext> ControlPlane::context(const std::string& id) {
  const fs::path dir = run_dir(id);
  std::lock_guard lock(runs_mutex_);
  auto it = runs_.find(id);
  if (it != runs_.end()) return it->second;
  std::shared_ptr<RunContext> ctx = RunContext::open(dir);
  runs_[id] = ctx;
  return ctx;
}

std::string ControlPlane::job_status(const std::string& id) const {
  std::lock_guard lock(runs_mutex_);
  auto it = job_status_.find(id);
  return it == job_status_.end() ? "idle" : it->second;
}

json ControlPlane::create_session(const json& body) {
  if (!body.is_object() || !body.contains("task") || !body["task"].is_string())
    throw ValidationError("body needs a string \"task\"");
  AppConfig cfg = base_;
  if (body.contains("config")) from_json(body["config"], cfg.run);
  cfg.run.task = body["task"].get<std::string>();
  cfg.run.validate();
  const std::string id = allocate_run_id();

  return post([this, cfg, id]() -> json {
           std::shared_ptr<RunContext> ctx = RunContext::create(cfg, base_.runs_dir / id);
           {
             std::lock_guard lock(runs_mutex_);
             runs_[id] = ctx;
           }
           return json(ctx->hitl->start());
         })
      .get();
}

json ControlPlane::get_session(const std::string& id) const {
  return read_json_file(run_dir(id) / "session.json");
}

json ControlPlane::submit_feedback(const std::string& id, const json& body) {
  if (!body.is_object() || !body.contains("feedback") || !body["feedback"].is_string())
    throw ValidationError("body needs a string \"feedback\"");
  auto ctx = context(id);
  const std::string text = body["feedback"].get<std::string>();
  return post([ctx, text]() -> json { return json(ctx->hitl->submit_feedback(text)); }).get();
}

json ControlPlane::approve(const std::string& id) {
  auto ctx = context(id);
  return post([ctx]() -> json {
           const NodeId root = ctx->hitl->approve();
           json out = ctx->hitl->session();
           out["root"] = root;
           out["root_reward"] = *ctx->engine->tree().node(root).reward;
           return out;
         })
      .get();
}

json ControlPlane::start_run(const json& body) {
  if (!body.is_object()) throw ValidationError("body must be a JSON object");
  std::string id;
  if (body.contains("session")) {
    id = body["session"].get<std::string>();
  } else if (body.contains("run_id")) {
    id = body["run_id"].get<std::string>();
  } else {
    json session_body = body;
    if (!session_body.contains("config")) session_body["config"] = json::object();
    session_body["config"]["hitl_mode"] = "auto";
    id = create_session(session_body).at("id").get<std::string>();
  }
  auto ctx = context(id);
  {
    std::lock_guard lock(runs_mutex_);
    const std::string status = job_status_.count(id) ? job_status_[id] : "idle";
    if (status == "queued" || status == "running")
      throw StateError("run " + id + " is already " + status);
    job_status_[id] = "queued";
  }
  post([this, ctx, id] {
    {
      std::lock_guard lock(runs_mutex_);
      job_status_[id] = "running";
    }
    std::string final_status = "finished";
    try {
      if (!ctx->engine->has_tree()) throw StateError("session " + id + " is not approved");
      ctx->engine->run();
    } catch (const std::exception& e) {
      final_status = std::string("failed: ") + e.what();
    }
    std::lock_guard lock(runs_mutex_);
    job_status_[id] = final_status;
  });
  return {{"run_id", id}, {"status", "queued"}};
}

json ControlPlane::get_run(const std::string& id) const {
  const fs::path dir = run_dir(id);
  json out = {{"run_id", id}, {"job", job_status(id)}};
  const json state = read_json_file(dir / "state.json");
  out["status"] = state.value("status", "unknown");
  out["config"] = state.at("config");
  out["reward_trace"] = state.at("trace");
  out["converged"] = state.value("converged", false);
  out["aborted"] = state.value("aborted", false);
  out["abort_reason"] = state.value("abort_reason", "");
  out["diagnostics"] = state.value("diagnostics", json::array());
  out["metric_pipelines"] = state.value("metric_pipelines", 0);
  const auto events = read_event_log(dir / "events.jsonl", true);
  out["last_seq"] = events.empty() ? 0 : events.back().seq;
  if (fs::exists(dir / "tree.json")) {
    const SearchTree tree = load_tree_file(dir / "tree.json");
    out["node_count"] = tree.size();
    out["iteration"] = tree.iteration_count();
    const NodeId best = *tree.best();
    out["best_node"] = best;
    out["best_reward"] = *tree.node(best).reward;
  }
  if (fs::exists(dir / "report.json")) out["report"] = read_json_file(dir / "report.json");
  return out;
}

json ControlPlane::get_tree(const std::string& id) const {
  const fs::path dir = run_dir(id);
  if (!fs::exists(dir / "tree.json")) throw StateError("run " + id + " has no tree yet");
  const SearchTree tree = load_tree_file(dir / "tree.json");
  json nodes = json::array();
  for (const Node& n : tree.nodes()) {
    nodes.push_back({{"id", n.id},
                     {"parent", n.parent ? json(*n.parent) : json()},
                     {"children", n.children},
                     {"reward", n.reward ? json(*n.reward) : json()},
                     {"iteration", n.iteration},
                     {"workflow_id", n.workflow.id},
                     {"modification", n.workflow.parent_modification
                                          ? json(*n.workflow.parent_modification)
                                          : json()},
                     {"experience_count", n.experiences.size()}});
  }
  const auto events = read_event_log(dir / "events.jsonl", true);
  return {{"run_id", id},
          {"iteration_count", tree.iteration_count()},
          {"node_count", tree.size()},
          {"best_node", *tree.best()},
          {"nodes", nodes},
          {"tree", tree},
          {"as_of_seq", events.empty() ? 0 : events.back().seq}};
}

json ControlPlane::get_events(const std::string& id, std::uint64_t after_seq, int wait_ms) const {
  const fs::path file = run_dir(id) / "events.jsonl";
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(wait_ms);
  for (;;) {
    const auto all = read_event_log(file, true);
    json out = json::array();
    for (const auto& e : all)
      if (e.seq > after_seq) out.push_back(e);
    if (!out.empty() || std::chrono::steady_clock::now() >= deadline)
      return {{"run_id", id},
              {"events", out},
              {"last_seq", all.empty() ? 0 : all.back().seq}};
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
}

json ControlPlane::get_node(const std::string& id, std::uint64_t node) const {
  const fs::path dir = run_dir(id);
  if (!fs::exists(dir / "tree.json")) throw StateError("run " + id + " has no tree yet");
  const SearchTree tree = load_tree_file(dir / "tree.json");
  if (!tree.contains(NodeId{node}))
    throw NotFoundError("run " + id + " has no node " + std::to_string(node));
  const Node& n = tree.node(NodeId{node});
  json out = n;
  out["workflow_text"] = describe_workflow(n.workflow);
  if (n.eval) {
    out["samples"] = n.eval->samples;
    out["score_matrix"] = n.eval->score_matrix;
    out["suggestions"] = n.eval->suggestions;
    out["metric_set"] = n.eval->metric_set;
  }
  return out;
}

json ControlPlane::get_exports(const std::string& id) const {
  const fs::path dir = run_dir(id) / "export";
  json out = json::array();
  if (fs::exists(dir)) {
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir))
      if (fs::exists(e.path() / "manifest.json")) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      json m = read_json_file(p / "manifest.json");
      m["records_file"] = (p / "records.jsonl").string();
      out.push_back(std::move(m));
    }
  }
  return {{"run_id", id}, {"exports", out}};
}

json ControlPlane::create_export(const std::string& id, const json& body) {
  if (!body.is_object() || !body.contains("count") || !body["count"].is_number_integer())
    throw ValidationError("body needs an integer \"count\"");
  const long long count = body["count"].get<long long>();
  if (count < 1) throw ValidationError("export count must be >= 1");
  auto ctx = context(id);
  std::optional<NodeId> requested;
  if (body.contains("node")) requested = body["node"].get<NodeId>();
  return post([ctx, requested, count]() -> json {
           const SearchTree& tree = ctx->engine->tree();
           const NodeId node = requested ? *requested : *tree.best();
           if (!tree.contains(node)) throw NotFoundError("no node " + node.str());
           RunParameters base;
           base.n = ctx->engine->config().batch_size;
           base.task = ctx->engine->config().task;
           base.llm = ctx->engine->llm_descriptor();
           base.seed = ctx->engine->config().rng_seed;
           return export_dataset(*ctx->store, tree, node, static_cast<std::size_t>(count),
                                 *ctx->executor, base)
               .manifest;
         })
      .get();
}

// ---- HTTP -------------------------------------------------------------------

HttpService::HttpService(ControlPlane& plane)
    : plane_(plane), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpService::~HttpService() { stop(); }

void HttpService::install_routes() {
  using Handler = std::function<json(const httplib::Request&)>;
  auto wrap = [](Handler h, int ok_status = 200) {
    return [h, ok_status](const httplib::Request& req, httplib::Response& res) {
      try {
        json body = h(req);
        res.status = ok_status;
        res.set_content(body.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = http_status_for(e);
        res.set_content(json{{"error", e.what()}, {"status", res.status}}.dump(),
                        "application/json");
      }
    };
  };
  auto body_of = [](const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw ValidationError("request body is not JSON");
    return j;
  };
  auto int_param = [](const httplib::Request& req, const char* name, long long fallback) {
    if (!req.has_param(name)) return fallback;
    try {
      return std::stoll(req.get_param_value(name));
    } catch (const std::exception&) {
      throw ValidationError(std::string("query parameter ") + name + " must be an integer");
    }
  };
  auto node_param = [](const std::string& s) {
    try {
      return static_cast<std::uint64_t>(std::stoull(s));
    } catch (const std::exception&) {
      throw NotFoundError("unknown node '" + s + "'");
    }
  };

  server_->Post("/sessions", wrap([this, body_of](const httplib::Request& req) {
                  return plane_.create_session(body_of(req));
                }, 201));
  server_->Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req) {
                 return plane_.get_session(req.matches[1]);
               }));
  server_->Post(R"(/sessions/([^/]+)/feedback)", wrap([this, body_of](const httplib::Request& req) {
                  return plane_.submit_feedback(req.matches[1], body_of(req));
                }));
  server_->Post(R"(/sessions/([^/]+)/approve)", wrap([this](const httplib::Request& req) {
                  return plane_.approve(req.matches[1]);
                }));
  server_->Post("/runs", wrap([this, body_of](const httplib::Request& req) {
                  return plane_.start_run(body_of(req));
                }, 202));
  server_->Get(R"(/runs/([^/]+))", wrap([this](const httplib::Request& req) {
                 return plane_.get_run(req.matches[1]);
               }));
  server_->Get(R"(/runs/([^/]+)/tree)", wrap([this](const httplib::Request& req) {
                 return plane_.get_tree(req.matches[1]);
               }));
  server_->Get(R"(/runs/([^/]+)/events)", wrap([this, int_param](const httplib::Request& req) {
                 const long long after = int_param(req, "after_seq", 0);
                 const long long wait = int_param(req, "wait_ms", 0);
                 if (after < 0 || wait < 0 || wait > 60000)
                   throw ValidationError("after_seq must be >= 0 and wait_ms in [0, 60000]");
                 return plane_.get_events(req.matches[1], static_cast<std::uint64_t>(after),
                                          static_cast<int>(wait));
               }));
  server_->Get(R"(/runs/([^/]+)/nodes/([^/]+))", wrap([this, node_param](const httplib::Request& req) {
                 return plane_.get_node(req.matches[1], node_param(req.matches[2]));
               }));
  server_->Get(R"(/runs/([^/]+)/export)", wrap([this](const httplib::Request& req) {
                 return plane_.get_exports(req.matches[1]);
               }));
  server_->Post(R"(/runs/([^/]+)/export)", wrap([this, body_of](const httplib::Request& req) {
                  return plane_.create_export(req.matches[1], body_of(req));
                }, 201));
}

int HttpService::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpService::listen(const std::string& host, int port) {
  port_ = port;
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace wfs
