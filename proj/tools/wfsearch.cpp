#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "wfs/config.hpp"
#include "wfs/control_plane.hpp"
#include "wfs/errors.hpp"

namespace fs = std::filesystem;
using namespace wfs;

namespace {

struct RunOverrides {
  std::optional<std::string> task;
  std::optional<int> max_iterations;
  std::optional<double> epsilon;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> top_k;
  std::optional<double> w_sample;
  std::optional<double> w_workflow;
  std::optional<std::string> metric_mode;
  std::optional<std::string> hitl_mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> metric_cap;
  std::optional<std::string> pairing;
  std::optional<int> judge_concurrency;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--task", task, "Task description");
    cmd->add_option("--max-iterations", max_iterations);
    cmd->add_option("--epsilon", epsilon);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--top-k", top_k);
    cmd->add_option("--w-sample", w_sample, "Sample-score weight");
    cmd->add_option("--w-workflow", w_workflow, "Workflow-score weight");
    cmd->add_option("--metric-mode", metric_mode)->check(CLI::IsMember({"iterative", "once"}));
    cmd->add_option("--hitl-mode", hitl_mode)->check(CLI::IsMember({"interactive", "auto"}));
    cmd->add_option("--seed", seed);
    cmd->add_option("--metric-cap", metric_cap);
    cmd->add_option("--pairing", pairing)->check(CLI::IsMember({"optimal", "greedy"}));
    cmd->add_option("--judge-concurrency", judge_concurrency);
  }

  void apply(RunConfig& c) const {
    if (task) c.task = *task;
    if (max_iterations) c.max_iterations = *max_iterations;
    if (epsilon) c.epsilon = *epsilon;
    if (batch_size) c.batch_size = *batch_size;
    if (top_k) c.top_k = *top_k;
    if (w_sample) c.weights.sample = *w_sample;
    if (w_workflow) c.weights.workflow = *w_workflow;
    if (w_sample && !w_workflow) c.weights.workflow = 1.0 - *w_sample;
    if (w_workflow && !w_sample) c.weights.sample = 1.0 - *w_workflow;
    if (metric_mode) c.metric_mode = parse_metric_mode(*metric_mode);
    if (hitl_mode) c.hitl_mode = parse_hitl_mode(*hitl_mode);
    if (seed) c.rng_seed = *seed;
    if (metric_cap) c.metric_cap = *metric_cap;
    if (pairing) c.pairing = parse_pairing(*pairing);
    if (judge_concurrency) c.judge_concurrency = *judge_concurrency;
  }
};

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

void print_session_for_review(const HitlSession& s) {
  std::cout << "=== session " << s.id << " | round " << s.round << " of "
            << HitlSession::kMaxRounds << " | " << s.remaining_rounds()
            << " feedback round(s) left ===\n";
  std::cout << describe_workflow(s.current_workflow) << "\n";
  std::cout << "--- samples (" << s.current_samples.size() << ") ---\n";
  for (const auto& sample : s.current_samples)
    std::cout << "[" << sample.index << "] " << sample.payload.dump() << "\n";
  if (!s.feedback.empty()) {
    std::cout << "--- earlier feedback ---\n";
    for (const auto& f : s.feedback) std::cout << "round " << f.round << ": " << f.text << "\n";
  }
  std::cout << std::flush;
}

int run_terminal_review(RunContext& ctx) {
  for (;;) {
    const HitlSession& s = ctx.hitl->session();
    if (s.status == SessionStatus::Approved) break;
    print_session_for_review(s);
    if (s.remaining_rounds() <= 0) {
      std::cout << "round limit reached; approving\n";
      break;
    }
    std::cout << "feedback (empty line or 'approve' to accept): " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line) || line.empty() || line == "approve") break;
    ctx.hitl->submit_feedback(line);
  }
  const NodeId root = ctx.hitl->approve();
  print({{"run_id", ctx.store->run_id()},
         {"root", root},
         {"root_reward", *ctx.engine->tree().node(root).reward}});
  return 0;
}

std::atomic<bool> g_stop{false};

int serve_until_approved(const fs::path& run_dir, const AppConfig& cfg, const std::string& host,
                         int port) {
  AppConfig plane_cfg = cfg;
  plane_cfg.runs_dir = run_dir.parent_path();
  ControlPlane plane(plane_cfg);
  HttpService http(plane);
  const int bound = http.start(host, port);
  const std::string id = run_dir.filename().string();
  std::cout << "review session at http://" << host << ":" << bound << "/sessions/" << id
            << " (POST .../feedback, POST .../approve)" << std::endl;
  while (!g_stop) {
    const json s = plane.get_session(id);
    if (s.value("status", "") == "approved") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  http.stop();
  return 0;
}

RunParameters export_params(const SearchEngine& engine) {
  RunParameters p;
  p.n = engine.config().batch_size;
  p.task = engine.config().task;
  p.llm = engine.llm_descriptor();
  p.seed = engine.config().rng_seed;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wfsearch: tree search over synthetic-data generation workflows"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  RunOverrides overrides;

  auto* init = app.add_subcommand("init", "Create a run and its initialization session");
  bool auto_mode = false;
  bool no_ui = false;
  std::string host = "127.0.0.1";
  int port = 8077;
  init->add_option("--config", config_path, "App config (JSON)")->required();
  init->add_option("--run-dir", run_dir, "New run directory")->required();
  init->add_flag("--auto", auto_mode, "Approve the generated workflow without review");
  init->add_flag("--no-ui", no_ui, "Review in the terminal instead of over HTTP");
  init->add_option("--host", host);
  init->add_option("--port", port);
  overrides.add_to(init);

  auto* optimize = app.add_subcommand("optimize", "Run the search on an initialized run");
  optimize->add_option("--run-dir", run_dir, "Run directory")->required();
  optimize->add_option("--config", config_path,
                       "App config; creates an auto-initialized run when the directory is new");
  overrides.add_to(optimize);

  auto* resume = app.add_subcommand("resume", "Continue an interrupted or finished run");
  resume->add_option("--run-dir", run_dir, "Run directory")->required();
  overrides.add_to(resume);

  auto* exp = app.add_subcommand("export", "Generate a dataset from a node's workflow");
  std::optional<std::uint64_t> node_opt;
  std::size_t count = 1000;
  exp->add_option("--run-dir", run_dir, "Run directory")->required();
  exp->add_option("--node", node_opt, "Node id (default: best)");
  exp->add_option("--count", count, "Number of records");

  auto* inspect = app.add_subcommand("inspect", "Print run state");
  bool show_events = false;
  bool replay_check = false;
  inspect->add_option("--run-dir", run_dir, "Run directory")->required();
  inspect->add_option("--node", node_opt, "Print one node in full");
  inspect->add_flag("--events", show_events, "Print the event log");
  inspect->add_flag("--replay-check", replay_check,
                    "Rebuild the tree from the event log and compare with tree.json");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--config", config_path, "App config (JSON)")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, [](int) { g_stop = true; });

  try {
    if (*init) {
      AppConfig cfg = AppConfig::load(config_path);
      overrides.apply(cfg.run);
      if (auto_mode) cfg.run.hitl_mode = HitlMode::Auto;
      {
        auto ctx = RunContext::create(cfg, run_dir);
        const HitlSession& s = ctx->hitl->start();
        if (s.status == SessionStatus::Approved) {
          print({{"run_id", ctx->store->run_id()},
                 {"root", *s.root},
                 {"root_reward", *ctx->engine->tree().node(*s.root).reward},
                 {"feedback_rounds", s.feedback.size()}});
          return 0;
        }
        if (no_ui) return run_terminal_review(*ctx);
      }
      return serve_until_approved(fs::absolute(run_dir), cfg, host, port);
    }

    if (*optimize) {
      std::unique_ptr<RunContext> ctx;
      if (!fs::exists(fs::path(run_dir) / "app.json")) {
        if (config_path.empty()) throw NotFoundError("no run at " + run_dir + "; pass --config");
        AppConfig cfg = AppConfig::load(config_path);
        overrides.apply(cfg.run);
        cfg.run.hitl_mode = HitlMode::Auto;
        ctx = RunContext::create(cfg, run_dir);
        ctx->hitl->start();
      } else {
        auto saved = RunContext::open(run_dir);
        AppConfig cfg = saved->config;
        cfg.run = saved->engine->config();
        overrides.apply(cfg.run);
        saved.reset();
        ctx = RunContext::open(run_dir, cfg);
      }
      print(json(ctx->engine->run()));
      return ctx->engine->report().aborted ? 2 : 0;
    }

    if (*resume) {
      auto saved = RunContext::open(run_dir);
      AppConfig cfg = saved->config;
      cfg.run = saved->engine->config();
      overrides.apply(cfg.run);
      saved.reset();
      auto ctx = RunContext::open(run_dir, cfg);
      print(json(ctx->engine->run()));
      return ctx->engine->report().aborted ? 2 : 0;
    }

    if (*exp) {
      auto ctx = RunContext::open(run_dir);
      const SearchTree& tree = ctx->engine->tree();
      const NodeId node = node_opt ? NodeId{*node_opt} : *tree.best();
      const DatasetExport out =
          export_dataset(*ctx->store, tree, node, count, *ctx->executor, export_params(*ctx->engine));
      json m = out.manifest;
      m["records_file"] = out.records_file.string();
      print(m);
      return 0;
    }

    if (*inspect) {
      const fs::path dir(run_dir);
      RunStore store(dir, RunStore::Mode::Open);
      if (show_events) {
        for (const auto& e : read_event_log(dir / "events.jsonl")) std::cout << json(e).dump() << "\n";
        return 0;
      }
      if (!store.has_tree()) {
        print(store.has_json("session.json") ? store.load_json("session.json") : json::object());
        return 0;
      }
      const SearchTree tree = store.load_tree();
      if (node_opt) {
        if (!tree.contains(NodeId{*node_opt})) throw NotFoundError("no node " + std::to_string(*node_opt));
        print(json(tree.node(NodeId{*node_opt})));
        return 0;
      }
      if (replay_check) {
        const bool same = replay_tree(read_event_log(dir / "events.jsonl")) == tree;
        print({{"replay_matches_tree", same}});
        return same ? 0 : 1;
      }
      json nodes = json::array();
      for (const Node& n : tree.nodes())
        nodes.push_back({{"id", n.id},
                         {"parent", n.parent ? json(*n.parent) : json()},
                         {"reward", n.reward ? json(*n.reward) : json()},
                         {"iteration", n.iteration},
                         {"modification", n.workflow.parent_modification
                                              ? n.workflow.parent_modification->description
                                              : ""}});
      const json state = store.load_json("state.json");
      print({{"run_id", store.run_id()},
             {"status", state.value("status", "")},
             {"iteration_count", tree.iteration_count()},
             {"best_node", *tree.best()},
             {"best_reward", *tree.node(*tree.best()).reward},
             {"reward_trace", state.at("trace")},
             {"nodes", nodes},
             {"last_seq", store.last_seq()}});
      return 0;
    }

    if (*serve) {
      AppConfig cfg = AppConfig::load(config_path);
      ControlPlane plane(cfg);
      HttpService http(plane);
      std::cout << "listening on http://" << host << ":" << port << std::endl;
      http.listen(host, port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
