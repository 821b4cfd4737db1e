#include "wfs/search_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "wfs/errors.hpp"

namespace wfs {

std::string to_string(HitlMode m) { return m == HitlMode::Auto ? "auto" : "interactive"; }

HitlMode parse_hitl_mode(const std::string& s) {
  if (s == "auto") return HitlMode::Auto;
  if (s == "interactive") return HitlMode::Interactive;
  throw ValidationError("unknown hitl mode '" + s + "'");
}

std::string to_string(Pairing p) { return p == Pairing::Greedy ? "greedy" : "optimal"; }

Pairing parse_pairing(const std::string& s) {
  if (s == "greedy") return Pairing::Greedy;
  if (s == "optimal") return Pairing::Optimal;
  throw ValidationError("unknown pairing '" + s + "'");
}

void RunConfig::validate() const {
  if (task.empty()) throw ValidationError("task description must not be empty");
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (!(epsilon > 0)) throw ValidationError("epsilon must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  if (metric_cap < 1) throw ValidationError("metric_cap must be >= 1");
  if (judge_concurrency < 1) throw ValidationError("judge_concurrency must be >= 1");
  weights.validate();
}

void to_json(json& j, const RunConfig& c) {
  j = {{"task", c.task},
       {"max_iterations", c.max_iterations},
       {"epsilon", c.epsilon},
       {"batch_size", c.batch_size},
       {"top_k", c.top_k},
       {"weights", c.weights},
       {"metric_mode", to_string(c.metric_mode)},
       {"hitl_mode", to_string(c.hitl_mode)},
       {"rng_seed", c.rng_seed},
       {"metric_cap", c.metric_cap},
       {"pairing", to_string(c.pairing)},
       {"judge_concurrency", c.judge_concurrency}};
}

void from_json(const json& j, RunConfig& c) {
  c.task = j.value("task", c.task);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.top_k = j.value("top_k", c.top_k);
  if (j.contains("weights")) c.weights = j["weights"].get<RewardWeights>();
  if (j.contains("metric_mode")) c.metric_mode = parse_metric_mode(j["metric_mode"]);
  if (j.contains("hitl_mode")) c.hitl_mode = parse_hitl_mode(j["hitl_mode"]);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.metric_cap = j.value("metric_cap", c.metric_cap);
  if (j.contains("pairing")) c.pairing = parse_pairing(j["pairing"]);
  c.judge_concurrency = j.value("judge_concurrency", c.judge_concurrency);
}

void to_json(json& j, const RunReport& r) {
  j = {{"best_node", r.best_node},
       {"best_reward", r.best_reward},
       {"iterations_used", r.iterations_used},
       {"converged", r.converged},
       {"reward_trace", r.reward_trace},
       {"aborted", r.aborted},
       {"abort_reason", r.abort_reason},
       {"diagnostics", r.diagnostics}};
}

void from_json(const json& j, RunReport& r) {
  r.best_node = j.at("best_node").get<NodeId>();
  r.best_reward = j.at("best_reward").get<double>();
  r.iterations_used = j.at("iterations_used").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.reward_trace = j.at("reward_trace").get<std::vector<std::vector<double>>>();
  r.aborted = j.value("aborted", false);
  r.abort_reason = j.value("abort_reason", std::string());
  r.diagnostics = j.value("diagnostics", std::vector<std::string>{});
}

// ---- selection and convergence ----------------------------------------------

SelectionCandidates selection_probabilities(const SearchTree& tree, std::size_t top_k) {
  SelectionCandidates c;
  c.nodes = tree.top_k_evaluated(top_k);
  if (c.nodes.empty()) throw StateError("selection needs at least one evaluated node");
  double total = 0;
  for (NodeId id : c.nodes) total += *tree.node(id).reward;
  for (NodeId id : c.nodes) c.probabilities.push_back(*tree.node(id).reward / total);
  return c;
}

double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

NodeId select(const SearchTree& tree, std::size_t top_k, std::mt19937_64& rng) {
  const SelectionCandidates c = selection_probabilities(tree, top_k);
  const double u = unit_draw(rng);
  double cumulative = 0;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    cumulative += c.probabilities[i];
    if (u < cumulative) return c.nodes[i];
  }
  return c.nodes.back();
}

std::vector<double> top_rewards(const SearchTree& tree, std::size_t top_k) {
  std::vector<double> out;
  for (NodeId id : tree.top_k_evaluated(top_k)) out.push_back(*tree.node(id).reward);
  return out;
}

bool check_convergence(const std::vector<std::vector<double>>& trace, double epsilon,
                       std::size_t top_k) {
  if (trace.size() < 2) return false;
  const auto& now = trace[trace.size() - 1];
  const auto& before = trace[trace.size() - 2];
  for (std::size_t r = 0; r < top_k; ++r) {
    const bool has_now = r < now.size();
    const bool has_before = r < before.size();
    if (!has_now && !has_before) continue;
    if (has_now != has_before) return false;
    // A change of exactly epsilon counts as stable.
    if (std::fabs(now[r] - before[r]) > epsilon + 1e-12) return false;
  }
  return true;
}

// ---- reply parsing ----------------------------------------------------------

namespace {

json workflow_object_schema() {
  return {{"type", "object"},
          {"required", {"prompts", "script"}},
          {"properties",
           {{"prompts", {{"type", "object"}}},
            {"script", {{"type", "string"}, {"minLength", 1}}},
            {"interpreter_hint", {{"type", "string"}, {"minLength", 1}}}}}};
}

const json& refine_reply_schema() {
  static const json schema = {
      {"type", "object"},
      {"required", {"modification", "workflow"}},
      {"properties",
       {{"modification",
         {{"type", "object"},
          {"required", {"description"}},
          {"properties",
           {{"description",
             {{"type", "string"}, {"minLength", 1}, {"maxLength", ModificationRecord::kMaxDescription}}},
            {"kind", {{"type", "string"}, {"enum", {"prompt-edit", "code-edit", "structural", "mixed"}}}}}}}},
        {"workflow", workflow_object_schema()}}}};
  return schema;
}

std::string format_reward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", r);
  return buf;
}

}  // namespace

const json& workflow_reply_schema() {
  static const json schema = {{"type", "object"},
                              {"required", {"workflow"}},
                              {"properties", {{"workflow", workflow_object_schema()}}}};
  return schema;
}

Workflow workflow_from_reply(const json& reply, std::string id, Timestamp created_at) {
  Workflow w;
  w.id = std::move(id);
  w.created_at = created_at;
  w.prompts = reply.at("prompts").get<PromptSet>();
  w.code.script = reply.at("script").get<std::string>();
  w.code.interpreter_hint = reply.value("interpreter_hint", std::string("python3"));
  w.validate();
  return w;
}

std::string describe_experiences(const std::vector<Experience>& experiences) {
  if (experiences.empty()) return "(none yet)";
  std::string out;
  for (const auto& e : experiences) {
    out += "- [iteration " + std::to_string(e.iteration) + ", node " + e.source_node.str() + "] " +
           e.modification.description + " (" + to_string(e.modification.kind) +
           ") -> reward " + format_reward(e.reward) + "\n  feedback: " + e.feedback + "\n";
  }
  return out;
}

// ---- engine -----------------------------------------------------------------

SearchEngine::SearchEngine(RunConfig config, EngineDeps deps, RunStore& store)
    : SearchEngine(std::move(config), deps, store, true) {}

SearchEngine::SearchEngine(RunConfig config, EngineDeps deps, RunStore& store, bool fresh)
    : config_(std::move(config)),
      deps_(deps),
      store_(store),
      forge_(deps.gateway, deps.prompts,
             MetricForgeOptions{3, config_.metric_cap, config_.pairing, token_jaccard}),
      rewards_(deps.gateway, deps.prompts, config_.judge_concurrency),
      rng_(config_.rng_seed) {
  config_.validate();
  if (deps_.executor.limits().network == NetworkPolicy::LlmEndpointsOnly)
    proxy_ = std::make_unique<LlmProxy>(deps_.gateway, LlmRole::Evaluator);
  if (fresh) {
    store_.save_json("config.json", json(config_));
    save_state(status_);
  }
}

std::unique_ptr<SearchEngine> SearchEngine::resume(EngineDeps deps, RunStore& store,
                                                   std::optional<RunConfig> config_override) {
  if (!store.has_json("state.json")) throw NotFoundError("run has no state.json");
  const json state = store.load_json("state.json");
  RunConfig cfg = config_override ? *config_override : state.at("config").get<RunConfig>();
  std::unique_ptr<SearchEngine> engine(new SearchEngine(std::move(cfg), deps, store, false));
  engine->load_state(state);
  if (store.has_tree()) engine->tree_ = store.load_tree();
  return engine;
}

void SearchEngine::attach_transcript() {
  deps_.gateway.set_sink([this](const json& entry) {
    json payload = entry;
    payload.erase("messages");
    store_.append_event(EventKind::LlmCall, std::move(payload));
  });
}

std::string SearchEngine::next_workflow_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "wf-%04d", ++workflow_counter_);
  return buf;
}

const SearchTree& SearchEngine::tree() const {
  if (!tree_) throw StateError("run has no root yet");
  return *tree_;
}

std::optional<json> SearchEngine::llm_descriptor() const {
  if (!proxy_) return std::nullopt;
  return proxy_->descriptor();
}

std::uint64_t SearchEngine::sample_seed(NodeId node) const {
  return config_.rng_seed * 1000003ULL + node.value;
}

void SearchEngine::save_state(const std::string& status) const {
  std::ostringstream rng_state;
  rng_state << rng_;
  json state = {{"config", config_},
                {"status", status},
                {"trace", trace_},
                {"rng", rng_state.str()},
                {"consecutive_skips", consecutive_skips_},
                {"workflow_counter", workflow_counter_},
                {"metric_cache", metric_cache_ ? json(*metric_cache_) : json()},
                {"metric_pipelines", forge_.pipelines_run()},
                {"diagnostics", diagnostics_},
                {"converged", converged_},
                {"aborted", aborted_},
                {"abort_reason", abort_reason_}};
  store_.save_json("state.json", state);
}

void SearchEngine::load_state(const json& state) {
  status_ = state.value("status", std::string("running"));
  trace_ = state.at("trace").get<std::vector<std::vector<double>>>();
  std::istringstream rng_state(state.at("rng").get<std::string>());
  rng_state >> rng_;
  if (rng_state.fail()) throw LoadError("state.json has an unreadable rng state", 0);
  consecutive_skips_ = state.value("consecutive_skips", 0);
  workflow_counter_ = state.value("workflow_counter", 0);
  if (state.contains("metric_cache") && !state["metric_cache"].is_null())
    metric_cache_ = state["metric_cache"].get<MetricSet>();
  diagnostics_ = state.value("diagnostics", std::vector<std::string>{});
  converged_ = state.value("converged", false);
  aborted_ = state.value("aborted", false);
  abort_reason_ = state.value("abort_reason", std::string());
}

EvaluationResult SearchEngine::evaluate(const Workflow& workflow, int iteration, NodeId node) {
  EvaluationResult result;
  result.weights = config_.weights;

  RunParameters params;
  params.n = config_.batch_size;
  params.task = config_.task;
  params.llm = llm_descriptor();
  params.seed = sample_seed(node);

  ExecutionOutcome outcome;
  try {
    outcome = deps_.executor.execute(workflow, params, node);
  } catch (const ExecutionError& e) {
    result.execution_failed = true;
    result.failure = std::string("execution failed: ") + e.what();
    if (!e.captured_stderr().empty()) result.failure += "\nstderr:\n" + e.captured_stderr();
  } catch (const ParseError& e) {
    result.execution_failed = true;
    result.failure = std::string("execution failed: ") + e.what();
  } catch (const BatchError& e) {
    result.execution_failed = true;
    result.failure = std::string("execution failed: ") + e.what();
  }
  if (result.execution_failed) {
    result.sample_score = kScoreMin;
    result.workflow_score = kScoreMin;
    result.hybrid_reward = kScoreMin;
    store_.append_event(EventKind::Executed, {{"iteration", iteration},
                                              {"node", node},
                                              {"ok", false},
                                              {"error", result.failure}});
    return result;
  }
  store_.append_event(EventKind::Executed,
                      {{"iteration", iteration}, {"node", node}, {"ok", true},
                       {"samples", outcome.samples.size()}});
  result.samples = std::move(outcome.samples);

  MetricPipelineResult pipeline = forge_.metrics_for_iteration(
      config_.metric_mode, iteration, metric_cache_, config_.task, result.samples);
  if (pipeline.generated) metric_cache_ = pipeline.chosen;
  json pipeline_json = pipeline;
  store_.append_event(EventKind::Metrics, {{"iteration", iteration}, {"node", node},
                                           {"pipeline", pipeline_json}});
  store_.save_metrics_snapshot(iteration, {{"node", node}, {"pipeline", pipeline_json}});
  result.metric_set = pipeline.chosen;

  result.score_matrix = rewards_.score_samples(config_.task, result.samples, result.metric_set);
  result.workflow_quality = rewards_.score_workflow(config_.task, workflow);
  result.sample_score = aggregate_sample_score(result.score_matrix);
  result.workflow_score = result.workflow_quality->score();
  result.hybrid_reward = hybrid_reward(result.sample_score, result.workflow_score, config_.weights);
  result.suggestions = collect_suggestions(result.score_matrix);
  return result;
}

NodeId SearchEngine::install_root(const Workflow& workflow) {
  if (tree_) throw StateError("run already has a root");
  const EvaluationResult result = evaluate(workflow, 0, NodeId{0});
  tree_ = SearchTree::create_root(workflow, result.hybrid_reward, result, now_ms());
  trace_ = {top_rewards(*tree_, config_.top_k)};
  store_.append_event(EventKind::Init,
                      {{"run_id", store_.run_id()}, {"root", json(tree_->node(tree_->root()))}});
  store_.save_tree(*tree_);
  status_ = "ready";
  save_state(status_);
  return tree_->root();
}

std::pair<Workflow, ModificationRecord> SearchEngine::refine(NodeId selected) {
  const Node& node = tree().node(selected);
  ChatExchange ex;
  ex.role = LlmRole::Optimizer;
  ex.purpose = "refine-workflow";
  ex.nonce = static_cast<std::uint64_t>(tree().iteration_count());
  const std::string suggestions =
      node.eval ? (node.eval->execution_failed ? node.eval->failure : node.eval->suggestions)
                : std::string();
  ex.messages = deps_.prompts.render(
      "refine-workflow", {{"task", config_.task},
                          {"workflow", describe_workflow(node.workflow)},
                          {"experiences", describe_experiences(node.experiences)},
                          {"suggestions", suggestions.empty() ? "(none)" : suggestions}});

  const auto& interpreters = deps_.executor.interpreters();
  const StructuredCheck check = [&](const json& v) -> std::optional<std::string> {
    try {
      Workflow probe = workflow_from_reply(v.at("workflow"), "probe", 0);
      if (!interpreters.count(probe.code.interpreter_hint))
        return "unknown interpreter_hint '" + probe.code.interpreter_hint + "'";
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
    return std::nullopt;
  };

  json reply;
  try {
    reply = deps_.gateway.complete_structured(ex, refine_reply_schema(), check);
  } catch (const FormatError& e) {
    throw RefinementError(std::string("refinement reply rejected: ") + e.what());
  }
  ModificationRecord mod = reply.at("modification").get<ModificationRecord>();
  mod.validate();
  Workflow wf = workflow_from_reply(reply.at("workflow"), next_workflow_id(), now_ms());
  return {std::move(wf), std::move(mod)};
}

std::vector<NodeId> SearchEngine::backpropagate(NodeId node, const EvaluationResult& result,
                                                const ModificationRecord& modification,
                                                int iteration) {
  SearchTree& t = *tree_;
  t.set_reward(node, result.hybrid_reward, result);
  Experience exp;
  exp.modification = modification;
  exp.reward = result.hybrid_reward;
  exp.feedback = result.execution_failed ? result.failure : result.suggestions;
  exp.source_node = node;
  exp.iteration = iteration;
  const std::vector<NodeId> targets = t.ancestors(node);
  for (NodeId a : targets) t.append_experience(a, exp);
  store_.append_event(EventKind::Backpropagated, {{"iteration", iteration},
                                                  {"node", node},
                                                  {"reward", result.hybrid_reward},
                                                  {"experience", exp},
                                                  {"targets", targets}});
  return targets;
}

RunReport SearchEngine::report() const {
  RunReport r;
  if (tree_) {
    r.best_node = *tree_->best();
    r.best_reward = *tree_->node(r.best_node).reward;
    r.iterations_used = tree_->iteration_count();
  }
  r.converged = converged_;
  r.reward_trace = trace_;
  r.aborted = aborted_;
  r.abort_reason = abort_reason_;
  r.diagnostics = diagnostics_;
  return r;
}

RunReport SearchEngine::run() {
  if (!tree_) throw StateError("run has no root; initialize it first");
  SearchTree& t = *tree_;
  if (converged_ || aborted_) return report();

  auto abort_run = [&](const std::string& reason) {
    aborted_ = true;
    abort_reason_ = reason;
    diagnostics_.push_back(reason);
    store_.append_event(EventKind::Aborted, {{"scope", "run"}, {"reason", reason}});
  };

  status_ = "running";
  save_state(status_);
  while (t.iteration_count() < config_.max_iterations && !aborted_) {
    const int iteration = t.iteration_count() + 1;
    t.set_iteration_count(iteration);

    try {
      const SelectionCandidates cands = selection_probabilities(t, config_.top_k);
      const NodeId selected = select(t, config_.top_k, rng_);
      store_.append_event(EventKind::Selected, {{"iteration", iteration},
                                                {"node", selected},
                                                {"candidates", cands.nodes},
                                                {"probabilities", cands.probabilities}});

      auto [workflow, modification] = refine(selected);
      const NodeId child = t.next_id();
      store_.append_event(EventKind::Refined, {{"iteration", iteration},
                                               {"parent", selected},
                                               {"node", child},
                                               {"modification", modification},
                                               {"workflow", workflow}});

      EvaluationResult result = evaluate(workflow, iteration, child);
      const Timestamp created = now_ms();
      const NodeId added = t.add_child(selected, workflow, modification, iteration, created);
      store_.append_event(EventKind::Scored, {{"iteration", iteration},
                                              {"node", added},
                                              {"reward", result.hybrid_reward},
                                              {"created_at", created},
                                              {"result", result}});
      backpropagate(added, result, modification, iteration);

      consecutive_skips_ = 0;
      trace_.push_back(top_rewards(t, config_.top_k));
      converged_ = check_convergence(trace_, config_.epsilon, config_.top_k);
      store_.append_event(EventKind::Converged, {{"iteration", iteration},
                                                 {"converged", converged_},
                                                 {"top_rewards", trace_.back()}});
    } catch (const BudgetError& e) {
      abort_run(std::string("LLM budget exhausted at iteration ") + std::to_string(iteration) +
                ": " + e.what());
    } catch (const ScriptedMissError& e) {
      abort_run(std::string("iteration ") + std::to_string(iteration) + ": " + e.what());
    } catch (const Error& e) {
      ++consecutive_skips_;
      const std::string reason =
          "iteration " + std::to_string(iteration) + " skipped: " + e.what();
      diagnostics_.push_back(reason);
      store_.append_event(EventKind::Aborted,
                          {{"scope", "iteration"}, {"iteration", iteration}, {"reason", reason}});
      if (consecutive_skips_ >= 3)
        abort_run("aborted after " + std::to_string(consecutive_skips_) +
                  " consecutive skipped iterations; last: " + e.what());
    }

    store_.save_tree(t);
    save_state(aborted_ ? "aborted" : "running");
    if (converged_) break;
  }

  status_ = aborted_ ? "aborted" : (converged_ ? "converged" : "max-iterations");
  save_state(status_);
  RunReport r = report();
  store_.save_json("report.json", json(r));
  return r;
}

}  // namespace wfs
