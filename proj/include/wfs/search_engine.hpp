#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wfs/evaluation.hpp"
#include "wfs/executor.hpp"
#include "wfs/llm_gateway.hpp"
#include "wfs/llm_proxy.hpp"
#include "wfs/metric_forge.hpp"
#include "wfs/prompt_pack.hpp"
#include "wfs/reward_system.hpp"
#include "wfs/run_store.hpp"
#include "wfs/search_tree.hpp"

namespace wfs {

enum class HitlMode { Interactive, Auto };

std::string to_string(HitlMode m);
HitlMode parse_hitl_mode(const std::string& s);
std::string to_string(Pairing p);
Pairing parse_pairing(const std::string& s);

struct RunConfig {
  std::string task;
  int max_iterations = 30;
  double epsilon = 0.05;
  std::size_t batch_size = 5;
  std::size_t top_k = 3;
  RewardWeights weights;
  MetricMode metric_mode = MetricMode::Iterative;
  HitlMode hitl_mode = HitlMode::Interactive;
  std::uint64_t rng_seed = 0;
  std::size_t metric_cap = MetricSet::kDefaultCap;
  Pairing pairing = Pairing::Optimal;
  int judge_concurrency = 1;

  void validate() const;
};

void to_json(json& j, const RunConfig& c);
/// Missing keys keep their defaults.
void from_json(const json& j, RunConfig& c);

struct RunReport {
  NodeId best_node;
  double best_reward = kScoreMin;
  int iterations_used = 0;
  bool converged = false;
  /// Entry t holds the top-k rewards after iteration t (entry 0: root only).
  std::vector<std::vector<double>> reward_trace;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> diagnostics;
};

void to_json(json& j, const RunReport& r);
void from_json(const json& j, RunReport& r);

/// Top-k evaluated nodes with p_i = R_i / sum of R over that set.
struct SelectionCandidates {
  std::vector<NodeId> nodes;
  std::vector<double> probabilities;
};

SelectionCandidates selection_probabilities(const SearchTree& tree, std::size_t top_k);

/// Uniform double in [0,1) from one raw 64-bit draw (53 high bits).
double unit_draw(std::mt19937_64& rng);

/// Samples one of the top-k evaluated nodes in proportion to reward.
/// StateError when no node is evaluated.
NodeId select(const SearchTree& tree, std::size_t top_k, std::mt19937_64& rng);

/// The k highest rewards in the tree, descending.
std::vector<double> top_rewards(const SearchTree& tree, std::size_t top_k);

/// Per-rank comparison of the last two trace entries. A rank missing from
/// one entry only counts as a change.
bool check_convergence(const std::vector<std::vector<double>>& trace, double epsilon,
                       std::size_t top_k);

/// Parses a {"prompts", "script", "interpreter_hint"} object into a
/// validated workflow.
Workflow workflow_from_reply(const json& reply, std::string id, Timestamp created_at);

/// Schema of the {"workflow": {...}} reply used by initial and revision prompts.
const json& workflow_reply_schema();

/// Experiences rendered for the refinement prompt.
std::string describe_experiences(const std::vector<Experience>& experiences);

/// Everything one run needs from outside.
struct EngineDeps {
  LlmGateway& gateway;
  const PromptPack& prompts;
  const Executor& executor;
};

/// The optimization loop bound to one run directory. Loop state (trace,
/// rng, metric cache, workflow counter) is checkpointed to state.json after
/// every iteration, so a new engine on the same directory resumes exactly.
class SearchEngine {
 public:
  /// Fresh run: `store` must be new.
  SearchEngine(RunConfig config, EngineDeps deps, RunStore& store);

  /// Re-open an existing run from state.json + tree.json. `config_override`
  /// replaces the stored configuration (e.g. a larger max_iterations).
  static std::unique_ptr<SearchEngine> resume(EngineDeps deps, RunStore& store,
                                              std::optional<RunConfig> config_override = {});

  /// Wire gateway transcripts into the event log as llm-call events.
  void attach_transcript();

  /// Next "wf-NNNN" id.
  std::string next_workflow_id();

  /// Full reward pipeline for `workflow` as node `node` of `iteration`.
  /// Execution failures give the floor reward; judge failures throw.
  EvaluationResult evaluate(const Workflow& workflow, int iteration, NodeId node);

  /// Evaluates the baseline, installs it as the root, emits `init`.
  NodeId install_root(const Workflow& workflow);

  /// New workflow + modification for the selected node.
  std::pair<Workflow, ModificationRecord> refine(NodeId selected);

  /// Sets the node's exact reward and appends its experience to every ancestor.
  std::vector<NodeId> backpropagate(NodeId node, const EvaluationResult& result,
                                    const ModificationRecord& modification, int iteration);

  /// Runs until convergence, max_iterations, or abort.
  RunReport run();

  const SearchTree& tree() const;
  bool has_tree() const { return tree_.has_value(); }
  const RunConfig& config() const { return config_; }
  const MetricForge& metric_forge() const { return forge_; }
  RunStore& store() { return store_; }
  const EngineDeps& deps() const { return deps_; }
  /// Endpoint descriptor handed to scripts; nullopt under NetworkPolicy::None.
  std::optional<json> llm_descriptor() const;

  /// Writes state.json now.
  void checkpoint() const { save_state(status_); }

  /// Report for the current state without running anything.
  RunReport report() const;

 private:
  SearchEngine(RunConfig config, EngineDeps deps, RunStore& store, bool fresh);
  void save_state(const std::string& status) const;
  void load_state(const json& state);
  std::uint64_t sample_seed(NodeId node) const;

  RunConfig config_;
  EngineDeps deps_;
  RunStore& store_;
  MetricForge forge_;
  RewardSystem rewards_;
  std::unique_ptr<LlmProxy> proxy_;
  std::optional<SearchTree> tree_;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> trace_;
  std::optional<MetricSet> metric_cache_;
  int consecutive_skips_ = 0;
  int workflow_counter_ = 0;
  std::string status_ = "initializing";
  std::vector<std::string> diagnostics_;
  bool converged_ = false;
  bool aborted_ = false;
  std::string abort_reason_;
};

}  // namespace wfs
