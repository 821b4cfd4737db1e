#pragma once

#include <string>
#include <vector>

#include "wfs/llm_gateway.hpp"
#include "wfs/metric.hpp"
#include "wfs/prompt_pack.hpp"
#include "wfs/sample.hpp"
#include "wfs/scores.hpp"
#include "wfs/workflow.hpp"

namespace wfs {

/// Workflow rendered for prompts: every template, then the script.
std::string describe_workflow(const Workflow& w);

/// The LLM-backed half of the reward: pointwise sample judging (evaluator
/// role) and introspective workflow review (optimizer role).
class RewardSystem {
 public:
  /// `judge_concurrency` > 1 issues per-cell judge calls in parallel; the
  /// matrix is still assembled in (sample, metric) order.
  RewardSystem(LlmGateway& gateway, const PromptPack& prompts, int judge_concurrency = 1);

  /// One judge call per (sample, metric). Out-of-range scores are never
  /// clamped: the call is re-asked once, then EvaluationError.
  ScoreMatrix score_samples(const std::string& task, const std::vector<Sample>& samples,
                            const MetricSet& metrics);

  /// Six sub-scores plus rationale; missing or out-of-range sub-scores get one
  /// re-ask, then EvaluationError.
  WorkflowQuality score_workflow(const std::string& task, const Workflow& workflow);

 private:
  std::pair<double, std::string> judge_cell(const std::string& task, const Sample& sample,
                                            const Metric& metric, std::uint64_t nonce);

  LlmGateway& gateway_;
  const PromptPack& prompts_;
  int judge_concurrency_;
};

}  // namespace wfs
