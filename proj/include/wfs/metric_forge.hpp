#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include "wfs/llm_gateway.hpp"
#include "wfs/metric.hpp"
#include "wfs/prompt_pack.hpp"
#include "wfs/sample.hpp"

namespace wfs {

enum class MetricMode {
  /// Propose-and-select at every search iteration.
  Iterative,
  /// Propose-and-select at iteration 1 only; later iterations reuse it.
  Once,
};

std::string to_string(MetricMode m);
MetricMode parse_metric_mode(const std::string& s);

struct MetricForgeOptions {
  std::size_t candidates = 3;
  std::size_t cap = MetricSet::kDefaultCap;
  Pairing pairing = Pairing::Optimal;
  MetricSimilarity similarity = token_jaccard;
};

/// What one metrics_for_iteration call did; persisted with the iteration.
struct MetricPipelineResult {
  MetricSet chosen;
  bool generated = false;
  std::vector<MetricSet> candidates;
  std::vector<std::string> dropped;
  std::size_t chosen_index = 0;
};

void to_json(json& j, const MetricPipelineResult& r);

class MetricForge {
 public:
  MetricForge(LlmGateway& gateway, const PromptPack& prompts, MetricForgeOptions options = {});

  /// `options.candidates` independent proposals. A candidate that still
  /// fails validation after the re-ask is dropped; fewer than two survivors
  /// is a GenerationError.
  std::vector<MetricSet> propose_metric_sets(const std::string& task,
                                             const std::vector<Sample>& samples, int iteration,
                                             std::vector<std::string>* dropped = nullptr);

  /// Iterative: full pipeline every call. Once: pipeline at iteration 1,
  /// `cached` afterwards (which must then be present).
  MetricPipelineResult metrics_for_iteration(MetricMode mode, int iteration,
                                             const std::optional<MetricSet>& cached,
                                             const std::string& task,
                                             const std::vector<Sample>& samples);

  /// Full propose + select pipelines run so far.
  int pipelines_run() const { return pipelines_.load(); }

 private:
  MetricPipelineResult run_pipeline(int iteration, const std::string& task,
                                    const std::vector<Sample>& samples);

  LlmGateway& gateway_;
  const PromptPack& prompts_;
  MetricForgeOptions options_;
  std::atomic<int> pipelines_{0};
};

/// Samples rendered for prompts: "Sample i:\n<payload>" blocks.
std::string format_samples(const std::vector<Sample>& samples);

}  // namespace wfs
