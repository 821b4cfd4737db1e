#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wfs/metric.hpp"
#include "wfs/sample.hpp"
#include "wfs/scores.hpp"

namespace wfs {

/// Everything the reward pipeline produced for one workflow.
///
/// When the workflow's script failed to run, `execution_failed` is set, the
/// sample/metric/matrix fields are empty, both component scores sit at the
/// floor (1.0) and `failure` carries the diagnostic.
struct EvaluationResult {
  std::vector<Sample> samples;
  MetricSet metric_set;
  ScoreMatrix score_matrix;
  std::optional<WorkflowQuality> workflow_quality;
  RewardWeights weights;
  double sample_score = kScoreMin;
  double workflow_score = kScoreMin;
  double hybrid_reward = kScoreMin;
  std::string suggestions;
  bool execution_failed = false;
  std::string failure;

  /// Recompute the reward from the stored matrix and workflow quality and
  /// compare against `hybrid_reward`. Returns the absolute discrepancy.
  double rederivation_error() const;

  friend bool operator==(const EvaluationResult&, const EvaluationResult&) = default;
};

void to_json(json& j, const EvaluationResult& r);
void from_json(const json& j, EvaluationResult& r);

}  // namespace wfs
