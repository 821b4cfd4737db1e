#include "wfs/evaluation.hpp"

#include <cmath>

namespace wfs {

double EvaluationResult::rederivation_error() const {
  if (execution_failed) return std::abs(hybrid_reward - kScoreMin);
  if (!workflow_quality) return std::abs(hybrid_reward - kScoreMin) + 1.0;
  const double s = aggregate_sample_score(score_matrix);
  const double w = workflow_quality->score();
  return std::abs(wfs::hybrid_reward(s, w, weights) - hybrid_reward);
}

void to_json(json& j, const EvaluationResult& r) {
  j = {{"samples", r.samples},
       {"metric_set", r.metric_set},
       {"score_matrix", r.score_matrix},
       {"workflow_quality", r.workflow_quality ? json(*r.workflow_quality) : json()},
       {"weights", r.weights},
       {"sample_score", r.sample_score},
       {"workflow_score", r.workflow_score},
       {"hybrid_reward", r.hybrid_reward},
       {"suggestions", r.suggestions},
       {"execution_failed", r.execution_failed},
       {"failure", r.failure}};
}

void from_json(const json& j, EvaluationResult& r) {
  r.samples = j.at("samples").get<std::vector<Sample>>();
  r.metric_set = j.at("metric_set").get<MetricSet>();
  r.score_matrix = j.at("score_matrix").get<ScoreMatrix>();
  if (j.contains("workflow_quality") && !j["workflow_quality"].is_null()) {
    r.workflow_quality = j["workflow_quality"].get<WorkflowQuality>();
  } else {
    r.workflow_quality.reset();
  }
  r.weights = j.at("weights").get<RewardWeights>();
  r.sample_score = j.at("sample_score").get<double>();
  r.workflow_score = j.at("workflow_score").get<double>();
  r.hybrid_reward = j.at("hybrid_reward").get<double>();
  r.suggestions = j.at("suggestions").get<std::string>();
  r.execution_failed = j.at("execution_failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
}

}  // namespace wfs
