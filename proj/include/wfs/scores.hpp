#pragma once

#include <string>
#include <vector>

#include "wfs/json_util.hpp"

namespace wfs {

/// Every score in the system lives on the judges' 1..5 scale.
inline constexpr double kScoreMin = 1.0;
inline constexpr double kScoreMax = 5.0;

inline bool in_score_range(double x) { return x >= kScoreMin && x <= kScoreMax; }

struct RewardWeights {
  double sample = 0.5;
  double workflow = 0.5;

  /// Non-negative and summing to 1 within 1e-9.
  void validate() const;
  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

/// Judge scores s_ij for sample i under metric j, with one justification per
/// cell. Rows are samples, columns are metrics.
struct ScoreMatrix {
  std::vector<std::string> metric_names;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<std::string>> justifications;

  std::size_t samples() const { return scores.size(); }
  std::size_t metrics() const { return metric_names.size(); }

  /// Rectangular, fully populated, in range, non-empty justifications.
  void validate() const;
  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

struct CodeQuality {
  double clarity = 0;
  double efficiency = 0;
  double robustness = 0;
  friend bool operator==(const CodeQuality&, const CodeQuality&) = default;
};

struct PromptQuality {
  double clarity = 0;
  double specificity = 0;
  double effectiveness = 0;
  friend bool operator==(const PromptQuality&, const PromptQuality&) = default;
};

struct WorkflowQuality {
  CodeQuality code;
  PromptQuality prompt;
  std::string rationale;

  void validate() const;
  /// Unweighted mean of the six sub-scores.
  double score() const;
  friend bool operator==(const WorkflowQuality&, const WorkflowQuality&) = default;
};

/// Flat mean over every cell.
double aggregate_sample_score(const ScoreMatrix& m);

/// w_sample * sample_score + w_workflow * workflow_score. Inputs must be on
/// the 1..5 scale.
double hybrid_reward(double sample_score, double workflow_score, const RewardWeights& w);

/// All justifications in (sample, metric) order, one per line, prefixed with
/// the sample index and metric name.
std::string collect_suggestions(const ScoreMatrix& m);

void to_json(json& j, const RewardWeights& w);
void from_json(const json& j, RewardWeights& w);
void to_json(json& j, const ScoreMatrix& m);
void from_json(const json& j, ScoreMatrix& m);
void to_json(json& j, const WorkflowQuality& q);
void from_json(const json& j, WorkflowQuality& q);

}  // namespace wfs
