#include "wfs/scores.hpp"

#include <cmath>

#include "wfs/errors.hpp"

namespace wfs {

void RewardWeights::validate() const {
  if (!(sample >= 0.0) || !(workflow >= 0.0))
    throw ValidationError("reward weights must be non-negative");
  if (std::abs(sample + workflow - 1.0) > 1e-9)
    throw ValidationError("reward weights must sum to 1");
}

void ScoreMatrix::validate() const {
  if (scores.empty() || metric_names.empty())
    throw ValidationError("score matrix must have at least one sample and one metric");
  if (justifications.size() != scores.size())
    throw ValidationError("justification rows do not match score rows");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != metric_names.size() || justifications[i].size() != metric_names.size())
      throw ValidationError("score matrix row " + std::to_string(i) + " has wrong width");
    for (std::size_t j = 0; j < scores[i].size(); ++j) {
      if (!in_score_range(scores[i][j]))
        throw ValidationError("score (" + std::to_string(i) + "," + std::to_string(j) +
                              ") outside [1,5]");
      if (justifications[i][j].empty())
        throw ValidationError("empty justification at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
    }
  }
}

void WorkflowQuality::validate() const {
  for (double s : {code.clarity, code.efficiency, code.robustness, prompt.clarity,
                   prompt.specificity, prompt.effectiveness}) {
    if (!in_score_range(s)) throw ValidationError("workflow quality sub-score outside [1,5]");
  }
}

double WorkflowQuality::score() const {
  return (code.clarity + code.efficiency + code.robustness + prompt.clarity +
          prompt.specificity + prompt.effectiveness) /
         6.0;
}

double aggregate_sample_score(const ScoreMatrix& m) {
  m.validate();
  double sum = 0.0;
  for (const auto& row : m.scores)
    for (double s : row) sum += s;
  return sum / static_cast<double>(m.samples() * m.metrics());
}

double hybrid_reward(double sample_score, double workflow_score, const RewardWeights& w) {
  w.validate();
  if (!in_score_range(sample_score)) throw ValidationError("sample score outside [1,5]");
  if (!in_score_range(workflow_score)) throw ValidationError("workflow score outside [1,5]");
  return w.sample * sample_score + w.workflow * workflow_score;
}

std::string collect_suggestions(const ScoreMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.justifications.size(); ++i) {
    for (std::size_t j = 0; j < m.justifications[i].size(); ++j) {
      out += "[sample " + std::to_string(i) + " | " + m.metric_names.at(j) + "] ";
      out += m.justifications[i][j];
      out += '\n';
    }
  }
  return out;
}

void to_json(json& j, const RewardWeights& w) {
  j = {{"sample", w.sample}, {"workflow", w.workflow}};
}

void from_json(const json& j, RewardWeights& w) {
  w.sample = j.at("sample").get<double>();
  w.workflow = j.at("workflow").get<double>();
}

void to_json(json& j, const ScoreMatrix& m) {
  j = {{"metric_names", m.metric_names},
       {"scores", m.scores},
       {"justifications", m.justifications}};
}

void from_json(const json& j, ScoreMatrix& m) {
  m.metric_names = j.at("metric_names").get<std::vector<std::string>>();
  m.scores = j.at("scores").get<std::vector<std::vector<double>>>();
  m.justifications = j.at("justifications").get<std::vector<std::vector<std::string>>>();
}

void to_json(json& j, const WorkflowQuality& q) {
  j = {{"code",
        {{"clarity", q.code.clarity},
         {"efficiency", q.code.efficiency},
         {"robustness", q.code.robustness}}},
       {"prompt",
        {{"clarity", q.prompt.clarity},
         {"specificity", q.prompt.specificity},
         {"effectiveness", q.prompt.effectiveness}}},
       {"rationale", q.rationale}};
}

void from_json(const json& j, WorkflowQuality& q) {
  const auto& c = j.at("code");
  const auto& p = j.at("prompt");
  q.code = {c.at("clarity").get<double>(), c.at("efficiency").get<double>(),
            c.at("robustness").get<double>()};
  q.prompt = {p.at("clarity").get<double>(), p.at("specificity").get<double>(),
              p.at("effectiveness").get<double>()};
  q.rationale = j.value("rationale", std::string());
}

}  // namespace wfs
