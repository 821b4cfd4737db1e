#include "wfs/reward_system.hpp"

#include <future>

#include "wfs/errors.hpp"

namespace wfs {

std::string describe_workflow(const Workflow& w) {
  std::string out = "Workflow " + w.id + "\n";
  for (const auto& [name, tpl] : w.prompts.templates) {
    out += "--- prompt: " + name + " ---\n" + tpl.text + "\n";
  }
  out += "--- script (" + w.code.interpreter_hint + ") ---\n" + w.code.script + "\n";
  return out;
}

namespace {

const json& score_schema() {
  static const json schema = {
      {"type", "object"},
      {"required", {"score", "justification"}},
      {"properties",
       {{"score", {{"type", "number"}, {"minimum", 1}, {"maximum", 5}}},
        {"justification", {{"type", "string"}, {"minLength", 1}}}}}};
  return schema;
}

const json& quality_schema() {
  static const json sub = {{"type", "number"}, {"minimum", 1}, {"maximum", 5}};
  static const json schema = {
      {"type", "object"},
      {"required", {"code", "prompt"}},
      {"properties",
       {{"code",
         {{"type", "object"},
          {"required", {"clarity", "efficiency", "robustness"}},
          {"properties", {{"clarity", sub}, {"efficiency", sub}, {"robustness", sub}}}}},
        {"prompt",
         {{"type", "object"},
          {"required", {"clarity", "specificity", "effectiveness"}},
          {"properties", {{"clarity", sub}, {"specificity", sub}, {"effectiveness", sub}}}}},
        {"rationale", {{"type", "string"}}}}}};
  return schema;
}

}  // namespace

RewardSystem::RewardSystem(LlmGateway& gateway, const PromptPack& prompts, int judge_concurrency)
    : gateway_(gateway), prompts_(prompts), judge_concurrency_(std::max(1, judge_concurrency)) {}

std::pair<double, std::string> RewardSystem::judge_cell(const std::string& task,
                                                        const Sample& sample, const Metric& metric,
                                                        std::uint64_t nonce) {
  ChatExchange ex;
  ex.role = LlmRole::Evaluator;
  ex.purpose = "score-sample";
  ex.nonce = nonce;
  ex.messages = prompts_.render("score-sample", {{"task", task},
                                                 {"metric_name", metric.name},
                                                 {"metric_definition", metric.definition},
                                                 {"positive_exemplar", metric.positive_exemplar},
                                                 {"negative_exemplar", metric.negative_exemplar},
                                                 {"sample_index", std::to_string(sample.index)},
                                                 {"sample", sample.payload.dump(2)}});
  try {
    const json v = gateway_.complete_structured(ex, score_schema());
    return {v["score"].get<double>(), v["justification"].get<std::string>()};
  } catch (const FormatError& e) {
    throw EvaluationError("judge failed on sample " + std::to_string(sample.index) +
                          ", metric '" + metric.name + "': " + e.what());
  }
}

ScoreMatrix RewardSystem::score_samples(const std::string& task, const std::vector<Sample>& samples,
                                        const MetricSet& metrics) {
  if (samples.empty()) throw ValidationError("score_samples needs at least one sample");
  if (metrics.metrics.empty()) throw ValidationError("score_samples needs a non-empty metric set");

  const std::size_t rows = samples.size();
  const std::size_t cols = metrics.metrics.size();
  ScoreMatrix m;
  for (const auto& metric : metrics.metrics) m.metric_names.push_back(metric.name);
  m.scores.assign(rows, std::vector<double>(cols, 0.0));
  m.justifications.assign(rows, std::vector<std::string>(cols));

  const std::size_t cells = rows * cols;
  auto run_cell = [&](std::size_t c) {
    const std::size_t i = c / cols;
    const std::size_t j = c % cols;
    auto [score, why] = judge_cell(task, samples[i], metrics.metrics[j], c + 1);
    m.scores[i][j] = score;
    m.justifications[i][j] = std::move(why);
  };

  if (judge_concurrency_ == 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
  } else {
    const auto width = static_cast<std::size_t>(judge_concurrency_);
    for (std::size_t start = 0; start < cells; start += width) {
      std::vector<std::future<void>> batch;
      for (std::size_t c = start; c < std::min(cells, start + width); ++c)
        batch.push_back(std::async(std::launch::async, run_cell, c));
      for (auto& f : batch) f.get();
    }
  }
  m.validate();
  return m;
}

WorkflowQuality RewardSystem::score_workflow(const std::string& task, const Workflow& workflow) {
  ChatExchange ex;
  ex.role = LlmRole::Optimizer;
  ex.purpose = "score-workflow";
  ex.messages = prompts_.render("score-workflow",
                                {{"task", task}, {"workflow", describe_workflow(workflow)}});
  try {
    const json v = gateway_.complete_structured(ex, quality_schema());
    WorkflowQuality q = v.get<WorkflowQuality>();
    q.validate();
    return q;
  } catch (const FormatError& e) {
    throw EvaluationError(std::string("workflow quality review failed: ") + e.what());
  }
}

}  // namespace wfs
