#include "wfs/metric_forge.hpp"

#include "wfs/errors.hpp"

namespace wfs {

std::string to_string(MetricMode m) { return m == MetricMode::Once ? "once" : "iterative"; }

MetricMode parse_metric_mode(const std::string& s) {
  if (s == "once") return MetricMode::Once;
  if (s == "iterative") return MetricMode::Iterative;
  throw ValidationError("unknown metric mode '" + s + "'");
}

void to_json(json& j, const MetricPipelineResult& r) {
  j = {{"chosen", r.chosen},
       {"generated", r.generated},
       {"candidates", r.candidates},
       {"dropped", r.dropped},
       {"chosen_index", r.chosen_index}};
}

std::string format_samples(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += "Sample " + std::to_string(s.index) + ":\n" + s.payload.dump(2) + "\n";
  }
  return out;
}

namespace {

json metric_set_schema(std::size_t cap) {
  const json text = {{"type", "string"}, {"minLength", 1}};
  return {{"type", "object"},
          {"required", {"metrics"}},
          {"properties",
           {{"metrics",
             {{"type", "array"},
              {"minItems", 1},
              {"maxItems", cap},
              {"items",
               {{"type", "object"},
                {"required", {"name", "definition", "positive_exemplar", "negative_exemplar"}},
                {"properties",
                 {{"name", text},
                  {"definition", text},
                  {"positive_exemplar", text},
                  {"negative_exemplar", text}}}}}}}}}};
}

}  // namespace

MetricForge::MetricForge(LlmGateway& gateway, const PromptPack& prompts, MetricForgeOptions options)
    : gateway_(gateway), prompts_(prompts), options_(std::move(options)) {
  if (options_.candidates < 2) throw ValidationError("metric ensemble needs >= 2 candidates");
  if (!options_.similarity) options_.similarity = token_jaccard;
}

std::vector<MetricSet> MetricForge::propose_metric_sets(const std::string& task,
                                                        const std::vector<Sample>& samples,
                                                        int iteration,
                                                        std::vector<std::string>* dropped) {
  if (samples.empty()) throw ValidationError("metric proposal needs at least one sample");
  const json schema = metric_set_schema(options_.cap);
  const std::size_t cap = options_.cap;
  const StructuredCheck unique_names = [cap](const json& v) -> std::optional<std::string> {
    MetricSet probe;
    probe.metrics = v.at("metrics").get<std::vector<Metric>>();
    try {
      probe.validate(cap);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::nullopt;
  };

  const std::string sample_text = format_samples(samples);
  std::vector<MetricSet> out;
  for (std::size_t k = 0; k < options_.candidates; ++k) {
    ChatExchange ex;
    ex.role = LlmRole::Evaluator;
    ex.purpose = "propose-metrics";
    ex.nonce = static_cast<std::uint64_t>(iteration) * 1000 + k + 1;
    ex.messages = prompts_.render("propose-metrics", {{"task", task},
                                                       {"samples", sample_text},
                                                       {"max_metrics", std::to_string(cap)},
                                                       {"nonce", std::to_string(ex.nonce)}});
    try {
      const json v = gateway_.complete_structured(ex, schema, unique_names);
      MetricSet set;
      set.metrics = v.at("metrics").get<std::vector<Metric>>();
      set.iteration = iteration;
      set.provenance = MetricProvenance::Proposed;
      out.push_back(std::move(set));
    } catch (const FormatError& e) {
      if (dropped) dropped->push_back("candidate " + std::to_string(k) + ": " + e.what());
    }
  }
  if (out.size() < 2)
    throw GenerationError("metric generation produced " + std::to_string(out.size()) +
                          " valid candidate(s); at least 2 are required");
  return out;
}

MetricPipelineResult MetricForge::run_pipeline(int iteration, const std::string& task,
                                               const std::vector<Sample>& samples) {
  MetricPipelineResult r;
  r.generated = true;
  r.candidates = propose_metric_sets(task, samples, iteration, &r.dropped);
  r.chosen_index = select_consistent_index(r.candidates, options_.pairing, options_.similarity);
  r.chosen = r.candidates[r.chosen_index];
  r.chosen.provenance = MetricProvenance::Selected;
  ++pipelines_;
  return r;
}

MetricPipelineResult MetricForge::metrics_for_iteration(MetricMode mode, int iteration,
                                                        const std::optional<MetricSet>& cached,
                                                        const std::string& task,
                                                        const std::vector<Sample>& samples) {
  if (mode == MetricMode::Iterative || iteration <= 1) return run_pipeline(iteration, task, samples);
  if (!cached)
    throw ValidationError("metric mode 'once' at iteration " + std::to_string(iteration) +
                          " needs a cached metric set");
  MetricPipelineResult r;
  r.chosen = *cached;
  r.chosen.provenance = MetricProvenance::Cached;
  r.chosen.iteration = iteration;
  return r;
}

}  // namespace wfs
