#include "test_support.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "wfs/errors.hpp"

namespace wfs::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "wfs-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw IoError("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path fixture_path(const std::string& relative) { return fs::path(WFS_FIXTURE_DIR) / relative; }

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fixture_script(const std::string& name) { return read_text(fixture_path("scripts/" + name)); }

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
}

Workflow make_workflow(const std::string& id, const std::string& script, const std::string& hint) {
  Workflow w;
  w.id = id;
  w.prompts.templates["generate"] = {"Write one hard problem about {{topic}}.", {"topic"}};
  w.code.script = script;
  w.code.interpreter_hint = hint;
  w.created_at = 1000;
  return w;
}

json workflow_object(const std::string& script, const std::string& hint, const std::string& prompt) {
  return {{"prompts", {{"generate", prompt}}}, {"script", script}, {"interpreter_hint", hint}};
}

json quality_reply(double v, const std::string& rationale) {
  return {{"code", {{"clarity", v}, {"efficiency", v}, {"robustness", v}}},
          {"prompt", {{"clarity", v}, {"specificity", v}, {"effectiveness", v}}},
          {"rationale", rationale}};
}

json score_reply(double s, const std::string& why) { return {{"score", s}, {"justification", why}}; }

json metrics_reply(const std::vector<std::string>& names) {
  json metrics = json::array();
  for (const auto& n : names) {
    metrics.push_back({{"name", n},
                       {"definition", n + " of the generated problem and its worked answer"},
                       {"positive_exemplar", "A problem whose " + n + " is excellent"},
                       {"negative_exemplar", "A problem whose " + n + " is poor"}});
  }
  return {{"metrics", metrics}};
}

json refinement(const std::string& description, const std::string& script, const std::string& kind) {
  return {{"modification", {{"description", description}, {"kind", kind}}},
          {"workflow", workflow_object(script)}};
}

std::vector<json> improving_refinements(int count) {
  const std::string base = fixture_script("emit_samples.py");
  std::vector<json> out;
  for (int i = 1; i <= count; ++i) {
    const std::string desc = i == 1 ? "Added self-verification step for mathematical correctness"
                                    : "Refinement " + std::to_string(i) + ": tighter answer format";
    out.push_back(refinement(desc, base + "# revision " + std::to_string(i) + "\n",
                             i % 2 ? "code-edit" : "prompt-edit"));
  }
  return out;
}

json scenario_script(const Scenario& s) {
  json matchers = json::array();
  matchers.push_back({{"contains", "### task: initial-workflow"},
                      {"role", "optimizer"},
                      {"responses", {{{"workflow", workflow_object(s.initial_script)}}}}});
  matchers.push_back({{"contains", "### task: revise-workflow"},
                      {"role", "optimizer"},
                      {"responses", {{{"workflow", workflow_object(s.initial_script + "# revised\n")}}}}});
  if (s.refine_transport_failure) {
    matchers.push_back({{"contains", "### task: refine-workflow"},
                        {"responses", {{{"$error", "503 service unavailable"}}}}});
  } else if (!s.refine_missing) {
    std::vector<json> refs = s.refinements.empty() ? improving_refinements(1) : s.refinements;
    matchers.push_back({{"contains", "### task: refine-workflow"},
                        {"role", "optimizer"},
                        {"responses", refs}});
  }
  matchers.push_back({{"contains", "### task: propose-metrics"},
                      {"role", "evaluator"},
                      {"responses", {metrics_reply(s.metric_names)}}});
  json judge = json::array();
  for (double v : s.judge_scores) judge.push_back(score_reply(v));
  matchers.push_back({{"contains", "### task: score-sample"}, {"role", "evaluator"}, {"responses", judge}});
  json quality = json::array();
  for (double v : s.workflow_quality) quality.push_back(quality_reply(v));
  matchers.push_back(
      {{"contains", "### task: score-workflow"}, {"role", "optimizer"}, {"responses", quality}});
  matchers.push_back({{"contains", "### task: generate-record"},
                      {"role", "evaluator"},
                      {"responses", {"proxied completion"}}});
  return {{"matchers", matchers}};
}

AppConfig scripted_config(const json& script, const fs::path& dir, RunConfig run) {
  fs::create_directories(dir);
  const fs::path file = dir / "provider.json";
  write_text(file, script.dump(2));
  AppConfig cfg;
  cfg.run = std::move(run);
  cfg.scripted = file;
  cfg.budget.backoff_ms = 0;
  cfg.limits.wall_timeout_s = 20;
  cfg.runs_dir = dir / "runs";
  return cfg;
}

RunConfig default_run(const std::string& task) {
  RunConfig r;
  r.task = task;
  r.hitl_mode = HitlMode::Auto;
  r.rng_seed = 7;
  return r;
}

}  // namespace wfs::testing
