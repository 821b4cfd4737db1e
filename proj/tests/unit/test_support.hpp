#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "wfs/config.hpp"
#include "wfs/json_util.hpp"
#include "wfs/workflow.hpp"

namespace wfs::testing {

/// Removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture_path(const std::string& relative);
std::string read_text(const std::filesystem::path& file);
std::string fixture_script(const std::string& name);
void write_text(const std::filesystem::path& file, const std::string& text);

/// Single-prompt workflow running `script` under `hint`.
Workflow make_workflow(const std::string& id, const std::string& script,
                       const std::string& hint = "python3");

/// {"prompts": ..., "script": ..., "interpreter_hint": ...}
json workflow_object(const std::string& script, const std::string& hint = "python3",
                     const std::string& prompt = "Write one hard problem about {{topic}}.");

json quality_reply(double v, const std::string& rationale = "reviewed");
json score_reply(double s, const std::string& why = "meets the exemplar");
json metrics_reply(const std::vector<std::string>& names);

/// Knobs for a scripted end-to-end scenario.
struct Scenario {
  std::string initial_script = fixture_script("emit_samples.py");
  /// One entry per refinement, in call order; the last repeats.
  std::vector<json> refinements;
  /// Score-workflow values in call order (root first); the last repeats.
  std::vector<double> workflow_quality = {3.0};
  /// Judge scores in call order; the last repeats.
  std::vector<double> judge_scores = {3.0};
  std::vector<std::string> metric_names = {"Correctness", "Clarity"};
  /// Replace the refine matcher with transport failures.
  bool refine_transport_failure = false;
  /// Leave the refine prompt without a matcher.
  bool refine_missing = false;
};

/// `count` refinements with distinct descriptions, all running emit_samples.py.
std::vector<json> improving_refinements(int count);
json refinement(const std::string& description, const std::string& script,
                const std::string& kind = "mixed");

json scenario_script(const Scenario& s);

/// App config served by `script` (written into `dir`), zero backoff.
AppConfig scripted_config(const json& script, const std::filesystem::path& dir, RunConfig run);

RunConfig default_run(const std::string& task = "Grade-school math word problems with answers");

}  // namespace wfs::testing
