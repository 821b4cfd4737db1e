#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "wfs/executor.hpp"
#include "wfs/hitl.hpp"
#include "wfs/llm_gateway.hpp"
#include "wfs/prompt_pack.hpp"
#include "wfs/run_store.hpp"
#include "wfs/search_engine.hpp"

namespace wfs {

struct ProviderConfig {
  std::string endpoint;
  std::string model;
  double temperature = 0.7;
  std::string api_key_env = "WFS_API_KEY";
  int timeout_s = 120;
};

/// Whole-application configuration, one JSON file:
///   {"run": {RunConfig}, "llm": {"scripted": path} | {"optimizer": {...}, "evaluator": {...}},
///    "budget": {...}, "executor": {...}, "prompts": path, "runs_dir": path}
struct AppConfig {
  RunConfig run;
  /// Scripted provider file; when set both roles are served from it.
  std::optional<std::filesystem::path> scripted;
  ProviderConfig optimizer;
  ProviderConfig evaluator;
  GatewayBudget budget;
  ExecutionLimits limits;
  InterpreterRegistry interpreters = default_interpreters();
  std::optional<std::filesystem::path> prompt_pack;
  std::filesystem::path runs_dir = "runs";

  /// Relative paths resolve against `base_dir`.
  static AppConfig from_json(const json& j, const std::filesystem::path& base_dir = ".");
  static AppConfig load(const std::filesystem::path& file);
  json to_json() const;
};

std::unique_ptr<LlmGateway> build_gateway(const AppConfig& cfg);
PromptPack load_prompt_pack(const AppConfig& cfg);
Executor build_executor(const AppConfig& cfg);

/// Everything bound to one run directory. Member order matters: the engine
/// refers to the gateway, prompts, executor and store.
struct RunContext {
  AppConfig config;
  std::unique_ptr<LlmGateway> gateway;
  PromptPack prompts;
  std::unique_ptr<Executor> executor;
  std::unique_ptr<RunStore> store;
  std::unique_ptr<SearchEngine> engine;
  std::unique_ptr<HitlController> hitl;

  /// New run directory; the app config is saved next to the events.
  static std::unique_ptr<RunContext> create(const AppConfig& cfg, const std::filesystem::path& dir);
  /// Existing run directory. `cfg` defaults to the saved app.json; its run
  /// section overrides the stored run configuration when given.
  static std::unique_ptr<RunContext> open(const std::filesystem::path& dir,
                                          std::optional<AppConfig> cfg = std::nullopt);

  EngineDeps deps() { return EngineDeps{*gateway, prompts, *executor}; }
};

}  // namespace wfs
