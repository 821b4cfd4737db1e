#include "wfs/config.hpp"

#include <fstream>

#include "wfs/errors.hpp"

namespace wfs {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::weakly_canonical(path);
}

ProviderConfig provider_from_json(const json& j) {
  ProviderConfig p;
  p.endpoint = j.at("endpoint").get<std::string>();
  p.model = j.at("model").get<std::string>();
  p.temperature = j.value("temperature", p.temperature);
  p.api_key_env = j.value("api_key_env", p.api_key_env);
  p.timeout_s = j.value("timeout_s", p.timeout_s);
  return p;
}

json provider_to_json(const ProviderConfig& p) {
  return {{"endpoint", p.endpoint},
          {"model", p.model},
          {"temperature", p.temperature},
          {"api_key_env", p.api_key_env},
          {"timeout_s", p.timeout_s}};
}

}  // namespace

AppConfig AppConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  AppConfig c;
  if (j.contains("run")) c.run = j["run"].get<RunConfig>();

  if (j.contains("llm")) {
    const json& llm = j["llm"];
    if (llm.contains("scripted")) {
      c.scripted = resolve(base_dir, llm["scripted"].get<std::string>());
    } else {
      c.optimizer = provider_from_json(llm.at("optimizer"));
      c.evaluator = provider_from_json(llm.at("evaluator"));
    }
  }
  if (j.contains("budget")) {
    const json& b = j["budget"];
    c.budget.max_calls_per_run = b.value("max_calls_per_run", c.budget.max_calls_per_run);
    c.budget.max_tokens_per_call = b.value("max_tokens_per_call", c.budget.max_tokens_per_call);
    c.budget.retry_limit = b.value("retry_limit", c.budget.retry_limit);
    c.budget.backoff_ms = b.value("backoff_ms", c.budget.backoff_ms);
    c.budget.max_in_flight = b.value("max_in_flight", c.budget.max_in_flight);
  }
  if (j.contains("executor")) {
    const json& e = j["executor"];
    c.limits.wall_timeout_s = e.value("wall_timeout_s", c.limits.wall_timeout_s);
    c.limits.max_stdout_bytes = e.value("max_stdout_bytes", c.limits.max_stdout_bytes);
    c.limits.allowed_env = e.value("allowed_env", c.limits.allowed_env);
    if (e.contains("network")) c.limits.network = parse_network_policy(e["network"]);
    if (e.contains("interpreters"))
      for (auto& [hint, argv] : e["interpreters"].items())
        c.interpreters[hint] = argv.get<std::vector<std::string>>();
  }
  if (j.contains("prompts")) c.prompt_pack = resolve(base_dir, j["prompts"].get<std::string>());
  if (j.contains("runs_dir")) c.runs_dir = resolve(base_dir, j["runs_dir"].get<std::string>());
  c.budget.validate();
  c.limits.validate();
  return c;
}

AppConfig AppConfig::load(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError("config " + file.string() + ": " + e.what(), e.byte);
  }
  return from_json(j, fs::absolute(file).parent_path());
}

json AppConfig::to_json() const {
  json llm;
  if (scripted) {
    llm = {{"scripted", scripted->string()}};
  } else {
    llm = {{"optimizer", provider_to_json(optimizer)}, {"evaluator", provider_to_json(evaluator)}};
  }
  json j = {{"run", run},
            {"llm", llm},
            {"budget",
             {{"max_calls_per_run", budget.max_calls_per_run},
              {"max_tokens_per_call", budget.max_tokens_per_call},
              {"retry_limit", budget.retry_limit},
              {"backoff_ms", budget.backoff_ms},
              {"max_in_flight", budget.max_in_flight}}},
            {"executor",
             {{"wall_timeout_s", limits.wall_timeout_s},
              {"max_stdout_bytes", limits.max_stdout_bytes},
              {"allowed_env", limits.allowed_env},
              {"network", to_string(limits.network)},
              {"interpreters", interpreters}}},
            {"runs_dir", fs::absolute(runs_dir).string()}};
  if (prompt_pack) j["prompts"] = prompt_pack->string();
  return j;
}

std::unique_ptr<LlmGateway> build_gateway(const AppConfig& cfg) {
  if (cfg.scripted) {
    auto provider = ScriptedProvider::from_file(cfg.scripted->string());
    return std::make_unique<LlmGateway>(cfg.budget, RoleBinding{provider, "scripted", 0.7},
                                        RoleBinding{provider, "scripted", 0.7});
  }
  if (cfg.optimizer.endpoint.empty() || cfg.evaluator.endpoint.empty())
    throw ValidationError("config needs llm.scripted or llm.optimizer + llm.evaluator endpoints");
  auto make = [](const ProviderConfig& p) {
    return RoleBinding{std::make_shared<OpenAiProvider>(
                           OpenAiConfig{p.endpoint, p.api_key_env, p.timeout_s}),
                       p.model, p.temperature};
  };
  return std::make_unique<LlmGateway>(cfg.budget, make(cfg.optimizer), make(cfg.evaluator));
}

PromptPack load_prompt_pack(const AppConfig& cfg) {
  if (cfg.prompt_pack) return PromptPack::from_file(cfg.prompt_pack->string());
  return PromptPack::builtin();
}

Executor build_executor(const AppConfig& cfg) { return Executor(cfg.interpreters, cfg.limits); }

std::unique_ptr<RunContext> RunContext::create(const AppConfig& cfg, const fs::path& dir) {
  cfg.run.validate();
  auto ctx = std::make_unique<RunContext>();
  ctx->config = cfg;
  ctx->gateway = build_gateway(cfg);
  ctx->prompts = load_prompt_pack(cfg);
  ctx->executor = std::make_unique<Executor>(build_executor(cfg));
  ctx->store = std::make_unique<RunStore>(dir, RunStore::Mode::Create);
  ctx->store->save_json("app.json", cfg.to_json());
  ctx->engine = std::make_unique<SearchEngine>(cfg.run, ctx->deps(), *ctx->store);
  ctx->engine->attach_transcript();
  ctx->hitl = std::make_unique<HitlController>(*ctx->engine);
  return ctx;
}

std::unique_ptr<RunContext> RunContext::open(const fs::path& dir, std::optional<AppConfig> cfg) {
  if (!fs::exists(dir / "app.json")) throw NotFoundError("no run at " + dir.string());
  auto ctx = std::make_unique<RunContext>();
  ctx->store = std::make_unique<RunStore>(dir, RunStore::Mode::Open);
  ctx->config = cfg ? *cfg : AppConfig::from_json(ctx->store->load_json("app.json"), dir);
  ctx->gateway = build_gateway(ctx->config);
  ctx->prompts = load_prompt_pack(ctx->config);
  ctx->executor = std::make_unique<Executor>(build_executor(ctx->config));
  ctx->engine = SearchEngine::resume(ctx->deps(), *ctx->store,
                                     cfg ? std::optional<RunConfig>(cfg->run) : std::nullopt);
  ctx->engine->attach_transcript();
  ctx->hitl = std::make_unique<HitlController>(*ctx->engine);
  if (ctx->store->has_json("session.json"))
    ctx->hitl->restore(ctx->store->load_json("session.json").get<HitlSession>());
  return ctx;
}

}  // namespace wfs
