#include "wfs/hitl.hpp"

#include "wfs/errors.hpp"
#include "wfs/metric_forge.hpp"
#include "wfs/reward_system.hpp"

namespace wfs {

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingFeedback: return "awaiting-feedback";
    case SessionStatus::Revising: return "revising";
    case SessionStatus::Approved: return "approved";
  }
  return "awaiting-feedback";
}

SessionStatus parse_session_status(const std::string& s) {
  if (s == "awaiting-feedback") return SessionStatus::AwaitingFeedback;
  if (s == "revising") return SessionStatus::Revising;
  if (s == "approved") return SessionStatus::Approved;
  throw ValidationError("unknown session status '" + s + "'");
}

void to_json(json& j, const FeedbackSubmission& f) {
  j = {{"round", f.round}, {"text", f.text}, {"submitted_at", f.submitted_at}};
}

void from_json(const json& j, FeedbackSubmission& f) {
  f.round = j.at("round").get<int>();
  f.text = j.at("text").get<std::string>();
  f.submitted_at = j.value("submitted_at", Timestamp{0});
}

void to_json(json& j, const HitlSession& s) {
  j = {{"id", s.id},
       {"task", s.task},
       {"round", s.round},
       {"remaining_rounds", s.remaining_rounds()},
       {"status", to_string(s.status)},
       {"current_workflow", s.current_workflow},
       {"current_samples", s.current_samples},
       {"feedback", s.feedback},
       {"root", s.root ? json(*s.root) : json()}};
}

void from_json(const json& j, HitlSession& s) {
  s.id = j.at("id").get<std::string>();
  s.task = j.at("task").get<std::string>();
  s.round = j.at("round").get<int>();
  s.status = parse_session_status(j.at("status").get<std::string>());
  s.current_workflow = j.at("current_workflow").get<Workflow>();
  s.current_samples = j.at("current_samples").get<std::vector<Sample>>();
  s.feedback = j.value("feedback", std::vector<FeedbackSubmission>{});
  if (j.contains("root") && !j["root"].is_null()) s.root = j["root"].get<NodeId>();
}

namespace {

constexpr const char* kContractDoc =
    "The script reads one JSON object on standard input with keys contract, n, task, prompts "
    "(name -> template text), llm (an OpenAI-compatible endpoint {base_url, model, api_key}, or "
    "null), seed, batch and workflow_id. It must print exactly n lines to standard output, each a "
    "JSON object {\"index\": i, \"payload\": {...}} with i = 0..n-1. Diagnostics go to standard "
    "error; a nonzero exit status marks the run as failed.";

std::string join_keys(const InterpreterRegistry& r) {
  std::string out;
  for (const auto& [name, argv] : r) out += (out.empty() ? "" : ", ") + name;
  return out;
}

}  // namespace

HitlController::HitlController(SearchEngine& engine) : engine_(engine) {}

void HitlController::persist() const {
  engine_.store().save_json("session.json", json(session_));
  engine_.checkpoint();
}

std::vector<Sample> HitlController::sample_batch(const Workflow& wf) {
  RunParameters params;
  params.n = engine_.config().batch_size;
  params.task = engine_.config().task;
  params.llm = engine_.llm_descriptor();
  params.seed = engine_.config().rng_seed;
  params.batch = static_cast<std::uint64_t>(session_.round);
  return engine_.deps().executor.execute(wf, params, NodeId{0}).samples;
}

Workflow HitlController::request_workflow(const std::string& template_name,
                                          const std::map<std::string, std::string>& vars,
                                          std::uint64_t nonce) {
  ChatExchange ex;
  ex.role = LlmRole::Optimizer;
  ex.purpose = template_name;
  ex.nonce = nonce;
  ex.messages = engine_.deps().prompts.render(template_name, vars);
  const auto& interpreters = engine_.deps().executor.interpreters();
  const StructuredCheck check = [&](const json& v) -> std::optional<std::string> {
    try {
      Workflow probe = workflow_from_reply(v.at("workflow"), "probe", 0);
      if (!interpreters.count(probe.code.interpreter_hint))
        return "unknown interpreter_hint '" + probe.code.interpreter_hint + "'";
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
    return std::nullopt;
  };
  const json reply = engine_.deps().gateway.complete_structured(ex, workflow_reply_schema(), check);
  return workflow_from_reply(reply.at("workflow"), engine_.next_workflow_id(), now_ms());
}

const HitlSession& HitlController::start() {
  if (started_) throw StateError("session " + session_.id + " already started");
  const RunConfig& cfg = engine_.config();
  cfg.validate();

  session_ = HitlSession{};
  session_.id = engine_.store().run_id();
  session_.task = cfg.task;
  session_.current_workflow = request_workflow(
      "initial-workflow",
      {{"task", cfg.task},
       {"contract", to_string(EntryContract::StdinJsonStdoutJsonl)},
       {"contract_doc", kContractDoc},
       {"interpreters", join_keys(engine_.deps().executor.interpreters())}},
      1);
  session_.current_samples = sample_batch(session_.current_workflow);
  session_.status = SessionStatus::AwaitingFeedback;
  started_ = true;
  persist();

  if (cfg.hitl_mode == HitlMode::Auto) approve();
  return session_;
}

const HitlSession& HitlController::submit_feedback(const std::string& text) {
  if (session_.status == SessionStatus::Approved)
    throw StateError("session " + session_.id + " is approved and immutable");
  if (session_.status != SessionStatus::AwaitingFeedback)
    throw StateError("session " + session_.id + " is not awaiting feedback");
  if (text.empty()) throw ValidationError("feedback text must not be empty");
  if (text.size() > FeedbackSubmission::kMaxLength)
    throw ValidationError("feedback text exceeds " +
                          std::to_string(FeedbackSubmission::kMaxLength) + " characters");
  if (session_.round >= HitlSession::kMaxRounds)
    throw LimitError("session " + session_.id + " reached round " +
                     std::to_string(HitlSession::kMaxRounds) + "; approve the workflow");

  const HitlSession before = session_;
  session_.status = SessionStatus::Revising;
  persist();
  try {
    std::string history;
    for (const auto& f : session_.feedback)
      history += "Round " + std::to_string(f.round) + ": " + f.text + "\n";
    Workflow revised = request_workflow(
        "revise-workflow",
        {{"task", session_.task},
         {"workflow", describe_workflow(session_.current_workflow)},
         {"samples", format_samples(session_.current_samples)},
         {"feedback_history", history.empty() ? "(none)" : history},
         {"feedback", text}},
        static_cast<std::uint64_t>(session_.round) + 1);
    FeedbackSubmission sub{session_.round, text, now_ms()};
    ++session_.round;
    session_.current_samples = sample_batch(revised);
    session_.current_workflow = std::move(revised);
    session_.feedback.push_back(sub);
    session_.status = SessionStatus::AwaitingFeedback;
    engine_.store().append_event(EventKind::HitlFeedback, {{"session", session_.id},
                                                           {"round", sub.round},
                                                           {"feedback", sub.text},
                                                           {"submitted_at", sub.submitted_at},
                                                           {"workflow", session_.current_workflow.id}});
  } catch (...) {
    session_ = before;
    persist();
    throw;
  }
  persist();
  return session_;
}

NodeId HitlController::approve() {
  if (session_.status == SessionStatus::Approved) return *session_.root;
  if (!started_) throw StateError("session has no workflow yet");
  if (session_.status == SessionStatus::Revising)
    throw StateError("session " + session_.id + " is revising; approve after the revision");
  const NodeId root = engine_.install_root(session_.current_workflow);
  session_.root = root;
  session_.status = SessionStatus::Approved;
  persist();
  return root;
}

}  // namespace wfs
