#include "doctest.h"
#include "test_support.hpp"
#include "wfs/errors.hpp"
#include "wfs/hitl.hpp"

using namespace wfs;
using namespace wfs::testing;

namespace {

std::unique_ptr<RunContext> interactive(const TempDir& dir, const Scenario& s = {}) {
  RunConfig run = default_run();
  run.hitl_mode = HitlMode::Interactive;
  run.max_iterations = 1;
  return RunContext::create(scripted_config(scenario_script(s), dir.path(), run), dir / "run");
}

std::size_t count_kind(const RunContext& ctx, EventKind kind) {
  std::size_t n = 0;
  for (const auto& e : read_event_log(ctx.store->dir() / "events.jsonl"))
    if (e.kind == kind) ++n;
  return n;
}

}  // namespace

TEST_SUITE("hitl") {
  TEST_CASE("interactive start waits for feedback with samples") {
    TempDir dir;
    auto ctx = interactive(dir);
    const HitlSession& s = ctx->hitl->start();
    CHECK(s.status == SessionStatus::AwaitingFeedback);
    CHECK(s.round == 1);
    CHECK(s.remaining_rounds() == 2);
    CHECK(s.current_samples.size() == 5);
    CHECK(s.current_workflow.id == "wf-0001");
    CHECK(s.id == "run");
    CHECK_FALSE(ctx->engine->has_tree());
    const json saved = ctx->store->load_json("session.json");
    CHECK(saved["status"] == "awaiting-feedback");
    CHECK(saved["remaining_rounds"] == 2);
    CHECK_THROWS_AS(ctx->hitl->start(), StateError);
  }

  TEST_CASE("feedback revises the workflow and records an event") {
    TempDir dir;
    auto ctx = interactive(dir);
    ctx->hitl->start();
    const std::string before = ctx->hitl->session().current_workflow.content_digest();
    const HitlSession& s = ctx->hitl->submit_feedback("Problems should need at least two steps.");
    CHECK(s.round == 2);
    CHECK(s.status == SessionStatus::AwaitingFeedback);
    REQUIRE(s.feedback.size() == 1);
    CHECK(s.feedback[0].round == 1);
    CHECK(s.current_workflow.content_digest() != before);
    CHECK(s.current_workflow.id == "wf-0002");
    CHECK(count_kind(*ctx, EventKind::HitlFeedback) == 1);
  }

  TEST_CASE("feedback rounds are capped at three") {
    TempDir dir;
    auto ctx = interactive(dir);
    ctx->hitl->start();
    ctx->hitl->submit_feedback("first");
    ctx->hitl->submit_feedback("second");
    CHECK(ctx->hitl->session().round == 3);
    CHECK(ctx->hitl->session().remaining_rounds() == 0);
    CHECK_THROWS_AS(ctx->hitl->submit_feedback("third"), LimitError);
    CHECK(ctx->hitl->session().status == SessionStatus::AwaitingFeedback);
    CHECK(count_kind(*ctx, EventKind::HitlFeedback) == 2);
  }

  TEST_CASE("feedback text is validated") {
    TempDir dir;
    auto ctx = interactive(dir);
    ctx->hitl->start();
    CHECK_THROWS_AS(ctx->hitl->submit_feedback(""), ValidationError);
    CHECK_THROWS_AS(ctx->hitl->submit_feedback(std::string(2001, 'x')), ValidationError);
    CHECK_NOTHROW(ctx->hitl->submit_feedback(std::string(2000, 'x')));
  }

  TEST_CASE("approval installs the root and freezes the session") {
    TempDir dir;
    auto ctx = interactive(dir);
    ctx->hitl->start();
    ctx->hitl->submit_feedback("Use harder numbers.");
    const NodeId root = ctx->hitl->approve();
    CHECK(root == NodeId{0});
    CHECK(ctx->hitl->session().status == SessionStatus::Approved);
    CHECK(ctx->engine->tree().node(root).workflow == ctx->hitl->session().current_workflow);
    CHECK(ctx->hitl->approve() == root);
    CHECK_THROWS_AS(ctx->hitl->submit_feedback("more"), StateError);
    CHECK(count_kind(*ctx, EventKind::Init) == 1);
  }

  TEST_CASE("a failed revision keeps the prior state") {
    TempDir dir;
    Scenario s;
    json script = scenario_script(s);
    for (auto& m : script["matchers"])
      if (m["contains"] == "### task: revise-workflow") m["responses"] = {"no json here"};
    RunConfig run = default_run();
    run.hitl_mode = HitlMode::Interactive;
    auto ctx = RunContext::create(scripted_config(script, dir.path(), run), dir / "run");
    ctx->hitl->start();
    const HitlSession before = ctx->hitl->session();
    CHECK_THROWS_AS(ctx->hitl->submit_feedback("try again"), GatewayError);
    CHECK(ctx->hitl->session().round == before.round);
    CHECK(ctx->hitl->session().status == SessionStatus::AwaitingFeedback);
    CHECK(ctx->hitl->session().current_workflow == before.current_workflow);
    CHECK(ctx->store->load_json("session.json")["status"] == "awaiting-feedback");
  }

  TEST_CASE("auto mode approves without feedback") {
    TempDir dir;
    RunConfig run = default_run();
    auto ctx = RunContext::create(scripted_config(scenario_script({}), dir.path(), run), dir / "run");
    const HitlSession& s = ctx->hitl->start();
    CHECK(s.status == SessionStatus::Approved);
    CHECK(s.root == NodeId{0});
    CHECK(s.feedback.empty());
    CHECK(count_kind(*ctx, EventKind::HitlFeedback) == 0);
  }

  TEST_CASE("a session survives reopening the run") {
    TempDir dir;
    {
      auto ctx = interactive(dir);
      ctx->hitl->start();
      ctx->hitl->submit_feedback("shorter prompts");
    }
    auto ctx = RunContext::open(dir / "run");
    CHECK(ctx->hitl->session().round == 2);
    ctx->hitl->approve();
    CHECK(ctx->engine->tree().node(NodeId{0}).workflow.id == "wf-0002");
    CHECK(ctx->engine->next_workflow_id() == "wf-0003");
  }

  TEST_CASE("session json round-trip") {
    HitlSession s;
    s.id = "run-0001";
    s.task = "math";
    s.current_workflow = make_workflow("wf-0001", "x");
    s.feedback.push_back({1, "more steps", 5});
    s.round = 2;
    const HitlSession back = json(s).get<HitlSession>();
    CHECK(back.round == 2);
    CHECK(back.feedback[0].text == "more steps");
    CHECK(back.current_workflow == s.current_workflow);
    CHECK_FALSE(back.root.has_value());
    CHECK_THROWS_AS(parse_session_status("paused"), ValidationError);
  }
}
