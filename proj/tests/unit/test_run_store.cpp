#include <fstream>
#include <thread>

#include "doctest.h"
#include "test_support.hpp"
#include "wfs/errors.hpp"
#include "wfs/run_store.hpp"

using namespace wfs;
using namespace wfs::testing;
namespace fs = std::filesystem;

namespace {

EvaluationResult eval_with(double reward) {
  EvaluationResult r;
  r.sample_score = reward;
  r.workflow_score = reward;
  r.hybrid_reward = reward;
  return r;
}

/// Writes a root plus one scored child through events and returns the tree
/// the events describe.
SearchTree log_small_run(RunStore& store) {
  SearchTree t = SearchTree::create_root(make_workflow("wf-0001", "x"), 2.5, eval_with(2.5), 10);
  store.append_event(EventKind::Init, {{"run_id", store.run_id()}, {"root", t.node(t.root())}});
  t.set_iteration_count(1);
  store.append_event(EventKind::Selected,
                     {{"iteration", 1}, {"node", 0}, {"candidates", {0}}, {"probabilities", {1.0}}});
  const ModificationRecord mod{"Added self-verification step for mathematical correctness",
                               ModificationKind::CodeEdit};
  const Workflow wf = make_workflow("wf-0002", "y");
  store.append_event(EventKind::Refined, {{"iteration", 1},
                                          {"parent", 0},
                                          {"node", 1},
                                          {"modification", mod},
                                          {"workflow", wf}});
  const NodeId c = t.add_child(t.root(), wf, mod, 1, 20);
  t.set_reward(c, 3.25, eval_with(3.25));
  store.append_event(EventKind::Scored, {{"iteration", 1},
                                         {"node", 1},
                                         {"reward", 3.25},
                                         {"created_at", 20},
                                         {"result", eval_with(3.25)}});
  const Experience exp{mod, 3.25, "clearer steps", c, 1};
  t.append_experience(t.root(), exp);
  store.append_event(EventKind::Backpropagated, {{"iteration", 1},
                                                 {"node", 1},
                                                 {"reward", 3.25},
                                                 {"experience", exp},
                                                 {"targets", {0}}});
  return t;
}

}  // namespace

TEST_SUITE("run_store") {
  TEST_CASE("events get consecutive seq numbers and round-trip") {
    TempDir dir;
    RunStore store(dir / "run-0001", RunStore::Mode::Create);
    CHECK(store.run_id() == "run-0001");
    CHECK(store.append_event(EventKind::Aborted, {{"scope", "iteration"}, {"reason", "x"}}) == 1);
    CHECK(store.append_event(EventKind::Converged, {{"iteration", 1}, {"converged", false}}) == 2);
    const auto events = read_event_log(dir / "run-0001" / "events.jsonl");
    REQUIRE(events.size() == 2);
    CHECK(events[1].kind == EventKind::Converged);
    CHECK(events[1].payload["converged"] == false);
    CHECK(store.last_seq() == 2);
    CHECK(fs::is_directory(dir / "run-0001" / "metrics"));
    CHECK(fs::is_directory(dir / "run-0001" / "export"));
  }

  TEST_CASE("payloads are validated per kind") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    CHECK_THROWS_AS(store.append_event(EventKind::Scored, {{"iteration", 1}}), ValidationError);
    CHECK_THROWS_AS(store.append_event(EventKind::Converged, {{"iteration", "one"}, {"converged", true}}),
                    ValidationError);
    CHECK(store.last_seq() == 0);
    for (auto k : {EventKind::Init, EventKind::HitlFeedback, EventKind::LlmCall})
      CHECK(parse_event_kind(to_string(k)) == k);
  }

  TEST_CASE("create refuses an existing run, open continues it") {
    TempDir dir;
    {
      RunStore store(dir / "r", RunStore::Mode::Create);
      store.append_event(EventKind::Aborted, {{"scope", "iteration"}, {"reason", "x"}});
    }
    CHECK_THROWS_AS(RunStore(dir / "r", RunStore::Mode::Create), StateError);
    CHECK_THROWS_AS(RunStore(dir / "missing", RunStore::Mode::Open), NotFoundError);
    RunStore reopened(dir / "r", RunStore::Mode::Open);
    CHECK(reopened.last_seq() == 1);
    CHECK(reopened.append_event(EventKind::Aborted, {{"scope", "iteration"}, {"reason", "y"}}) == 2);
  }

  TEST_CASE("corrupt logs report the byte offset") {
    TempDir dir;
    const std::string good =
        R"({"kind":"aborted","payload":{"reason":"x","scope":"run"},"seq":1,"timestamp":5})";
    write_text(dir / "a.jsonl", good + "\n{broken\n");
    try {
      read_event_log(dir / "a.jsonl");
      FAIL("expected a load error");
    } catch (const LoadError& e) {
      CHECK(e.offset() == good.size() + 1);
    }
    write_text(dir / "b.jsonl", good + "\n" + good + "\n");
    CHECK_THROWS_AS(read_event_log(dir / "b.jsonl"), LoadError);

    write_text(dir / "c.jsonl", good + "\n{\"kind\":\"abor");
    CHECK_THROWS_AS(read_event_log(dir / "c.jsonl"), LoadError);
    CHECK(read_event_log(dir / "c.jsonl", true).size() == 1);
  }

  TEST_CASE("tree and json files round-trip atomically") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    const SearchTree t = SearchTree::create_root(make_workflow("wf-0001", "x"), 3.0, std::nullopt, 1);
    CHECK_FALSE(store.has_tree());
    store.save_tree(t);
    CHECK(store.load_tree() == t);
    store.save_json("state.json", {{"k", 1.0 / 3.0}});
    CHECK(store.load_json("state.json")["k"].get<double>() == 1.0 / 3.0);
    CHECK_FALSE(fs::exists(dir / "r" / "state.json.tmp"));
    store.save_metrics_snapshot(7, {{"m", 1}});
    CHECK(fs::exists(dir / "r" / "metrics" / "iter_0007.json"));

    write_text(dir / "r" / "tree.json", "{\"root\": 0, \"nodes\": [");
    CHECK_THROWS_AS(store.load_tree(), LoadError);
  }

  TEST_CASE("replay rebuilds the tree from events") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    const SearchTree expected = log_small_run(store);
    const SearchTree replayed = replay_tree(read_event_log(dir / "r" / "events.jsonl"));
    CHECK(replayed == expected);
  }

  TEST_CASE("replay drops refinements of skipped iterations") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    const SearchTree expected = log_small_run(store);
    store.append_event(EventKind::Refined, {{"iteration", 2},
                                            {"parent", 0},
                                            {"node", 2},
                                            {"modification", ModificationRecord{"tweak", ModificationKind::Mixed}},
                                            {"workflow", make_workflow("wf-0003", "z")}});
    store.append_event(EventKind::Aborted, {{"scope", "iteration"}, {"iteration", 2}, {"reason", "judge down"}});
    CHECK(replay_tree(read_event_log(dir / "r" / "events.jsonl")) == expected);
  }

  TEST_CASE("replay without init fails") {
    std::vector<RunEvent> events = {{1, 0, EventKind::Selected, {{"iteration", 1}}}};
    CHECK_THROWS_AS(replay_tree(events), ValidationError);
    CHECK_THROWS_AS(replay_tree({}), ValidationError);
  }

  TEST_CASE("events_after waits for new events") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    store.append_event(EventKind::Aborted, {{"scope", "iteration"}, {"reason", "a"}});
    CHECK(store.events_after(0).size() == 1);
    CHECK(store.events_after(1).empty());
    std::thread writer([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      store.append_event(EventKind::Aborted, {{"scope", "iteration"}, {"reason", "b"}});
    });
    const auto later = store.events_after(1, 5000);
    writer.join();
    REQUIRE(later.size() == 1);
    CHECK(later[0].seq == 2);
  }

  TEST_CASE("export writes records and a manifest") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    const SearchTree t =
        SearchTree::create_root(make_workflow("wf-0001", fixture_script("emit_samples.py")), 3.0,
                                std::nullopt, 1);
    ExecutionLimits limits;
    limits.wall_timeout_s = 20;
    const Executor ex(default_interpreters(), limits);
    RunParameters base;
    base.n = 4;
    base.task = "math";
    const DatasetExport out = export_dataset(store, t, t.root(), 10, ex, base);
    std::ifstream in(out.records_file);
    std::string line;
    std::vector<json> records;
    while (std::getline(in, line)) records.push_back(json::parse(line));
    REQUIRE(records.size() == 10);
    CHECK(records[0]["_meta"]["node"] == 0);
    CHECK(records[9]["instruction"] == "Solve problem 9 about math");
    CHECK(out.manifest["count"] == 10);
    CHECK(out.manifest["workflow_digest"] == t.node(t.root()).workflow.content_digest());
    CHECK(fs::exists(out.records_file.parent_path() / "manifest.json"));
  }

  TEST_CASE("export gives up after three failed batches") {
    TempDir dir;
    RunStore store(dir / "r", RunStore::Mode::Create);
    const SearchTree t =
        SearchTree::create_root(make_workflow("wf-0001", fixture_script("crash.py")), 3.0, std::nullopt, 1);
    const Executor ex(default_interpreters(), ExecutionLimits{});
    CHECK_THROWS_AS(export_dataset(store, t, t.root(), 5, ex, RunParameters{}), ExecutionError);
  }
}
