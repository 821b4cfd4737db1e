#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "test_support.hpp"
#include "wfs/control_plane.hpp"
#include "wfs/errors.hpp"

using namespace wfs;
using namespace wfs::testing;

namespace {

AppConfig plane_config(const TempDir& dir, int iterations = 2) {
  Scenario s;
  s.refinements = improving_refinements(iterations);
  RunConfig run = default_run();
  run.max_iterations = iterations;
  return scripted_config(scenario_script(s), dir.path(), run);
}

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

}  // namespace

TEST_SUITE("control_plane") {
  TEST_CASE("engine errors map to http statuses") {
    CHECK(http_status_for(NotFoundError("x")) == 404);
    CHECK(http_status_for(ValidationError("x")) == 400);
    CHECK(http_status_for(BatchError("x")) == 400);
    CHECK(http_status_for(StateError("x")) == 409);
    CHECK(http_status_for(LimitError("x")) == 409);
    CHECK(http_status_for(GatewayError("x")) == 502);
    CHECK(http_status_for(ScriptedMissError("abc")) == 502);
    CHECK(http_status_for(IoError("x")) == 500);
    CHECK(http_status_for(std::runtime_error("x")) == 500);
  }

  TEST_CASE("interactive session through the plane") {
    TempDir dir;
    ControlPlane plane(plane_config(dir));
    const json created = plane.create_session({{"task", "math"}, {"config", {{"hitl_mode", "interactive"}}}});
    const std::string id = created["id"];
    CHECK(id == "run-0001");
    CHECK(created["status"] == "awaiting-feedback");
    CHECK(created["current_samples"].size() == 5);
    CHECK(plane.get_session(id)["round"] == 1);

    const json revised = plane.submit_feedback(id, {{"feedback", "harder problems"}});
    CHECK(revised["round"] == 2);
    CHECK_THROWS_AS(plane.submit_feedback(id, {{"text", "wrong key"}}), ValidationError);

    const json approved = plane.approve(id);
    CHECK(approved["status"] == "approved");
    CHECK(approved["root"] == 0);
    CHECK(approved["root_reward"].get<double>() >= 1.0);
    CHECK_THROWS_AS(plane.submit_feedback(id, {{"feedback", "late"}}), StateError);

    CHECK_THROWS_AS(plane.get_session("run-9999"), NotFoundError);
    CHECK_THROWS_AS(plane.get_session("../etc"), NotFoundError);
    CHECK_THROWS_AS(plane.create_session({{"config", json::object()}}), ValidationError);
  }

  TEST_CASE("run lifecycle, inspection and export") {
    TempDir dir;
    ControlPlane plane(plane_config(dir));
    const json started = plane.start_run({{"task", "math"}});
    const std::string id = started["run_id"];
    CHECK(started["status"] == "queued");
    plane.drain();

    const json run = plane.get_run(id);
    CHECK(run["job"] == "finished");
    CHECK(run["status"] == "max-iterations");
    CHECK(run["node_count"] == 3);
    CHECK(run["iteration"] == 2);
    CHECK(run["reward_trace"].size() == 3);
    CHECK(run["report"]["iterations_used"] == 2);

    const json tree = plane.get_tree(id);
    CHECK(tree["nodes"].size() == 3);
    CHECK(tree["nodes"][1]["parent"] == 0);
    CHECK(tree["as_of_seq"] == run["last_seq"]);

    const json first = plane.get_events(id, 0, 0);
    CHECK(first["events"][0]["kind"] == "llm-call");
    const std::uint64_t last = first["last_seq"];
    CHECK(first["events"].size() == last);
    CHECK(plane.get_events(id, last - 2, 0)["events"].size() == 2);
    CHECK(plane.get_events(id, last, 50)["events"].empty());

    const json node = plane.get_node(id, 1);
    CHECK(node["samples"].size() == 5);
    CHECK(node["workflow_text"].get<std::string>().find("revision 1") != std::string::npos);
    CHECK(node["score_matrix"]["metric_names"].size() == 2);
    CHECK_THROWS_AS(plane.get_node(id, 99), NotFoundError);

    const json manifest = plane.create_export(id, {{"count", 7}, {"node", 1}});
    CHECK(manifest["count"] == 7);
    CHECK(manifest["node_id"] == 1);
    const json exports = plane.get_exports(id);
    REQUIRE(exports["exports"].size() == 1);
    CHECK(exports["exports"][0]["count"] == 7);
    CHECK_THROWS_AS(plane.create_export(id, {{"count", 0}}), ValidationError);
  }

  TEST_CASE("starting an unapproved session fails the job") {
    TempDir dir;
    ControlPlane plane(plane_config(dir));
    const json s = plane.create_session({{"task", "math"}, {"config", {{"hitl_mode", "interactive"}}}});
    plane.start_run({{"session", s["id"]}});
    plane.drain();
    CHECK(plane.get_run(s["id"])["job"].get<std::string>().rfind("failed:", 0) == 0);
  }

  TEST_CASE("run ids continue after existing runs") {
    TempDir dir;
    const AppConfig cfg = plane_config(dir);
    {
      ControlPlane plane(cfg);
      plane.create_session({{"task", "math"}});
    }
    ControlPlane plane(cfg);
    CHECK(plane.create_session({{"task", "math"}})["id"] == "run-0002");
    CHECK(plane.get_session("run-0001")["status"] == "approved");
  }

  TEST_CASE("http api end to end") {
    TempDir dir;
    ControlPlane plane(plane_config(dir));
    HttpService http(plane);
    const int port = http.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);

    auto post = [&](const std::string& path, const json& body) {
      return client.Post(path, body.dump(), "application/json");
    };

    auto r = post("/sessions", {{"task", "math"}, {"config", {{"hitl_mode", "interactive"}}}});
    REQUIRE(r);
    CHECK(r->status == 201);
    const std::string id = body_of(r)["id"];

    r = client.Get("/sessions/" + id);
    CHECK(r->status == 200);
    CHECK(body_of(r)["status"] == "awaiting-feedback");

    r = post("/sessions/" + id + "/feedback", {{"feedback", ""}});
    CHECK(r->status == 400);
    CHECK(body_of(r)["status"] == 400);
    r = post("/sessions/" + id + "/feedback", {{"feedback", "more variety"}});
    CHECK(r->status == 200);
    CHECK(body_of(r)["round"] == 2);

    r = post("/sessions/" + id + "/approve", json::object());
    CHECK(r->status == 200);
    r = post("/sessions/" + id + "/feedback", {{"feedback", "late"}});
    CHECK(r->status == 409);

    r = post("/runs", {{"session", id}});
    CHECK(r->status == 202);
    CHECK(body_of(r)["run_id"] == id);

    // Long-poll until the loop reports convergence or its iteration cap.
    std::uint64_t seq = 0;
    bool done = false;
    for (int i = 0; i < 200 && !done; ++i) {
      r = client.Get("/runs/" + id + "/events?after_seq=" + std::to_string(seq) + "&wait_ms=500");
      REQUIRE(r);
      REQUIRE(r->status == 200);
      const json page = body_of(r);
      for (const auto& e : page["events"]) {
        CHECK(e["seq"].get<std::uint64_t>() == seq + 1);
        seq = e["seq"];
        if (e["kind"] == "converged" && e["payload"]["iteration"] == 2) done = true;
      }
    }
    CHECK(done);
    plane.drain();

    r = client.Get("/runs/" + id);
    CHECK(r->status == 200);
    CHECK(body_of(r)["node_count"] == 3);
    r = client.Get("/runs/" + id + "/tree");
    CHECK(body_of(r)["nodes"].size() == 3);
    r = client.Get("/runs/" + id + "/nodes/2");
    CHECK(r->status == 200);
    CHECK(body_of(r)["id"] == 2);
    r = client.Get("/runs/" + id + "/nodes/abc");
    CHECK(r->status == 404);
    r = client.Get("/runs/run-4242");
    CHECK(r->status == 404);
    r = client.Get("/runs/" + id + "/events?wait_ms=999999");
    CHECK(r->status == 400);

    r = post("/runs/" + id + "/export", {{"count", 5}});
    CHECK(r->status == 201);
    CHECK(body_of(r)["count"] == 5);
    r = client.Get("/runs/" + id + "/export");
    CHECK(body_of(r)["exports"].size() == 1);

    r = client.Post("/sessions", "{not json", "application/json");
    CHECK(r->status == 400);
    http.stop();
  }
}
