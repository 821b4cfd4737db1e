#include <chrono>
#include <cstdlib>

#include "doctest.h"
#include "test_support.hpp"
#include "wfs/errors.hpp"
#include "wfs/executor.hpp"

using namespace wfs;
using namespace wfs::testing;

namespace {

Executor executor(double timeout_s = 20, std::size_t max_stdout = 8u << 20,
                  NetworkPolicy net = NetworkPolicy::LlmEndpointsOnly) {
  ExecutionLimits limits;
  limits.wall_timeout_s = timeout_s;
  limits.max_stdout_bytes = max_stdout;
  limits.network = net;
  return Executor(default_interpreters(), limits);
}

RunParameters params(std::size_t n) {
  RunParameters p;
  p.n = n;
  p.task = "arithmetic";
  p.seed = 11;
  p.batch = 2;
  return p;
}

}  // namespace

TEST_SUITE("executor") {
  TEST_CASE("python script yields exactly n samples tagged with the node") {
    const auto out = executor().execute(make_workflow("wf-1", fixture_script("emit_samples.py")),
                                        params(5), NodeId{4});
    REQUIRE(out.samples.size() == 5);
    for (std::uint32_t i = 0; i < 5; ++i) {
      CHECK(out.samples[i].index == i);
      CHECK(out.samples[i].source_node == NodeId{4});
    }
    CHECK(out.samples[0].payload["instruction"] == "Solve problem 10 about arithmetic");
    CHECK(out.samples[0].payload["workflow"] == "wf-1");
    CHECK(out.exit_code == 0);
  }

  TEST_CASE("shell interpreter") {
    const auto out = executor().execute(make_workflow("wf-2", fixture_script("emit_samples.sh"), "sh"),
                                        params(3), NodeId{0});
    REQUIRE(out.samples.size() == 3);
    CHECK(out.samples[2].payload["text"] == "record 2");
  }

  TEST_CASE("stdin document carries the contract fields") {
    const auto out = executor().execute(make_workflow("wf-3", fixture_script("echo_request.py")),
                                        params(1), NodeId{0});
    const json req = out.samples[0].payload["request"];
    CHECK(req["n"] == 1);
    CHECK(req["task"] == "arithmetic");
    CHECK(req["seed"] == 11);
    CHECK(req["batch"] == 2);
    CHECK(req["workflow_id"] == "wf-3");
    CHECK(req["contract"] == "stdin-json/stdout-jsonl");
    CHECK(req["prompts"]["generate"] == "Write one hard problem about {{topic}}.");
  }

  TEST_CASE("non-zero exit keeps stderr") {
    try {
      executor().execute(make_workflow("wf", fixture_script("crash.py")), params(2), NodeId{0});
      FAIL("expected an execution error");
    } catch (const ExecutionError& e) {
      CHECK(e.kind() == ExecutionError::Kind::NonZeroExit);
      CHECK(e.captured_stderr().find("ZeroDivisionError") != std::string::npos);
      CHECK(std::string(e.what()).find("status 3") != std::string::npos);
    }
  }

  TEST_CASE("wall-clock timeout kills the script") {
    const auto start = std::chrono::steady_clock::now();
    try {
      executor(0.5).execute(make_workflow("wf", fixture_script("hang.sh"), "sh"), params(1), NodeId{0});
      FAIL("expected a timeout");
    } catch (const ExecutionError& e) {
      CHECK(e.kind() == ExecutionError::Kind::Timeout);
    }
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
  }

  TEST_CASE("stdout cap") {
    try {
      executor(20, 64 * 1024).execute(make_workflow("wf", fixture_script("flood.sh"), "sh"), params(1),
                                      NodeId{0});
      FAIL("expected an overflow");
    } catch (const ExecutionError& e) {
      CHECK(e.kind() == ExecutionError::Kind::Overflow);
    }
  }

  TEST_CASE("short batches and malformed lines") {
    CHECK_THROWS_AS(executor().execute(make_workflow("wf", fixture_script("short.py")), params(5), NodeId{0}),
                    BatchError);
    try {
      executor().execute(make_workflow("wf", fixture_script("malformed.sh"), "sh"), params(2), NodeId{0});
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("unknown interpreter hint") {
    CHECK_THROWS_AS(executor().execute(make_workflow("wf", "x", "ruby-9"), params(1), NodeId{0}),
                    ExecutionError);
  }

  TEST_CASE("environment is limited to the allow list") {
    ::setenv("WFS_SECRET_PROBE", "leak", 1);
    RunParameters p = params(1);
    p.llm = json{{"base_url", "http://127.0.0.1:1"}, {"model", "m"}, {"api_key", "k"}};
    const auto out = executor().execute(make_workflow("wf", fixture_script("env_probe.py")), p, NodeId{0});
    const json env = out.samples[0].payload["env"];
    for (const auto& name : env) {
      const std::string s = name.get<std::string>();
      CHECK_MESSAGE(s != "WFS_SECRET_PROBE", s);
    }
    CHECK(out.samples[0].payload["llm"]["model"] == "m");

    const auto none = executor(20, 8u << 20, NetworkPolicy::None)
                          .execute(make_workflow("wf", fixture_script("env_probe.py")), p, NodeId{0});
    CHECK(none.samples[0].payload["llm"].is_null());
    ::unsetenv("WFS_SECRET_PROBE");
  }

  TEST_CASE("bare payload lines take their ordinal as index") {
    const auto samples = parse_sample_lines("{\"a\":1}\n{\"a\":2}\n", NodeId{1});
    REQUIRE(samples.size() == 2);
    CHECK(samples[1].index == 1);
    CHECK(samples[1].payload["a"] == 2);
    CHECK_THROWS_AS(parse_sample_lines("[1,2]\n", NodeId{1}), BatchError);
  }

  TEST_CASE("limits validation") {
    ExecutionLimits l;
    l.wall_timeout_s = 0;
    CHECK_THROWS_AS(Executor(default_interpreters(), l), ValidationError);
    CHECK(parse_network_policy(to_string(NetworkPolicy::None)) == NetworkPolicy::None);
  }
}
