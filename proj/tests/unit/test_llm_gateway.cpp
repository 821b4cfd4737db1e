#include <thread>

#include "doctest.h"
#include "wfs/errors.hpp"
#include "wfs/llm_gateway.hpp"

using namespace wfs;

namespace {

ChatExchange exchange(const std::string& text, LlmRole role = LlmRole::Evaluator,
                      std::uint64_t nonce = 0) {
  ChatExchange ex;
  ex.role = role;
  ex.messages = {{"system", "You are terse."}, {"user", text}};
  ex.nonce = nonce;
  ex.purpose = "test";
  return ex;
}

LlmGateway gateway(const json& script, GatewayBudget budget = {}) {
  budget.backoff_ms = 0;
  auto provider = std::make_shared<ScriptedProvider>(script);
  return LlmGateway(budget, {provider, "scripted", 0.0}, {provider, "scripted", 0.0});
}

const json kScoreSchema = {{"type", "object"},
                           {"required", {"score"}},
                           {"properties", {{"score", {{"type", "number"}, {"minimum", 1}, {"maximum", 5}}}}}};

}  // namespace

TEST_SUITE("llm_gateway") {
  TEST_CASE("responses are served in order and the last repeats") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "hello"}, {"responses", {"one", "two"}}}}}});
    CHECK(g.complete(exchange("hello there")) == "one");
    CHECK(g.complete(exchange("hello there")) == "two");
    CHECK(g.complete(exchange("hello there")) == "two");
    CHECK(g.calls_made() == 3);
  }

  TEST_CASE("role filters and repeat_last false") {
    LlmGateway g = gateway({{"matchers",
                             {{{"contains", "x"}, {"role", "optimizer"}, {"responses", {"opt"}}},
                              {{"contains", "x"}, {"responses", {"once"}}, {"repeat_last", false}},
                              {{"contains", "x"}, {"responses", {"fallback"}}}}}});
    CHECK(g.complete(exchange("x", LlmRole::Optimizer)) == "opt");
    CHECK(g.complete(exchange("x")) == "once");
    CHECK(g.complete(exchange("x")) == "fallback");
  }

  TEST_CASE("digest matchers and named misses") {
    const ChatExchange ex = exchange("find me");
    const std::string digest = prompt_digest(ex);
    CHECK(digest.size() == 16);
    LlmGateway g = gateway({{"matchers", {{{"digest", digest}, {"responses", {"found"}}}}}});
    CHECK(g.complete(ex) == "found");
    try {
      g.complete(exchange("something else"));
      FAIL("expected a scripted miss");
    } catch (const ScriptedMissError& e) {
      CHECK(std::string(e.what()).find("scripted-miss") != std::string::npos);
      CHECK(e.digest() == prompt_digest(exchange("something else")));
    }
  }

  TEST_CASE("digest covers the rendered messages only") {
    CHECK(prompt_digest(exchange("a", LlmRole::Evaluator, 1)) ==
          prompt_digest(exchange("a", LlmRole::Optimizer, 2)));
    CHECK(prompt_digest(exchange("a")) != prompt_digest(exchange("b")));
    CHECK(render_prompt(exchange("a")) == "[system]\nYou are terse.\n[user]\na\n");
  }

  TEST_CASE("transport failures are retried then surface as a gateway error") {
    LlmGateway g = gateway(
        {{"matchers", {{{"contains", "flaky"}, {"responses", {{{"$error", "503"}}, {{"$error", "503"}}, "ok"}}}}}});
    CHECK(g.complete(exchange("flaky")) == "ok");
    CHECK(g.calls_made() == 3);

    LlmGateway down = gateway({{"matchers", {{{"contains", "down"}, {"responses", {{{"$error", "502"}}}}}}}});
    CHECK_THROWS_AS(down.complete(exchange("down")), GatewayError);
    CHECK(down.calls_made() == 4);
    const auto t = down.transcript();
    REQUIRE(t.size() == 4);
    CHECK(t.back()["attempt"] == 3);
    CHECK(t.back().contains("error"));
  }

  TEST_CASE("budget exhaustion") {
    GatewayBudget b;
    b.max_calls_per_run = 2;
    LlmGateway g = gateway({{"matchers", {{{"contains", "a"}, {"responses", {"r"}}}}}}, b);
    g.complete(exchange("a"));
    g.complete(exchange("a"));
    CHECK_THROWS_AS(g.complete(exchange("a")), BudgetError);
  }

  TEST_CASE("structured output with one re-ask") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "judge"}, {"responses", {"not json", "```json\n{\"score\": 4}\n```"}}}}}});
    const json v = g.complete_structured(exchange("judge this"), kScoreSchema);
    CHECK(v["score"] == 4);
    const auto t = g.transcript();
    REQUIRE(t.size() == 2);
    CHECK(t[1]["reask"] == true);
  }

  TEST_CASE("structured output failing twice raises a format error with both payloads") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "judge"}, {"responses", {R"({"score": 9})", R"({"score": 0})"}}}}}});
    try {
      g.complete_structured(exchange("judge this"), kScoreSchema);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.raw_payloads().size() == 2);
      CHECK(e.raw_payloads()[0] == R"({"score": 9})");
    }
  }

  TEST_CASE("semantic check triggers the re-ask") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "judge"}, {"responses", {R"({"score": 2})", R"({"score": 3})"}}}}}});
    const StructuredCheck odd = [](const json& v) -> std::optional<std::string> {
      if (v["score"].get<int>() % 2 == 0) return "score must be odd";
      return std::nullopt;
    };
    CHECK(g.complete_structured(exchange("judge"), kScoreSchema, odd)["score"] == 3);
  }

  TEST_CASE("object responses are serialized") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "obj"}, {"responses", {{{"score", 5}}}}}}}});
    CHECK(json::parse(g.complete(exchange("obj")))["score"] == 5);
  }

  TEST_CASE("transcript sink sees every attempt") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "a"}, {"responses", {"r"}}}}}});
    std::vector<json> seen;
    g.set_sink([&](const json& e) { seen.push_back(e); });
    g.complete(exchange("a"));
    g.complete(exchange("a"));
    REQUIRE(seen.size() == 2);
    CHECK(seen[0]["role"] == "evaluator");
    CHECK(seen[0]["provider"] == "scripted");
    CHECK(seen[0].contains("digest"));
    CHECK(seen[1]["call_seq"].get<long>() > seen[0]["call_seq"].get<long>());
  }

  TEST_CASE("concurrent calls are all accounted for") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "c"}, {"responses", {"r"}}}}}});
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
      threads.emplace_back([&] {
        for (int k = 0; k < 10; ++k) g.complete(exchange("c"));
      });
    for (auto& t : threads) t.join();
    CHECK(g.calls_made() == 80);
    CHECK(g.transcript().size() == 80);
  }

  TEST_CASE("invalid input and configuration") {
    LlmGateway g = gateway({{"matchers", {{{"contains", "a"}, {"responses", {"r"}}}}}});
    ChatExchange empty;
    CHECK_THROWS_AS(g.complete(empty), ValidationError);
    CHECK_THROWS_AS(ScriptedProvider(json{{"matchers", {{{"responses", {"r"}}}}}}), ValidationError);
    CHECK_THROWS_AS(ScriptedProvider(json::object()), ValidationError);
    CHECK(parse_role("optimizer") == LlmRole::Optimizer);
    CHECK_THROWS_AS(parse_role("critic"), ValidationError);
  }
}
