#include "doctest.h"
#include "wfs/json_util.hpp"

using namespace wfs;

TEST_SUITE("json_util") {
  TEST_CASE("canonical_dump sorts keys and fixes float precision") {
    const json v = {{"b", 1.0 / 3.0}, {"a", {1, 2.5, "x"}}, {"c", nullptr}};
    CHECK(canonical_dump(v) == R"({"a":[1,2.500000,"x"],"b":0.333333,"c":null})");
  }

  TEST_CASE("canonical_dump collapses negative zero") {
    CHECK(canonical_dump(json(-0.0000001)) == "0.000000");
  }

  TEST_CASE("fnv1a_hex matches the reference vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
  }

  TEST_CASE("extract_json finds bare, fenced and embedded values") {
    CHECK(extract_json(R"({"score": 4})")->at("score") == 4);
    CHECK(extract_json("Here you go:\n```json\n{\"score\": 3}\n```\nThanks")->at("score") == 3);
    CHECK(extract_json("Result follows {\"a\": [1, 2]} and that is all")->at("a").size() == 2);
    CHECK_FALSE(extract_json("no structure here").has_value());
  }

  TEST_CASE("normalize_volatile masks nested volatile keys only") {
    const json a = {{"timestamp", 1}, {"payload", {{"created_at", 5}, {"value", 7}}},
                    {"list", {{{"latency_ms", 12}}}}};
    const json b = {{"timestamp", 2}, {"payload", {{"created_at", 9}, {"value", 7}}},
                    {"list", {{{"latency_ms", 99}}}}};
    CHECK(normalize_volatile(a) == normalize_volatile(b));
    json c = b;
    c["payload"]["value"] = 8;
    CHECK(normalize_volatile(a) != normalize_volatile(c));
  }

  TEST_CASE("validate_schema reports the first violation") {
    const json schema = {
        {"type", "object"},
        {"required", {"score", "justification"}},
        {"properties",
         {{"score", {{"type", "number"}, {"minimum", 1}, {"maximum", 5}}},
          {"justification", {{"type", "string"}, {"minLength", 1}}},
          {"tags", {{"type", "array"}, {"maxItems", 2}, {"items", {{"enum", {"a", "b"}}}}}}}}};
    CHECK_FALSE(validate_schema({{"score", 3}, {"justification", "ok"}}, schema).has_value());

    auto err = validate_schema({{"score", 3}}, schema);
    REQUIRE(err);
    CHECK(err->find("justification") != std::string::npos);

    err = validate_schema({{"score", 6}, {"justification", "ok"}}, schema);
    REQUIRE(err);
    CHECK(err->find("maximum") != std::string::npos);

    err = validate_schema({{"score", "4"}, {"justification", "ok"}}, schema);
    REQUIRE(err);
    CHECK(err->find("expected") != std::string::npos);

    CHECK(validate_schema({{"score", 2}, {"justification", "ok"}, {"tags", {"a", "c"}}}, schema));
    CHECK(validate_schema({{"score", 2}, {"justification", "ok"}, {"tags", {"a", "a", "b"}}}, schema));
    CHECK(validate_schema({{"score", 2}, {"justification", ""}}, schema));
  }

  TEST_CASE("integer type accepts integral floats") {
    const json schema = {{"type", "integer"}};
    CHECK_FALSE(validate_schema(json(3.0), schema).has_value());
    CHECK(validate_schema(json(3.5), schema).has_value());
  }
}
