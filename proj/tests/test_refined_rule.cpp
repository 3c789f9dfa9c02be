#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

#include <random>

using namespace delta;

namespace {

const char* kThreeLeafRule = R"({
  "feature": 10, "threshold": -0.59, "operator": "<=",
  "left": {"id": "leaf_1"},
  "right": {
    "feature": 2, "threshold": 1.25, "operator": "<=",
    "left": {"id": "leaf_2"},
    "right": {"id": "leaf_3"}
  }
})";

}  // namespace

TEST_CASE("a nested rule object parses with ordinals in depth-first order") {
    RefinedRule rule = parse_rule(kThreeLeafRule);
    CHECK(rule.n_leaves == 3);
    CHECK(rule.max_feature() == 10);
    CHECK(rule.warnings.empty());

    std::vector<double> x(12, 0.0);
    x[10] = -1.0;
    CHECK(rule.assign_leaf(x) == 0);
    x[10] = -0.59;  // boundary value routes left
    CHECK(rule.assign_leaf(x) == 0);
    x[10] = 0.0;
    x[2] = 0.5;
    CHECK(rule.assign_leaf(x) == 1);
    x[2] = 2.0;
    CHECK(rule.assign_leaf(x) == 2);
}

TEST_CASE("a bare leaf object is a single-leaf rule") {
    RefinedRule rule = parse_rule("{\"id\": \"leaf_1\"}");
    CHECK(rule.n_leaves == 1);
    CHECK(rule.max_feature() == -1);
    std::vector<double> x(3, 9.0);
    CHECK(rule.assign_leaf(x) == 0);
}

TEST_CASE("markdown fences and prose around the object are tolerated") {
    std::string text = "Sure,here is a better rule.\n```json\n" + std::string(kThreeLeafRule) +
                       "\n```\nHope this helps!";
    RefinedRule rule = parse_rule(text);
    CHECK(rule.n_leaves == 3);
}

TEST_CASE("single quotes, bare keys and trailing commas are normalized") {
    RefinedRule rule = parse_rule(
        "{feature: 0, threshold: 1.5, operator: '<=',"
        " left: {id: 'leaf_1'}, right: {id: 'leaf_2'},}");
    CHECK(rule.n_leaves == 2);
    CHECK(rule.nodes[0].threshold == 1.5);
}

TEST_CASE("the first parsable balanced region wins") {
    std::string text = "{\"feature\": }\n then try {\"id\": \"leaf_1\"}";
    RefinedRule rule = parse_rule(text);
    CHECK(rule.n_leaves == 1);
}

TEST_CASE("duplicate leaf ids are rejected") {
    CHECK_THROWS_AS(parse_rule("{\"feature\": 0, \"threshold\": 0, \"operator\": \"<=\","
                               " \"left\": {\"id\": \"a\"}, \"right\": {\"id\": \"a\"}}"),
                    DataError);
}

TEST_CASE("only the <= operator is accepted") {
    for (const char* op : {"<", ">", ">=", "=="}) {
        std::string text = std::string("{\"feature\": 0, \"threshold\": 0, \"operator\": \"") +
                           op + "\", \"left\": {\"id\": \"a\"}, \"right\": {\"id\": \"b\"}}";
        CHECK_THROWS_AS(parse_rule(text), DataError);
    }
    // Omitting the operator entirely is fine; "<=" is the grammar's only case.
    CHECK(parse_rule("{\"feature\": 0, \"threshold\": 0,"
                     " \"left\": {\"id\": \"a\"}, \"right\": {\"id\": \"b\"}}")
              .n_leaves == 2);
}

TEST_CASE("feature indices must be non-negative integers but may print as floats") {
    CHECK(parse_rule("{\"feature\": 11.0, \"threshold\": 0,"
                     " \"left\": {\"id\": \"a\"}, \"right\": {\"id\": \"b\"}}")
              .nodes[0]
              .feature == 11);
    CHECK_THROWS_AS(parse_rule("{\"feature\": 1.5, \"threshold\": 0,"
                               " \"left\": {\"id\": \"a\"}, \"right\": {\"id\": \"b\"}}"),
                    DataError);
    CHECK_THROWS_AS(parse_rule("{\"feature\": -1, \"threshold\": 0,"
                               " \"left\": {\"id\": \"a\"}, \"right\": {\"id\": \"b\"}}"),
                    DataError);
}

TEST_CASE("incomplete internal nodes are rejected") {
    CHECK_THROWS_AS(parse_rule("{\"feature\": 0, \"threshold\": 0, \"left\": {\"id\": \"a\"}}"),
                    DataError);
    CHECK_THROWS_AS(parse_rule("{\"threshold\": 0, \"left\": {\"id\": \"a\"},"
                               " \"right\": {\"id\": \"b\"}}"),
                    DataError);
    CHECK_THROWS_AS(parse_rule("no json here at all"), DataError);
}

TEST_CASE("unknown keys are ignored with warnings") {
    RefinedRule rule = parse_rule(
        "{\"feature\": 0, \"threshold\": 0.5, \"operator\": \"<=\", \"confidence\": 0.9,"
        " \"left\": {\"id\": \"a\", \"prediction\": 1}, \"right\": {\"id\": \"b\"}}");
    CHECK(rule.n_leaves == 2);
    REQUIRE(rule.warnings.size() == 2);
    CHECK_THAT(rule.warnings[0], Catch::Matchers::ContainsSubstring("confidence"));
    CHECK_THAT(rule.warnings[1], Catch::Matchers::ContainsSubstring("prediction"));
}

TEST_CASE("validation flags feature range and leaf budget violations") {
    RefinedRule rule = parse_rule(kThreeLeafRule);
    CHECK(validate_rule(rule, 12, 30).empty());
    auto range = validate_rule(rule, 5, 30);  // feature 10 out of range for d=5
    REQUIRE_FALSE(range.empty());
    CHECK_THAT(range.front().message, Catch::Matchers::ContainsSubstring("feature index 10"));
    auto budget = validate_rule(rule, 12, 2);  // three leaves exceed a limit of 2
    REQUIRE_FALSE(budget.empty());
    CHECK_THAT(budget.front().message, Catch::Matchers::ContainsSubstring("3 leaves"));
}

TEST_CASE("serialization canonicalizes ids and round-trips structurally") {
    RefinedRule rule = parse_rule(
        "{\"feature\": 3, \"threshold\": -0.25, \"operator\": \"<=\","
        " \"left\": {\"id\": \"low_risk\"}, \"right\": {\"id\": \"high_risk\"}}");
    std::string wire = serialize_rule(rule);
    CHECK_THAT(wire, Catch::Matchers::ContainsSubstring("\"leaf_1\""));
    CHECK_THAT(wire, Catch::Matchers::ContainsSubstring("\"leaf_2\""));
    CHECK(parse_rule(wire) == rule);
}

TEST_CASE("fuzzed rules survive parse-serialize round-trips and partition exactly") {
    std::mt19937_64 rng(20260824ull);
    for (int round = 0; round < 1000; ++round) {
        std::size_t d = 1 + rng() % 12;
        RefinedRule rule = tsup::random_rule(rng, d, 1 + rng() % 8);
        RefinedRule back = parse_rule(serialize_rule(rule));
        CHECK(back == rule);
        CHECK(back.n_leaves == rule.n_leaves);

        Matrix probe = tsup::random_features(rng, 1 + rng() % 40, d);
        std::vector<std::size_t> counts(rule.n_leaves, 0);
        for (std::size_t ordinal : rule.assign_all(probe)) {
            REQUIRE(ordinal < rule.n_leaves);
            ++counts[ordinal];
        }
        std::size_t total = 0;
        for (std::size_t c : counts) total += c;
        CHECK(total == probe.rows());
    }
}

TEST_CASE("assignment rejects rows narrower than the rule") {
    RefinedRule rule = parse_rule(kThreeLeafRule);  // references feature 10
    Matrix narrow(2, 4);
    CHECK_THROWS_AS(rule.assign_all(narrow), DataError);
}
