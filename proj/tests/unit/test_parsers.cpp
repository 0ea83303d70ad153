#include <doctest.h>

#include "extc/common/error.hpp"
#include "extc/common/random.hpp"
#include "extc/gateway/parsers.hpp"

using namespace extc;

namespace {

LabelSpace labels3() {
  return LabelSpace::ordered_by_priority({"neutral", "positive", "alert"}, {{"positive", "1"}});
}

template <typename T>
T value(const Parsed<T>& p) {
  REQUIRE(ok(p));
  return std::get<T>(p);
}

template <typename T>
ParseReason reason(const Parsed<T>& p) {
  REQUIRE_FALSE(ok(p));
  return std::get<ParseFailure>(p).reason;
}

}  // namespace

TEST_CASE("reasoning and label") {
  const auto labels = labels3();
  const auto r = value(parse_reasoning_label("REASONING:\nit is fine\nreally\n\nLABEL: Positive", labels));
  CHECK(r.label == labels.id("positive"));
  CHECK(r.reasoning == "it is fine\nreally");
  CHECK(value(parse_reasoning_label("**REASONING:** x\n**LABEL:** `alert`.", labels)).label == 2);
  CHECK(value(parse_reasoning_label("REASONING: x\nLABEL: 1", labels)).label == 1);
  // the last label line wins
  CHECK(value(parse_reasoning_label("REASONING: LABEL: alert?\nLABEL: neutral\nLABEL: alert", labels))
            .label == 2);
  CHECK(reason(parse_reasoning_label("LABEL: alert", labels)) == ParseReason::kMissingLabelHeader);
  CHECK(reason(parse_reasoning_label("REASONING: x", labels)) == ParseReason::kMissingLabelHeader);
  CHECK(reason(parse_reasoning_label("REASONING: x\nLABEL: maybe", labels)) ==
        ParseReason::kLabelNotInSpace);
  const auto round = format_reasoning_label("because", "alert");
  CHECK(value(parse_reasoning_label(round, labels)).reasoning == "because");
}

TEST_CASE("firing verdicts") {
  const auto labels = labels3();
  const LabelId pos = labels.id("positive");
  CHECK(value(parse_firing("REASONING: y\n\nFINAL PREDICTION: positive", pos, labels)) ==
        Firing::kFired);
  CHECK(value(parse_firing("FINAL PREDICTION: 1", pos, labels)) == Firing::kFired);
  CHECK(value(parse_firing("FINAL PREDICTION:\n**ABSTAIN**", pos, labels)) == Firing::kAbstain);
  CHECK(value(parse_firing("FINAL PREDICTION: abstain (no match)", pos, labels)) ==
        Firing::kAbstain);
  CHECK(reason(parse_firing("I think it applies", pos, labels)) ==
        ParseReason::kMissingFinalPrediction);
  // another label is neither fired nor abstain
  CHECK(reason(parse_firing("FINAL PREDICTION: alert", pos, labels)) ==
        ParseReason::kLabelNotInSpace);
  CHECK(value(parse_firing("FINAL PREDICTION: NONE", pos, labels, "NONE")) == Firing::kAbstain);
}

TEST_CASE("rule candidate blocks") {
  RuleIdAllocator ids("R", 7);
  const auto drafts = value(parse_rule_candidates(
      "Intro\n<RULE_NAME>  Praise\n words </RULE_NAME>\n<RULE_DESCRIPTION>\n\nbody one\n\n"
      "</RULE_DESCRIPTION>\n<RULE_NAME>broken<RULE_NAME>Second</RULE_NAME>"
      "<RULE_DESCRIPTION>two</RULE_DESCRIPTION>",
      ids));
  REQUIRE(drafts.size() == 2);
  CHECK(drafts[0].rule_id == "R0007");
  CHECK(drafts[0].name == "Praise words");
  CHECK(drafts[0].body == "body one");
  CHECK(drafts[1].name == "Second");
  CHECK(ids.peek() == 9);
  CHECK(reason(parse_rule_candidates("<RULE_NAME>x</RULE_NAME>", ids)) ==
        ParseReason::kMalformedRuleBlock);
}

TEST_CASE("gradient fields from json and from headed text") {
  const auto j = parse_gradient_fields(
      "```json\n{\"analysis\": \"too broad\", \"exceptions\": [\"sarcasm\", \"quotes\"]}\n```");
  CHECK(j.analysis == "too broad");
  CHECK(j.exceptions == std::vector<std::string>{"sarcasm", "quotes"});

  const auto t = parse_gradient_fields(
      "Analysis: the rule misses\nthings\n\nExceptions:\n- when quoted\n  by others\n* sarcasm\n"
      "\nSummary: short\nPoints:\n1. first\n2) second\n");
  CHECK(t.analysis == "the rule misses\nthings");
  CHECK(t.exceptions == std::vector<std::string>{"when quoted by others", "sarcasm"});
  CHECK(t.summary == "short");
  CHECK(t.points == std::vector<std::string>{"first", "second"});

  const auto none = parse_gradient_fields("Analysis: fine\nExceptions:\n- none\n");
  CHECK(none.exceptions.empty());
}

TEST_CASE("strategy blocks and cluster ids") {
  const auto s = parse_strategies(
      "<STRATEGY id=\"1\">\nAnalysis: looks at tone\nacross lines\nLabel: Tone reading\n</STRATEGY>\n"
      "<STRATEGY id=\"x\">\nLabel: bad id\n</STRATEGY>\n"
      "<STRATEGY id=\"2\">\nAnalysis: no label\n</STRATEGY>\n"
      "<STRATEGY id=\"3\">\nLabel: Counting\n</STRATEGY>");
  REQUIRE(s.size() == 2);
  CHECK(s[0].id == 1);
  CHECK(s[0].analysis == "looks at tone\nacross lines");
  CHECK(s[0].label == "Tone reading");
  CHECK(s[1].id == 3);
  CHECK(parse_strategies(format_strategies(s)) == s);

  const std::vector<int> valid{1, 3};
  CHECK(parse_cluster_id(" 3 ", valid) == 3);
  CHECK(parse_cluster_id("**1**", valid) == 1);
  CHECK_FALSE(parse_cluster_id("2", valid).has_value());
  CHECK_FALSE(parse_cluster_id("OTHER", valid).has_value());
  CHECK_FALSE(parse_cluster_id("", valid).has_value());
}

TEST_CASE("equivalence verdicts") {
  const auto yes = parse_equivalence("YES\nRULE_2");
  REQUIRE(yes);
  CHECK(yes->equivalent);
  CHECK(yes->preference == Preference::kRule2);
  CHECK(parse_equivalence("LINE1: YES\nLINE2: rule 1")->preference == Preference::kRule1);
  CHECK(parse_equivalence("YES")->preference == Preference::kEither);
  CHECK_FALSE(parse_equivalence("NO\nRULE_1")->equivalent);
  CHECK_FALSE(parse_equivalence("perhaps").has_value());
}

TEST_CASE("cluster rule output") {
  RuleIdAllocator ids("M");
  const std::vector<std::string> accepted{"1"};
  auto skip = parse_cluster_rule("SKIP: nothing shared", accepted, ids);
  REQUIRE(ok(skip));
  CHECK(std::holds_alternative<SkipVerdict>(std::get<0>(skip)));
  auto rule = parse_cluster_rule(
      "<RULE_NAME>n</RULE_NAME><RULE_DESCRIPTION>Rule Label: 1\nTrigger: x</RULE_DESCRIPTION>",
      accepted, ids);
  REQUIRE(ok(rule));
  CHECK(std::get<RuleDraft>(std::get<0>(rule)).body == "Rule Label: 1\nTrigger: x");
  CHECK(reason(parse_cluster_rule(
            "<RULE_NAME>n</RULE_NAME><RULE_DESCRIPTION>Rule Label: 0\nx</RULE_DESCRIPTION>",
            accepted, ids)) == ParseReason::kMalformedRuleBlock);
  CHECK(reason(parse_cluster_rule("nothing", accepted, ids)) == ParseReason::kMalformedRuleBlock);
}

TEST_CASE("judge expected score renormalizes over score tokens") {
  std::vector<TokenProb> top{{"5", 0.5}, {"4", 0.25}, {"x", 0.2}, {"1", 0.05}};
  CHECK(judge_expected_score(top) == doctest::Approx((5 * 0.5 + 4 * 0.25 + 0.05) / 0.8));
  std::vector<TokenProb> none{{"a", 1.0}};
  try {
    (void)judge_expected_score(none);
    FAIL("expected unscoreable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kUnscoreable);
  }
  ChatResponse r;
  r.content = "Score: 4";
  CHECK_THROWS_AS(judge_expected_score(r), Error);
  r.top_logprobs = std::vector<TokenPosition>{{"Score", {{"Score", 1.0}}},
                                              {"4", {{"4", 0.6}, {"3", 0.4}}}};
  CHECK(judge_expected_score(r) == doctest::Approx(3.6));
}

TEST_CASE("parsers survive random input") {
  const auto labels = labels3();
  const std::vector<std::string> pieces{"REASONING:", "LABEL:", "FINAL PREDICTION:", "<RULE_NAME>",
                                        "</RULE_NAME>", "<RULE_DESCRIPTION>", "</RULE_DESCRIPTION>",
                                        "<STRATEGY id=\"", "</STRATEGY>", "\n", " ", "alert", "1",
                                        "ABSTAIN", "{", "}", "\"", "- ", "**", "YES", "SKIP:",
                                        "Exceptions:", "Rule Label: ", "\xE2\x80", "\0", "9999999999"};
  Rng rng(2024);
  RuleIdAllocator ids;
  const std::vector<std::string> accepted{"positive"};
  const std::vector<int> valid{1, 2};
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    const std::size_t n = uniform_index(rng, 30);
    for (std::size_t k = 0; k < n; ++k) s += pieces[uniform_index(rng, pieces.size())];
    CHECK_NOTHROW((void)parse_reasoning_label(s, labels));
    CHECK_NOTHROW((void)parse_firing(s, 1, labels));
    CHECK_NOTHROW((void)parse_rule_candidates(s, ids));
    CHECK_NOTHROW((void)parse_gradient_fields(s));
    CHECK_NOTHROW((void)parse_strategies(s));
    CHECK_NOTHROW((void)parse_cluster_id(s, valid));
    CHECK_NOTHROW((void)parse_equivalence(s));
    CHECK_NOTHROW((void)parse_cluster_rule(s, accepted, ids));
  }
}
