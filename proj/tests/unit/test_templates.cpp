#include <doctest.h>

#include "extc/common/error.hpp"
#include "extc/gateway/templates.hpp"
#include "planted_world.hpp"

using namespace extc;

TEST_CASE("every template renders with its declared placeholders") {
  for (const auto& id : template_ids()) {
    const auto& t = prompt_template(id);
    Bindings b;
    for (const auto& name : t.placeholders()) b[name] = "<" + name + ">";
    const auto p = render(id, b);
    CHECK(p.template_id == id);
    const auto& user = p.messages.back().content;
    for (const auto& name : t.placeholders()) {
      if (t.system_placeholder && name == *t.system_placeholder) continue;
      CHECK_MESSAGE(user.find("<" + name + ">") != std::string::npos, id << " lost " << name);
    }
    CHECK(p.bindings.size() == t.placeholders().size());
  }
}

TEST_CASE("all fifteen templates are registered") {
  CHECK(template_ids().size() == 15);
  CHECK_THROWS_AS(prompt_template("nope"), Error);
}

TEST_CASE("a missing binding names the placeholder") {
  try {
    (void)render(tmpl::kRuleClassifier, {{"task_framing", "x"}, {"rule_text", "r"}});
    FAIL("expected missing placeholder");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kMissingPlaceholder);
    CHECK(std::string(e.what()).find("{report}") != std::string::npos);
  }
}

TEST_CASE("substitution is single pass") {
  CHECK(substitute("a {x} b", {{"x", "{y}"}, {"y", "boom"}}) == "a {y} b");
  CHECK(substitute("{ not a marker } {1x}", {}) == "{ not a marker } {1x}");
  CHECK(substitute("json {\"k\": 1}", {}) == "json {\"k\": 1}");
}

TEST_CASE("rule classifier prompt carries the framing as a system message") {
  const auto labels = testing::planted_labels();
  const auto task = testing::planted_task();
  auto b = task.base_bindings(labels);
  b["rule_text"] = "R";
  b["report"] = "some text";
  b["RULE_LABEL"] = "positive";
  const auto p = render(tmpl::kRuleClassifier, b);
  REQUIRE(p.messages.size() == 2);
  CHECK(p.messages[0].role == Role::kSystem);
  CHECK(p.messages[0].content == task.task_framing);
  const auto& user = p.messages[1].content;
  CHECK(user.rfind("Here is the rule you want to check:\n<RULE>\nR\n</RULE>", 0) == 0);
  CHECK(user.find("Use only one of these values for the final prediction: positive (the rule "
                  "applies) or ABSTAIN") != std::string::npos);
}

TEST_CASE("task profile helpers") {
  TaskProfile t;
  t.input_tag = "<REVIEWER_COMMENTS>";
  CHECK(t.input_close_tag() == "</REVIEWER_COMMENTS>");
  t.input_tag = "<DOC lang=\"en\">";
  CHECK(t.input_close_tag() == "</DOC>");
  CHECK(count_word(3) == "three");
  CHECK(count_word(12) == "12");
}

TEST_CASE("rulebook formatting numbers rules and uses label tokens") {
  const auto labels = LabelSpace::ordered_by_priority({"no", "yes"}, {{"yes", "1"}, {"no", "0"}});
  std::vector<Rule> rules{Rule::create("A", "first", "yes", "body a", {}, labels),
                          Rule::create("B", "second", "yes", "body b", {}, labels)};
  CHECK(format_rulebook(rules, labels) ==
        "Rule 1: first (fires -> 1)\nbody a\n\nRule 2: second (fires -> 1)\nbody b");
}

TEST_CASE("request hash depends on every keyed field") {
  const auto p = render(tmpl::kLabelOnly, {{"task_framing", "f"},
                                           {"input_tag", "<X>"},
                                           {"input_close_tag", "</X>"},
                                           {"text", "t"},
                                           {"labels", "a / b"}});
  const auto base = request_hash(make_request(p, "m", 0.0));
  CHECK(base == request_hash(make_request(p, "m", 0.0)));
  CHECK(base != request_hash(make_request(p, "m2", 0.0)));
  CHECK(base != request_hash(make_request(p, "m", 0.5)));
  CHECK(base != request_hash(make_request(p, "m", 0.0, 5)));
  CHECK(base != request_hash(make_request(p, "m", 0.0, std::nullopt, "s")));
  CHECK(base.size() == 64);
}
