#include <doctest.h>

#include "extc/common/error.hpp"
#include "extc/gateway/mock_backend.hpp"
#include "extc/gateway/parsers.hpp"
#include "extc/gateway/templates.hpp"

using namespace extc;

namespace {

ChatRequest req() {
  ChatRequest r;
  r.model = "m";
  r.messages = {{Role::kUser, "x"}};
  return r;
}

RequestMeta meta(std::string id, Bindings b = {}) { return {std::move(id), std::move(b)}; }

}  // namespace

TEST_CASE("responders are consulted in order and unanswered requests fail") {
  MockBackend m;
  m.on("a", [](const ChatRequest&, const RequestMeta& mt) -> std::optional<ChatResponse> {
    if (mt.bindings.count("k")) return ChatResponse{"first", std::nullopt};
    return std::nullopt;
  });
  m.reply("a", "second");
  CHECK(m.send(req(), meta("a", {{"k", "1"}})).content == "first");
  CHECK(m.send(req(), meta("a")).content == "second");
  try {
    m.send(req(), meta("b"));
    FAIL("expected protocol error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kProtocol);
  }
  CHECK(m.calls_for("a") == 2);
}

TEST_CASE("scripted responses match on bindings and seed tags") {
  const auto m = MockBackend::from_script(nlohmann::json::parse(R"({
    "responses": [
      {"template": "t", "when": {"text": {"contains": "cat"}}, "content": "feline"},
      {"template": "t", "when": {"@seed_tag": {"equals": "s2"}}, "content": "second"},
      {"template": "*", "content": "fallback",
       "top_logprobs": [{"token": "3", "top": [["3", 0.5], ["4", 0.5]]}]}
    ]})"));
  CHECK(m->send(req(), meta("t", {{"text", "a cat"}})).content == "feline");
  auto r = req();
  r.seed_tag = "s2";
  CHECK(m->send(r, meta("t", {{"text", "dog"}})).content == "second");
  const auto fb = m->send(req(), meta("other"));
  CHECK(fb.content == "fallback");
  CHECK(judge_expected_score(fb) == doctest::Approx(3.5));
}

TEST_CASE("malformed scripts are config errors") {
  for (const char* s : {R"({"responses": {}})", R"({"responses": [{"template": "t"}]})",
                        R"({"responses": [{"template": "t", "content": "x", "when": {"a": {"like": "b"}}}]})",
                        R"({"planted_rules": [{"label": "x"}]})"}) {
    try {
      (void)MockBackend::from_script(nlohmann::json::parse(s));
      FAIL("expected config error for " << s);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kConfig);
    }
  }
}

TEST_CASE("marker helpers") {
  CHECK(marked_words("a [[Alpha]] b [[beta]] [[alpha]]") == std::vector<std::string>{"alpha", "beta"});
  const auto mk = rule_markers(
      "Trigger Pattern:\n- [[beta]]\nExceptions:\n- [[gamma]]\nExamples\nSource: [[zeta]]");
  CHECK(mk.triggers == std::vector<std::string>{"beta"});
  CHECK(mk.exceptions == std::vector<std::string>{"gamma"});
  CHECK(contains_word("The Beta test", "beta"));
  CHECK_FALSE(contains_word("alphabet", "alpha"));
}

TEST_CASE("planted oracle classifies by the markers in the rule text") {
  MockBackend m;
  install_planted_oracle(m, {{"positive", {"beta"}, {"gamma"}}});
  const auto labels = LabelSpace::ordered_by_priority({"neutral", "positive"});
  const std::string rule = "Trigger Pattern:\n- [[beta]]\nExceptions:\n- [[gamma]]";
  auto classify = [&](const std::string& report) {
    const auto r = m.send(req(), meta(std::string(tmpl::kRuleClassifier),
                                      {{"rule_text", rule},
                                       {"report", report},
                                       {"RULE_LABEL", "positive"},
                                       {"ABSTAIN", "ABSTAIN"}}));
    return std::get<Firing>(parse_firing(r.content, 1, labels));
  };
  CHECK(classify("beta here") == Firing::kFired);
  CHECK(classify("beta and gamma") == Firing::kAbstain);
  CHECK(classify("nothing") == Firing::kAbstain);
}

TEST_CASE("planted oracle proposes the exception it sees") {
  MockBackend m;
  install_planted_oracle(m, {{"positive", {"beta"}, {"gamma"}}});
  const auto r = m.send(req(), meta(std::string(tmpl::kGradientExceptions),
                                    {{"RULE", "Trigger Pattern:\n- [[beta]]"},
                                     {"REPORT", "beta gamma"}}));
  const auto g = parse_gradient_fields(r.content);
  REQUIRE(g.exceptions.size() == 1);
  CHECK(marked_words(g.exceptions[0]) == std::vector<std::string>{"gamma"});
}
