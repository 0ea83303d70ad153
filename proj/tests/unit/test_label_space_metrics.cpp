#include <doctest.h>

#include <vector>

#include "extc/common/error.hpp"
#include "extc/decisionset/compose.hpp"
#include "extc/decisionset/firing_table.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/metrics.hpp"
#include "extc/decisionset/types.hpp"

using namespace extc;

namespace {

LabelSpace binary() {
  return LabelSpace({"accept", "reject"}, {{"reject", 1}, {"accept", 2}}, {{"accept", "1"}, {"reject", "0"}});
}

}  // namespace

TEST_CASE("label space picks the lowest rank as default") {
  const auto labels = binary();
  CHECK(labels.name(labels.default_label()) == "reject");
  CHECK(labels.resolve("ACCEPT") == labels.find("accept"));
  CHECK(labels.resolve("1") == labels.find("accept"));
  CHECK_FALSE(labels.resolve("maybe").has_value());
  CHECK(labels.joined() == "accept / reject");
}

TEST_CASE("label space rejects malformed priorities") {
  CHECK_THROWS_AS(LabelSpace({"a", "b"}, {{"a", 1}, {"b", 1}}), Error);
  CHECK_THROWS_AS(LabelSpace({"a", "b"}, {{"a", 1}}), Error);
  CHECK_THROWS_AS(LabelSpace({"a", "a"}, {{"a", 1}}), Error);
  CHECK_THROWS_AS(LabelSpace({"a"}, {{"a", 1}}), Error);
}

TEST_CASE("composition takes the highest-priority fired label") {
  const auto labels = LabelSpace::ordered_by_priority({"neutral", "positive", "alert"});
  std::vector<RuleVerdict> none{{"positive", false}, {"alert", false}};
  CHECK(compose(none, labels) == labels.id("neutral"));
  std::vector<RuleVerdict> both{{"positive", true}, {"alert", true}};
  CHECK(compose(both, labels) == labels.id("alert"));
  std::vector<RuleVerdict> reversed{{"alert", true}, {"positive", true}};
  CHECK(compose(reversed, labels) == labels.id("alert"));
  std::vector<RuleVerdict> bad{{"unknown", true}};
  CHECK_THROWS_AS(compose(bad, labels), Error);
}

TEST_CASE("rules never target the default label") {
  const auto labels = binary();
  CHECK_THROWS_AS(Rule::create("R1", "n", "reject", "body", {}, labels), Error);
  CHECK_THROWS_AS(Rule::create("R1", "n", "accept", "  ", {}, labels), Error);
  CHECK_THROWS_AS(Rule::create("R 1", "n", "accept", "body", {}, labels), Error);
  const auto r = Rule::create("R1", "n", "accept", "body", {}, labels);
  CHECK(r.target_label() == "accept");
}

TEST_CASE("rule pool is append-only") {
  const auto labels = binary();
  RulePool pool;
  pool.add(Rule::create("R1", "n", "accept", "body", {}, labels), 1);
  CHECK_THROWS_AS(pool.add(Rule::create("R1", "m", "accept", "other", {}, labels), 2), Error);
  CHECK(pool.size() == 1);
  CHECK(pool.created_at("R1") == 1);
}

TEST_CASE("firing table caches verdicts and reports gaps") {
  FiringTable t;
  CHECK(t.insert("x1", "R1", Firing::kFired));
  CHECK_FALSE(t.insert("x1", "R1", Firing::kFired));
  CHECK_THROWS_AS(t.insert("x1", "R1", Firing::kAbstain), Error);
  CHECK(t.at("x1", "R1") == Firing::kFired);
  try {
    (void)t.at("x2", "R1");
    FAIL("expected incomplete cache");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kIncompleteCache);
    CHECK(std::string(e.what()).find("x2") != std::string::npos);
  }
  FiringTable copy = t;
  CHECK(copy.size() == 1);
}

TEST_CASE("macro-F1 and balanced accuracy on a small confusion pattern") {
  const auto labels = LabelSpace::ordered_by_priority({"a", "b", "c"});
  // gold: a a b b c c ; pred: a b b b a c
  std::vector<LabelId> gold{0, 0, 1, 1, 2, 2};
  std::vector<Prediction> pred{0, 1, 1, 1, 0, 2};
  const double f1a = 2.0 * 1 / (2 * 1 + 1 + 1);
  const double f1b = 2.0 * 2 / (2 * 2 + 1 + 0);
  const double f1c = 2.0 * 1 / (2 * 1 + 0 + 1);
  CHECK(macro_f1(pred, gold, labels) == doctest::Approx((f1a + f1b + f1c) / 3).epsilon(1e-15));
  CHECK(balanced_accuracy(pred, gold, labels) == doctest::Approx((0.5 + 1.0 + 0.5) / 3));
}

TEST_CASE("parse failures count as wrong for the gold class only") {
  const auto labels = binary();
  std::vector<LabelId> gold{0, 1};
  std::vector<Prediction> pred{std::nullopt, 1};
  const auto counts = tally(pred, gold, labels.size());
  CHECK(counts.fn[0] == 1);
  CHECK(counts.fp[0] == 0);
  CHECK(counts.fp[1] == 0);
  CHECK(counts.tp[1] == 1);
}

TEST_CASE("absent classes contribute zero F1 and are skipped by balanced accuracy") {
  const auto labels = LabelSpace::ordered_by_priority({"a", "b", "c"});
  std::vector<LabelId> gold{0, 0};
  std::vector<Prediction> pred{0, 0};
  CHECK(macro_f1(pred, gold, labels) == doctest::Approx(1.0 / 3));
  CHECK(balanced_accuracy(pred, gold, labels) == doctest::Approx(1.0));
  std::vector<Prediction> short_pred{0};
  CHECK_THROWS_AS(macro_f1(short_pred, gold, labels), Error);
}
