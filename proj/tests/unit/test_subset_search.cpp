#include <doctest.h>

#include <algorithm>

#include "extc/common/error.hpp"
#include "extc/common/random.hpp"
#include "extc/decisionset/subset_search.hpp"

using namespace extc;

namespace {

struct Instance {
  LabelSpace labels = LabelSpace::ordered_by_priority({"n", "p", "q"});
  std::vector<Rule> rules;
  std::vector<Example> val;
  FiringTable table;
};

Instance random_instance(std::uint64_t seed, std::size_t m, std::size_t n) {
  Instance in;
  Rng rng(seed);
  for (std::size_t r = 0; r < m; ++r) {
    in.rules.push_back(Rule::create("R" + std::to_string(r), "rule", r % 2 ? "p" : "q", "body", {},
                                    in.labels));
  }
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.id = "x" + std::to_string(i);
    ex.gold = uniform_index(rng, 3);
    in.val.push_back(ex);
    for (const auto& r : in.rules) {
      in.table.insert(ex.id, r.id(), uniform_unit(rng) < 0.3 ? Firing::kFired : Firing::kAbstain);
    }
  }
  return in;
}

// Direct enumeration over bitmasks, independent of the search code.
double brute_best(const Instance& in, std::size_t K, double lambda) {
  double best = -1e9;
  const std::size_t m = in.rules.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < m; ++r) {
      if (mask >> r & 1) ids.push_back(in.rules[r].id());
    }
    if (ids.size() > K) continue;
    const auto ev = evaluate_subset(ids, in.rules, in.table, in.val, in.labels);
    best = std::max(best, ev.macro_f1 - lambda * static_cast<double>(ids.size()) / in.val.size());
  }
  return best;
}

}  // namespace

TEST_CASE("exhaustive search matches a bitmask oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = random_instance(seed, 7, 40);
    const auto got = exhaustive_select(in.rules, in.table, in.val, in.labels, 3, 1.0);
    CHECK(got.score == doctest::Approx(brute_best(in, 3, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("beam search with a seed never scores below the seed") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = random_instance(seed, 9, 50);
    SubsetSearch search(in.rules, in.table, in.val, in.labels, 1.0);
    ActiveSet s;
    s.rule_ids = {"R1", "R4"};
    s.score = search.objective(s.rule_ids);
    const auto got = search.beam(4, 1, s);
    CHECK(got.score >= s.score);
  }
}

TEST_CASE("empty subset scores the default-only prediction") {
  const auto in = random_instance(3, 4, 30);
  SubsetSearch search(in.rules, in.table, in.val, in.labels, 1.0);
  const auto ev = evaluate_subset({}, in.rules, in.table, in.val, in.labels);
  CHECK(search.objective({}) == ev.macro_f1);
}

TEST_CASE("ties prefer the smaller subset, then the smallest id list") {
  const auto labels = LabelSpace::ordered_by_priority({"n", "p"});
  std::vector<Rule> rules{Rule::create("B", "b", "p", "body", {}, labels),
                          Rule::create("A", "a", "p", "body", {}, labels)};
  std::vector<Example> val(4);
  FiringTable table;
  for (std::size_t i = 0; i < 4; ++i) {
    val[i].id = "x" + std::to_string(i);
    val[i].gold = i < 2 ? 1 : 0;
    // A and B fire identically on the positives.
    table.insert(val[i].id, "A", i < 2 ? Firing::kFired : Firing::kAbstain);
    table.insert(val[i].id, "B", i < 2 ? Firing::kFired : Firing::kAbstain);
  }
  const auto best = exhaustive_select(rules, table, val, labels, 2, 0.0);
  REQUIRE(best.rule_ids.size() == 1);
  CHECK(best.rule_ids.front() == "A");
  const auto beam = beam_select(rules, table, val, labels, {2, 0.0, 15});
  CHECK(beam.rule_ids == best.rule_ids);
}

TEST_CASE("sparsity penalty can make the empty set optimal") {
  const auto in = random_instance(5, 5, 10);
  const auto got = exhaustive_select(in.rules, in.table, in.val, in.labels, 4, 100.0);
  CHECK(got.rule_ids.empty());
}

TEST_CASE("fixed rules are composed in but not charged") {
  const auto labels = LabelSpace::ordered_by_priority({"n", "p"});
  std::vector<Rule> fixed{Rule::create("F", "f", "p", "body", {}, labels)};
  std::vector<Example> val(2);
  FiringTable table;
  val[0].id = "a";
  val[0].gold = 1;
  val[1].id = "b";
  table.insert("a", "F", Firing::kFired);
  table.insert("b", "F", Firing::kAbstain);
  SubsetSearch search({}, table, val, labels, 1.0, fixed);
  CHECK(search.objective({}) == doctest::Approx(1.0));
}

TEST_CASE("missing firings raise incomplete-cache") {
  auto in = random_instance(2, 3, 5);
  in.rules.push_back(Rule::create("R9", "x", "p", "body", {}, in.labels));
  try {
    SubsetSearch search(in.rules, in.table, in.val, in.labels, 1.0);
    FAIL("expected incomplete cache");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kIncompleteCache);
  }
}

TEST_CASE("exhaustive enumeration is guarded") {
  CHECK(count_subsets(4, 2) == 1 + 4 + 6);
  CHECK(count_subsets(10, 10) == 1024);
  CHECK(count_subsets(200, 200) == std::numeric_limits<std::size_t>::max());
  const auto labels = LabelSpace::ordered_by_priority({"n", "p"});
  std::vector<Rule> rules;
  std::vector<Example> val(1);
  val[0].id = "x";
  FiringTable table;
  for (int i = 0; i < 40; ++i) {
    rules.push_back(Rule::create("R" + std::to_string(i), "r", "p", "b", {}, labels));
    table.insert("x", rules.back().id(), Firing::kAbstain);
  }
  try {
    (void)exhaustive_select(rules, table, val, labels, 8, 1.0);
    FAIL("expected too-large");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kTooLarge);
  }
}

TEST_CASE("invalid search parameters are rejected") {
  const auto in = random_instance(1, 3, 5);
  SubsetSearch search(in.rules, in.table, in.val, in.labels, 1.0);
  CHECK_THROWS_AS(search.beam(0, 15), Error);
  CHECK_THROWS_AS(search.beam(2, 0), Error);
  std::vector<Example> empty;
  CHECK_THROWS_AS(SubsetSearch(in.rules, in.table, empty, in.labels, 1.0), Error);
}
