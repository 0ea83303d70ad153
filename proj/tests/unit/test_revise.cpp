#include <doctest.h>

#include "extc/common/error.hpp"
#include "extc/revise/revise.hpp"
#include "planted_world.hpp"

using namespace extc;
using namespace extc::testing;

namespace {

struct Fixture {
  PlantedWorld world = make_planted_world(5, 120, 80, 10);
  RevisionInputs in = make_revision_inputs(world);
  std::shared_ptr<MockBackend> backend = std::make_shared<MockBackend>();
  Gateway gateway{backend, std::make_shared<ResponseCache>()};
  ReviseConfig config;
  ReviseContext ctx{world.labels, world.task, gateway, config};

  Fixture() {
    install_revise_oracle(*backend, world.rules);
    install_planted_oracle(*backend, world.rules);
    config.max_in_flight = 4;
  }
};

Rule cue_rule(const LabelSpace& labels, std::string id, const std::string& cue) {
  return Rule::create(std::move(id), "Cue " + cue, "alert",
                      "Rule Label: alert\nTrigger Pattern: the text mentions [[" + cue + "]]", {},
                      labels);
}

}  // namespace

TEST_CASE("hard successes pair the first correct rollout with a teacher failure") {
  Fixture f;
  const auto pairs =
      collect_hard_successes(f.in.logs, f.in.hard_ids, f.in.teacher_log, f.in.examples);
  REQUIRE_FALSE(pairs.empty());
  CHECK(pairs.size() == f.in.hard_ids.size());
  CHECK(pairs[0].teacher_incorrect == "Nothing alarming stands out.");
  CHECK(pairs[0].rl_correct.find("[[") != std::string::npos);

  // an example that is not hard, or lacks a teacher failure, is dropped
  std::set<std::string> none;
  CHECK(collect_hard_successes(f.in.logs, none, f.in.teacher_log, f.in.examples).empty());
  CHECK(collect_hard_successes(f.in.logs, f.in.hard_ids, {}, f.in.examples).empty());
}

TEST_CASE("taxonomy discovery runs the rounds and a merge") {
  Fixture f;
  const auto pairs =
      collect_hard_successes(f.in.logs, f.in.hard_ids, f.in.teacher_log, f.in.examples);
  const auto tax = discover_taxonomy(f.ctx, pairs, 3);
  CHECK(tax.rounds.size() == 3);
  REQUIRE(tax.strategies.size() == 2);  // delta and omega
  CHECK(f.gateway.stats().requests_for(tmpl::kTaxonomyDiscovery) == 3);
  CHECK(f.gateway.stats().requests_for(tmpl::kTaxonomyMerge) == 1);
  CHECK(assign_cluster(f.ctx, pairs[0], tax).has_value());
}

TEST_CASE("an empty merge is an empty-taxonomy error") {
  Fixture f;
  auto backend = std::make_shared<MockBackend>();
  backend->reply("*", "no strategies here");
  Gateway gw(backend);
  ReviseContext ctx{f.world.labels, f.world.task, gw, f.config};
  const auto pairs =
      collect_hard_successes(f.in.logs, f.in.hard_ids, f.in.teacher_log, f.in.examples);
  try {
    (void)discover_taxonomy(ctx, pairs, 2);
    FAIL("expected empty taxonomy");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kEmptyTaxonomy);
  }
}

TEST_CASE("cluster synthesis honours SKIP and the label gate") {
  Fixture f;
  RuleIdAllocator ids("Z");
  PairedTrace p{"x", "delta", f.world.labels.id("alert"), "t", "mentions [[delta]]", 1};
  const std::vector<PairedTrace> pairs{p};
  auto rule = synthesize_cluster_rule(f.ctx, pairs, f.world.labels.id("alert"), f.in.existing_sop, ids);
  REQUIRE(rule);
  CHECK(rule->provenance().origin == Origin::kRlMined);
  CHECK(rule->body().rfind("Rule Label: alert\n", 0) == 0);
  CHECK_FALSE(
      synthesize_cluster_rule(f.ctx, pairs, f.world.labels.id("positive"), f.in.existing_sop, ids));

  auto backend = std::make_shared<MockBackend>();
  backend->reply(std::string(tmpl::kClusterSynthesis),
                 "<RULE_NAME>n</RULE_NAME><RULE_DESCRIPTION>Rule Label: positive\nx</RULE_DESCRIPTION>");
  Gateway gw(backend);
  ReviseContext ctx{f.world.labels, f.world.task, gw, f.config};
  CHECK_FALSE(synthesize_cluster_rule(ctx, pairs, f.world.labels.id("alert"), {}, ids));
}

TEST_CASE("dedup keeps the preferred member of each equivalence class") {
  Fixture f;
  const auto& labels = f.world.labels;
  const std::vector<Rule> cands{cue_rule(labels, "C1", "delta"), cue_rule(labels, "C2", "omega"),
                                cue_rule(labels, "C3", "delta")};
  const auto kept = dedup_candidates(f.ctx, cands);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].id() == "C1");
  CHECK(kept[1].id() == "C2");
  CHECK(f.gateway.stats().requests_for(tmpl::kEquivalenceJudge) == 3);

  auto backend = std::make_shared<MockBackend>();
  backend->reply(std::string(tmpl::kEquivalenceJudge), "YES\nRULE_2");
  Gateway gw(backend);
  ReviseContext ctx{labels, f.world.task, gw, f.config};
  const auto second = dedup_candidates(ctx, std::vector<Rule>{cands[0], cands[2]});
  REQUIRE(second.size() == 1);
  CHECK(second[0].id() == "C3");
}

TEST_CASE("selection on val_hard never falls below the existing SOP") {
  Fixture f;
  const auto& labels = f.world.labels;
  const OptimizerConfig oc;
  const OptimizerContext octx{labels, f.world.task, f.gateway, oc};
  FiringTable table;
  const std::vector<Rule> cands{cue_rule(labels, "C1", "delta"), cue_rule(labels, "C2", "omega"),
                                cue_rule(labels, "C3", "report")};
  for (const auto& ex : f.in.val_hard) {
    for (const auto& r : cands) classify_rule(octx, ex, r, table);
    for (const auto& r : f.in.existing_sop) classify_rule(octx, ex, r, table);
  }
  const auto sel = select_on_val_hard(cands, f.in.existing_sop, f.in.val_hard, table, labels, 2, 1.0);
  CHECK(sel.score >= sel.baseline);
  CHECK(sel.addition_ids == std::vector<std::string>{"C1"});

  const auto none = select_on_val_hard({}, f.in.existing_sop, f.in.val_hard, table, labels, 2, 1.0);
  CHECK(none.addition_ids.empty());
  CHECK(none.score == none.baseline);
}

TEST_CASE("the full pipeline recovers the missing rule") {
  Fixture f;
  FiringTable table;
  const auto result = run_revision(f.ctx, f.in.existing_sop, f.in.logs, f.in.hard_ids,
                                   f.in.teacher_log, f.in.examples, f.in.val_hard, table);
  CHECK(result.taxonomy.strategies.size() == 2);
  REQUIRE(result.deduped.size() == 1);
  CHECK(rule_markers(result.deduped[0].body()).triggers == std::vector<std::string>{"delta"});
  CHECK(result.sop.size() == f.in.existing_sop.size() + 1);
  CHECK(result.selection.score > result.selection.baseline);
  CHECK(result.deduped[0].id() == "M0001");
}
