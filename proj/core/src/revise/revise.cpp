#include "extc/revise/revise.hpp"

#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "extc/common/error.hpp"
#include "extc/common/parallel.hpp"
#include "extc/common/random.hpp"
#include "extc/common/text.hpp"
#include "extc/decisionset/subset_search.hpp"

namespace extc {

namespace {

std::string trace_entries(std::span<const PairedTrace> traces, const LabelSpace& labels) {
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    blocks.push_back("Trace " + std::to_string(i + 1) + " (gold label: " +
                     label_token(labels, traces[i].gold) + "):\n" + traces[i].rl_correct);
  }
  return text::join(blocks, "\n\n");
}

std::string pair_entries(std::span<const PairedTrace> pairs, const LabelSpace& labels) {
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    blocks.push_back("Pair " + std::to_string(i + 1) + " (gold label: " +
                     label_token(labels, p.gold) + ")\nInput:\n" + p.text +
                     "\nTeacher reasoning (incorrect):\n" + p.teacher_incorrect +
                     "\nRL reasoning (correct):\n" + p.rl_correct);
  }
  return text::join(blocks, "\n\n");
}

std::string round_entries(const std::vector<std::vector<Strategy>>& rounds) {
  std::vector<std::string> blocks;
  for (std::size_t k = 0; k < rounds.size(); ++k) {
    blocks.push_back("Round " + std::to_string(k + 1) + ":\n" + format_strategies(rounds[k]));
  }
  return text::join(blocks, "\n\n");
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

OptimizerConfig classifier_config(const ReviseConfig& c) {
  OptimizerConfig oc;
  oc.classifier = c.classifier;
  oc.max_in_flight = c.max_in_flight;
  return oc;
}

}  // namespace

void ReviseConfig::validate() const {
  require(rounds >= 1, "rounds must be >= 1");
  require(K_add >= 1, "K_add must be >= 1");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(beam_width >= 1, "beam_width must be >= 1");
  require(max_positive_pairs + max_negative_pairs >= 1, "pair caps must allow at least one pair");
  require(max_in_flight >= 1, "max_in_flight must be >= 1");
  require(!rule_id_prefix.empty(), "rule_id_prefix must not be empty");
}

std::vector<int> StrategyTaxonomy::ids() const {
  std::vector<int> out;
  for (const auto& s : strategies) out.push_back(s.id);
  return out;
}

std::vector<PairedTrace> collect_hard_successes(std::span<const RolloutGroup> rollout_logs,
                                                const std::set<std::string>& hard_ids,
                                                std::span<const TeacherOutcome> teacher_log,
                                                std::span<const Example> examples) {
  std::map<std::string, const Example*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);
  std::map<std::string, const TeacherTrace*> teacher_failure;
  for (const auto& o : teacher_log) {
    for (const auto& t : o.attempts) {
      if (!t.accepted) {
        teacher_failure.emplace(o.example_id, &t);
        break;
      }
    }
  }

  std::vector<PairedTrace> out;
  std::set<std::string> done;
  for (const auto& g : rollout_logs) {
    if (!hard_ids.contains(g.example_id) || done.contains(g.example_id)) continue;
    const Rollout* correct = nullptr;
    for (const auto& r : g.rollouts) {
      if (r.parsed && r.parsed->label == g.gold) {
        correct = &r;
        break;
      }
    }
    if (!correct) continue;
    done.insert(g.example_id);
    auto ft = teacher_failure.find(g.example_id);
    if (ft == teacher_failure.end()) {
      spdlog::warn("hard example {} has no recorded teacher failure; skipped", g.example_id);
      continue;
    }
    auto ex = by_id.find(g.example_id);
    if (ex == by_id.end()) {
      spdlog::warn("hard example {} missing from the dataset; skipped", g.example_id);
      continue;
    }
    const TeacherTrace& t = *ft->second;
    out.push_back({g.example_id, ex->second->text, g.gold,
                   t.reasoning.empty() ? t.raw : t.reasoning, correct->parsed->reasoning,
                   std::nullopt});
  }
  return out;
}

StrategyTaxonomy discover_taxonomy(const ReviseContext& ctx, std::span<const PairedTrace> traces,
                                   int rounds) {
  require(!traces.empty(), "taxonomy discovery needs at least one trace");
  require(rounds >= 1, "rounds must be >= 1");

  std::vector<PairedTrace> sample(traces.begin(), traces.end());
  if (ctx.config.max_discovery_traces > 0 && sample.size() > ctx.config.max_discovery_traces) {
    Rng rng(derive_seed(ctx.config.seed, "taxonomy-sample"));
    auto idx = sample_without_replacement(rng, sample.size(), ctx.config.max_discovery_traces);
    std::sort(idx.begin(), idx.end());
    std::vector<PairedTrace> kept;
    for (auto i : idx) kept.push_back(sample[i]);
    sample = std::move(kept);
  }

  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["NUM_SAMPLES"] = std::to_string(sample.size());
  b["ROLLOUT_ENTRIES"] = trace_entries(sample, ctx.labels);
  const Prompt discovery = render(tmpl::kTaxonomyDiscovery, b);

  StrategyTaxonomy tax;
  tax.rounds.resize(static_cast<std::size_t>(rounds));
  parallel_for(tax.rounds.size(), ctx.config.max_in_flight, [&](std::size_t k) {
    const auto response = ctx.gateway.complete(discovery, ctx.config.analysis.model,
                                               ctx.config.analysis.temperature, std::nullopt,
                                               "taxonomy-round-" + std::to_string(k + 1));
    tax.rounds[k] = parse_strategies(response.content);
  });

  Bindings m = ctx.task.base_bindings(ctx.labels);
  m["NUM_ROUNDS"] = count_word(tax.rounds.size());
  m["ROUND_ENTRIES"] = round_entries(tax.rounds);
  const auto merged = ctx.gateway.complete(render(tmpl::kTaxonomyMerge, m),
                                           ctx.config.analysis.model,
                                           ctx.config.analysis.temperature, std::nullopt,
                                           "taxonomy-merge");
  tax.strategies = parse_strategies(merged.content);
  if (tax.strategies.empty()) fail(Errc::kEmptyTaxonomy, "merge pass produced no strategies");
  return tax;
}

std::optional<int> assign_cluster(const ReviseContext& ctx, const PairedTrace& trace,
                                  const StrategyTaxonomy& taxonomy) {
  require(!taxonomy.strategies.empty(), "empty taxonomy");
  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["TAXONOMY"] = format_strategies(taxonomy.strategies);
  b["REASONING"] = trace.rl_correct;
  const auto response = ctx.gateway.complete(render(tmpl::kRolloutClassification, b),
                                             ctx.config.assign.model,
                                             ctx.config.assign.temperature);
  const auto ids = taxonomy.ids();
  auto id = parse_cluster_id(response.content, ids);
  if (!id) {
    const auto answer = text::trim(response.content);
    if (!text::iequals(answer, "OTHER") && !text::iequals(answer, "\"OTHER\"")) {
      spdlog::warn("cluster answer '{}' for {} is not a known strategy; using OTHER", answer,
                   trace.example_id);
    }
  }
  return id;
}

std::optional<Rule> synthesize_cluster_rule(const ReviseContext& ctx,
                                            std::span<const PairedTrace> pairs, LabelId target,
                                            std::span<const Rule> existing_sop,
                                            RuleIdAllocator& ids) {
  require(!pairs.empty(), "cluster has no pairs");
  require(target != ctx.labels.default_label(), "rules never target the default label");
  const std::string token = label_token(ctx.labels, target);

  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["EXISTING_RULES"] = existing_sop.empty() ? std::string("(none)")
                                             : format_rulebook(existing_sop, ctx.labels);
  b["ROLLOUT_ENTRIES"] = pair_entries(pairs, ctx.labels);
  b["RULE_LABEL"] = token;
  const auto response = ctx.gateway.complete(render(tmpl::kClusterSynthesis, b),
                                             ctx.config.synthesis.model,
                                             ctx.config.synthesis.temperature);
  const std::vector<std::string> accepted{token};
  auto parsed = parse_cluster_rule(response.content, accepted, ids);
  if (!ok(parsed)) {
    spdlog::warn("cluster rule for label {} rejected ({})", ctx.labels.name(target),
                 to_string(std::get<ParseFailure>(parsed).reason));
    return std::nullopt;
  }
  auto& v = std::get<std::variant<SkipVerdict, RuleDraft>>(parsed);
  if (std::holds_alternative<SkipVerdict>(v)) {
    spdlog::info("cluster synthesis skipped label {}", ctx.labels.name(target));
    return std::nullopt;
  }
  auto& d = std::get<RuleDraft>(v);
  try {
    return Rule::create(std::move(d.rule_id), std::move(d.name), ctx.labels.name(target),
                        std::move(d.body), {Origin::kRlMined, {}, 0}, ctx.labels);
  } catch (const Error& e) {
    spdlog::warn("cluster rule dropped: {}", e.what());
    return std::nullopt;
  }
}

std::vector<Rule> dedup_candidates(const ReviseContext& ctx, std::span<const Rule> candidates) {
  const std::size_t n = candidates.size();
  if (n <= 1) return {candidates.begin(), candidates.end()};

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  // Verdicts are keyed by pair index, so completion order is irrelevant.
  std::vector<std::optional<Verdict>> verdicts(pairs.size());
  const Bindings base = ctx.task.base_bindings(ctx.labels);
  parallel_for(pairs.size(), ctx.config.max_in_flight, [&](std::size_t k) {
    Bindings b = base;
    b["RULE_1_BODY"] = format_rule(candidates[pairs[k].first], ctx.labels);
    b["RULE_2_BODY"] = format_rule(candidates[pairs[k].second], ctx.labels);
    const auto response = ctx.gateway.complete(render(tmpl::kEquivalenceJudge, b),
                                               ctx.config.judge.model,
                                               ctx.config.judge.temperature);
    verdicts[k] = parse_equivalence(response.content);
    if (!verdicts[k]) {
      spdlog::warn("equivalence verdict for ({}, {}) unparseable; treated as NO",
                   candidates[pairs[k].first].id(), candidates[pairs[k].second].id());
    }
  });

  DisjointSets sets(n);
  std::vector<bool> dominated(n, false);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (!verdicts[k] || !verdicts[k]->equivalent) continue;
    const auto [i, j] = pairs[k];
    sets.unite(i, j);
    dominated[verdicts[k]->preference == Preference::kRule2 ? i : j] = true;
  }
  std::map<std::size_t, std::size_t> keeper;  // root -> survivor
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (!dominated[i] && !keeper.contains(root)) keeper[root] = i;
  }
  for (std::size_t i = 0; i < n; ++i) keeper.emplace(sets.find(i), sets.find(i));

  std::vector<Rule> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keeper.at(sets.find(i)) == i) out.push_back(candidates[i]);
  }
  return out;
}

ValHardSelection select_on_val_hard(std::span<const Rule> candidates,
                                    std::span<const Rule> existing_sop,
                                    std::span<const Example> val_hard, const FiringTable& table,
                                    const LabelSpace& labels, std::size_t K_add, double lambda,
                                    std::size_t beam_width) {
  SubsetSearch search(candidates, table, val_hard, labels, lambda, existing_sop);
  ValHardSelection out;
  out.baseline = search.objective({});
  if (candidates.empty()) {
    out.score = out.baseline;
    return out;
  }
  const ActiveSet chosen = search.beam(K_add, beam_width, ActiveSet{});
  out.addition_ids = chosen.rule_ids;
  out.score = chosen.score;
  return out;
}

RevisionResult run_revision(const ReviseContext& ctx, std::span<const Rule> existing_sop,
                            std::span<const RolloutGroup> rollout_logs,
                            const std::set<std::string>& hard_ids,
                            std::span<const TeacherOutcome> teacher_log,
                            std::span<const Example> examples, std::span<const Example> val_hard,
                            FiringTable& table) {
  ctx.config.validate();
  require(!val_hard.empty(), "val_hard is empty");
  const auto& labels = ctx.labels;
  RevisionResult result;

  // Stage 1.
  result.pairs = collect_hard_successes(rollout_logs, hard_ids, teacher_log, examples);
  require(!result.pairs.empty(), "no hard example has both a correct rollout and a teacher failure");

  // Stages 2 and 3.
  result.taxonomy = discover_taxonomy(ctx, result.pairs, ctx.config.rounds);
  parallel_for(result.pairs.size(), ctx.config.max_in_flight, [&](std::size_t i) {
    result.pairs[i].cluster_id = assign_cluster(ctx, result.pairs[i], result.taxonomy);
  });

  // Stage 4: one call per (cluster, target label) with a seeded stratified mix.
  std::vector<LabelId> targets;
  if (ctx.config.target_labels.empty()) {
    for (LabelId l = 0; l < labels.size(); ++l) {
      if (l != labels.default_label()) targets.push_back(l);
    }
  } else {
    for (const auto& name : ctx.config.target_labels) targets.push_back(labels.id(name));
  }
  struct Job {
    int cluster;
    LabelId target;
    std::vector<PairedTrace> pairs;
  };
  std::vector<Job> jobs;
  for (const auto& s : result.taxonomy.strategies) {
    std::vector<const PairedTrace*> members;
    for (const auto& p : result.pairs) {
      if (p.cluster_id == s.id) members.push_back(&p);
    }
    if (members.empty()) continue;
    for (LabelId target : targets) {
      std::vector<const PairedTrace*> pos, neg;
      for (const auto* p : members) (p->gold == target ? pos : neg).push_back(p);
      Rng rng(derive_seed(ctx.config.seed,
                          "pairs:" + std::to_string(s.id) + ":" + labels.name(target)));
      Job job{s.id, target, {}};
      auto take = [&](const std::vector<const PairedTrace*>& from, std::size_t cap) {
        auto idx = sample_without_replacement(rng, from.size(), std::min(cap, from.size()));
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) job.pairs.push_back(*from[i]);
      };
      take(pos, ctx.config.max_positive_pairs);
      take(neg, ctx.config.max_negative_pairs);
      if (!job.pairs.empty()) jobs.push_back(std::move(job));
    }
  }
  RuleIdAllocator scratch("__mined_");
  std::vector<std::optional<Rule>> drafts(jobs.size());
  parallel_for(jobs.size(), ctx.config.max_in_flight, [&](std::size_t k) {
    drafts[k] = synthesize_cluster_rule(ctx, jobs[k].pairs, jobs[k].target, existing_sop, scratch);
  });

  std::set<std::string> taken;
  for (const auto& r : existing_sop) taken.insert(r.id());
  RuleIdAllocator ids(ctx.config.rule_id_prefix);
  auto fresh_id = [&] {
    for (;;) {
      auto id = ids.allocate();
      if (taken.insert(id).second) return id;
    }
  };
  std::map<int, std::vector<Rule>> by_cluster;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!drafts[k]) continue;
    Rule r = Rule::create(fresh_id(), drafts[k]->name(), drafts[k]->target_label(),
                          drafts[k]->body(), drafts[k]->provenance(), labels);
    result.candidates.push_back(r);
    by_cluster[jobs[k].cluster].push_back(std::move(r));
  }

  // Stage 5: dedup within each cluster.
  for (const auto& [cluster, rules] : by_cluster) {
    for (auto& r : dedup_candidates(ctx, rules)) result.deduped.push_back(std::move(r));
  }

  // Selection on val_hard: fill missing firings, then search.
  const OptimizerConfig oc = classifier_config(ctx.config);
  const OptimizerContext octx{labels, ctx.task, ctx.gateway, oc};
  std::vector<const Rule*> to_score;
  for (const auto& r : existing_sop) to_score.push_back(&r);
  for (const auto& r : result.deduped) to_score.push_back(&r);
  std::vector<std::pair<std::size_t, std::size_t>> missing;
  for (std::size_t r = 0; r < to_score.size(); ++r) {
    for (std::size_t i = 0; i < val_hard.size(); ++i) {
      if (!table.find(val_hard[i].id, to_score[r]->id())) missing.emplace_back(r, i);
    }
  }
  result.classifier_calls = missing.size();
  parallel_for(missing.size(), ctx.config.max_in_flight, [&](std::size_t k) {
    classify_rule(octx, val_hard[missing[k].second], *to_score[missing[k].first], table);
  });

  result.selection = select_on_val_hard(result.deduped, existing_sop, val_hard, table, labels,
                                        ctx.config.K_add, ctx.config.lambda,
                                        ctx.config.beam_width);
  result.sop.assign(existing_sop.begin(), existing_sop.end());
  for (const auto& r : result.deduped) {
    if (std::find(result.selection.addition_ids.begin(), result.selection.addition_ids.end(),
                  r.id()) != result.selection.addition_ids.end()) {
      result.sop.push_back(r);
    }
  }
  spdlog::info("revision: {} pairs, {} strategies, {} candidates, {} after dedup, {} added "
               "(val_hard objective {:.4f} -> {:.4f})",
               result.pairs.size(), result.taxonomy.strategies.size(), result.candidates.size(),
               result.deduped.size(), result.selection.addition_ids.size(),
               result.selection.baseline, result.selection.score);
  return result;
}

}  // namespace extc
