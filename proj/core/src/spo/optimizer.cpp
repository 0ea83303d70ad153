#include "extc/spo/optimizer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "extc/common/error.hpp"
#include "extc/common/parallel.hpp"
#include "extc/common/random.hpp"
#include "extc/common/text.hpp"
#include "extc/decisionset/subset_search.hpp"

namespace extc {

namespace {

constexpr int kSnapshotVersion = 1;
constexpr std::string_view kSnapshotFormat = "extc-optimizer-state";

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += '\n';
    out += "- " + item;
  }
  return out;
}

// A parsed draft becomes a rule only if Rule::create accepts it; empty
// names or bodies are dropped with a warning.
std::optional<Rule> make_rule(RuleDraft draft, const std::string& label, Provenance provenance,
                              const LabelSpace& labels) {
  try {
    return Rule::create(std::move(draft.rule_id), std::move(draft.name), label,
                        std::move(draft.body), std::move(provenance), labels);
  } catch (const Error& e) {
    spdlog::warn("dropping rule draft: {}", e.what());
    return std::nullopt;
  }
}

LabelId compose_on(const Example& ex, std::span<const Rule> rules, const FiringTable& table,
                   const LabelSpace& labels) {
  LabelId pred = labels.default_label();
  for (const auto& r : rules) {
    const LabelId target = labels.id(r.target_label());
    if (table.at(ex.id, r.id()) == Firing::kFired &&
        labels.priority(target) > labels.priority(pred)) {
      pred = target;
    }
  }
  return pred;
}

}  // namespace

void OptimizerConfig::validate() const {
  require(T >= 0, "T must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(K >= 1, "K must be >= 1");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(beam_width >= 1, "beam_width must be >= 1");
  require(max_new_rules_per_label >= 1, "max_new_rules_per_label must be >= 1");
  require(max_in_flight >= 1, "max_in_flight must be >= 1");
  require(!rule_id_prefix.empty(), "rule_id_prefix must not be empty");
}

nlohmann::ordered_json IterationReport::to_json() const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["batch_ids"] = batch_ids;
  j["false_coverage_samples"] = false_coverage_samples;
  j["blind_spot_samples"] = blind_spot_samples;
  j["skipped_gradients"] = skipped_gradients;
  j["revision_ids"] = revision_ids;
  j["synthesized_ids"] = synthesized_ids;
  j["batch_classifier_calls"] = batch_classifier_calls;
  j["val_classifier_calls"] = val_classifier_calls;
  j["objective_before"] = objective_before;
  j["objective_after"] = objective_after;
  j["active_ids"] = active_ids;
  return j;
}

Firing classify_rule(const OptimizerContext& ctx, const Example& example, const Rule& rule,
                     FiringTable& table, std::atomic<std::size_t>* parse_failures) {
  if (auto cached = table.find(example.id, rule.id())) return *cached;

  const LabelId target = ctx.labels.id(rule.target_label());
  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["rule_text"] = format_rule(rule, ctx.labels);
  b["report"] = example.text;
  b["RULE_LABEL"] = label_token(ctx.labels, target);
  const Prompt prompt = render(tmpl::kRuleClassifier, b);
  const auto response =
      ctx.gateway.complete(prompt, ctx.config.classifier.model, ctx.config.classifier.temperature);

  Firing firing = Firing::kAbstain;
  auto parsed = parse_firing(response.content, target, ctx.labels, ctx.task.abstain_token);
  if (ok(parsed)) {
    firing = std::get<Firing>(parsed);
  } else {
    if (parse_failures) parse_failures->fetch_add(1);
    spdlog::warn("classifier output for ({}, {}) unparseable ({}); recorded as abstain",
                 example.id, rule.id(), to_string(std::get<ParseFailure>(parsed).reason));
  }
  table.insert(example.id, rule.id(), firing);
  return firing;
}

ExceptionNotes gradient_exceptions(const OptimizerContext& ctx, const Example& example,
                                   LabelId gold, LabelId predicted, const Rule& rule,
                                   const FiringTable& table) {
  const LabelId target = ctx.labels.id(rule.target_label());
  require(table.at(example.id, rule.id()) == Firing::kFired,
          "rule " + rule.id() + " did not fire on " + example.id);
  require(target != gold, "rule " + rule.id() + " targets the gold label of " + example.id);

  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["RULE"] = format_rule(rule, ctx.labels);
  b["REPORT"] = example.text;
  b["PREDICTION"] = label_token(ctx.labels, predicted);
  b["LABEL"] = label_token(ctx.labels, gold);
  const auto response = ctx.gateway.complete(render(tmpl::kGradientExceptions, b),
                                             ctx.config.gradient.model,
                                             ctx.config.gradient.temperature);
  auto fields = parse_gradient_fields(response.content);
  if (fields.exceptions.empty()) {
    fail(Errc::kEmptyGradient, "no exceptions proposed for rule " + rule.id() + " on " +
                                   example.id);
  }
  return {rule.id(), example.id, std::move(fields.exceptions)};
}

ErrorPattern gradient_error_pattern(const OptimizerContext& ctx, const Example& example,
                                    LabelId gold, std::span<const Rule> active_rules_for_gold) {
  require(gold != ctx.labels.default_label(),
          "error patterns are only mined for non-default gold labels");
  for (const auto& r : active_rules_for_gold) {
    require(ctx.labels.id(r.target_label()) == gold,
            "rule " + r.id() + " does not target the gold label");
  }
  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["REPORT"] = example.text;
  b["MATCHING_RULES"] = active_rules_for_gold.empty()
                            ? std::string("(none)")
                            : format_rulebook(active_rules_for_gold, ctx.labels);
  b["PREDICTION"] = label_token(ctx.labels, ctx.labels.default_label());
  b["LABEL"] = label_token(ctx.labels, gold);
  const auto response = ctx.gateway.complete(render(tmpl::kGradientErrorPattern, b),
                                             ctx.config.gradient.model,
                                             ctx.config.gradient.temperature);
  auto fields = parse_gradient_fields(response.content);
  if (fields.points.empty() && text::trim(fields.summary).empty()) {
    fail(Errc::kEmptyGradient, "no error pattern for " + example.id);
  }
  std::string out(text::trim(fields.summary));
  if (!fields.points.empty()) {
    if (!out.empty()) out += '\n';
    out += bullet_list(fields.points);
  }
  return {example.id, gold, std::move(out)};
}

std::optional<Rule> update_rule(const OptimizerContext& ctx, const Rule& rule,
                                std::span<const ExceptionNotes> notes, int iteration,
                                RuleIdAllocator& ids) {
  std::vector<std::string> bullets;
  for (const auto& n : notes) {
    require(n.rule_id == rule.id(), "exception notes belong to another rule");
    bullets.insert(bullets.end(), n.bullets.begin(), n.bullets.end());
  }
  require(!bullets.empty(), "update_rule needs at least one exception");

  const LabelId target = ctx.labels.id(rule.target_label());
  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["RULE"] = format_rule(rule, ctx.labels);
  b["EXCEPTIONS"] = bullet_list(bullets);
  b["RULE_LABEL"] = label_token(ctx.labels, target);
  const auto response = ctx.gateway.complete(render(tmpl::kRuleUpdate, b),
                                             ctx.config.update.model,
                                             ctx.config.update.temperature);
  auto parsed = parse_rule_candidates(response.content, ids);
  if (!ok(parsed)) {
    spdlog::warn("rule update for {} returned no rule block", rule.id());
    return std::nullopt;
  }
  auto& drafts = std::get<std::vector<RuleDraft>>(parsed);
  if (drafts.size() > 1) {
    spdlog::debug("rule update for {} returned {} blocks; keeping the first", rule.id(),
                  drafts.size());
  }
  return make_rule(std::move(drafts.front()), rule.target_label(),
                   {Origin::kRevisionOf, rule.id(), iteration}, ctx.labels);
}

std::vector<Rule> synthesize_rules(const OptimizerContext& ctx,
                                   std::span<const ErrorPattern> patterns, LabelId label,
                                   std::span<const Rule> existing_rules, std::size_t max_new,
                                   int iteration, RuleIdAllocator& ids) {
  require(!patterns.empty(), "synthesize_rules needs at least one error pattern");
  require(label != ctx.labels.default_label(), "rules never target the default label");
  require(max_new >= 1, "max_new must be >= 1");
  std::vector<std::string> blocks;
  for (const auto& p : patterns) {
    require(p.gold == label, "error pattern " + p.example_id + " has another gold label");
    blocks.push_back(p.text);
  }

  Bindings b = ctx.task.base_bindings(ctx.labels);
  b["TARGET_LABEL"] = label_token(ctx.labels, label);
  b["MAX_NEW_RULES"] = std::to_string(max_new);
  b["RULES"] = existing_rules.empty() ? std::string("(none)")
                                      : format_rulebook(existing_rules, ctx.labels);
  b["ERROR_PATTERNS"] = text::join(blocks, "\n\n");
  const auto response = ctx.gateway.complete(render(tmpl::kRuleSynthesis, b),
                                             ctx.config.update.model,
                                             ctx.config.update.temperature);
  auto parsed = parse_rule_candidates(response.content, ids);
  std::vector<Rule> out;
  if (!ok(parsed)) {
    spdlog::warn("rule synthesis for label {} returned no rule block", ctx.labels.name(label));
    return out;
  }
  auto& drafts = std::get<std::vector<RuleDraft>>(parsed);
  for (auto& d : drafts) {
    if (out.size() == max_new) break;
    if (auto r = make_rule(std::move(d), ctx.labels.name(label),
                           {Origin::kNewSynthesis, {}, iteration}, ctx.labels)) {
      out.push_back(std::move(*r));
    }
  }
  return out;
}

OptimizerState initial_state(const OptimizerConfig& config, std::span<const Example> val,
                             const LabelSpace& labels) {
  config.validate();
  OptimizerState state;
  state.rng_state = serialize_rng(Rng(config.seed));
  SubsetSearch search({}, state.table, val, labels, config.lambda);
  state.active.score = search.objective({});
  state.trajectory.push_back({0, state.active.score});
  return state;
}

std::vector<Example> draw_batch(OptimizerState& state, std::span<const Example> train,
                                std::size_t batch_size) {
  require(!train.empty(), "training split is empty");
  Rng rng = deserialize_rng(state.rng_state);
  const auto idx = sample_without_replacement(rng, train.size(), std::min(batch_size, train.size()));
  state.rng_state = serialize_rng(rng);
  std::vector<Example> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(train[i]);
  return batch;
}

std::vector<Rule> active_rules(const OptimizerState& state) {
  return select_rules(state.pool, state.active.rule_ids);
}

IterationReport run_iteration(const OptimizerContext& ctx, OptimizerState& state,
                              std::span<const Example> batch, std::span<const Example> val) {
  ctx.config.validate();
  require(!val.empty(), "validation split is empty");
  const auto& labels = ctx.labels;
  const std::size_t in_flight = ctx.config.max_in_flight;

  OptimizerState next = state;  // committed only on success
  const int t = next.iteration + 1;
  IterationReport report;
  report.iteration = t;
  report.objective_before = next.active.score;
  for (const auto& ex : batch) report.batch_ids.push_back(ex.id);

  const std::vector<Rule> active = active_rules(next);
  std::atomic<std::size_t> parse_failures{0};

  // (1) Classify the batch under the active set; only uncached pairs cost a call.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t r = 0; r < active.size(); ++r) {
      if (!next.table.find(batch[i].id, active[r].id())) pairs.emplace_back(i, r);
    }
  }
  report.batch_classifier_calls = pairs.size();
  parallel_for(pairs.size(), in_flight, [&](std::size_t k) {
    classify_rule(ctx, batch[pairs[k].first], active[pairs[k].second], next.table,
                  &parse_failures);
  });

  // (2) Partition the misclassified samples.
  struct Coverage {
    std::size_t example;
    std::size_t rule;
    LabelId predicted;
  };
  std::vector<Coverage> false_coverage;
  std::map<LabelId, std::vector<std::size_t>> blind_spots;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = batch[i];
    const LabelId pred = compose_on(ex, active, next.table, labels);
    if (pred == ex.gold) continue;
    if (pred == labels.default_label()) {
      blind_spots[ex.gold].push_back(i);
      ++report.blind_spot_samples;
      continue;
    }
    ++report.false_coverage_samples;
    for (std::size_t r = 0; r < active.size(); ++r) {
      if (next.table.at(ex.id, active[r].id()) == Firing::kFired &&
          labels.id(active[r].target_label()) != ex.gold) {
        false_coverage.push_back({i, r, pred});
      }
    }
  }

  // (3) Textual gradients, in parallel, collected by index.
  std::vector<std::optional<ExceptionNotes>> notes(false_coverage.size());
  parallel_for(false_coverage.size(), in_flight, [&](std::size_t k) {
    const auto& fc = false_coverage[k];
    const Example& ex = batch[fc.example];
    try {
      notes[k] = gradient_exceptions(ctx, ex, ex.gold, fc.predicted, active[fc.rule], next.table);
    } catch (const Error& e) {
      if (e.code() != Errc::kEmptyGradient) throw;
      spdlog::info("{}", e.what());
    }
  });
  std::vector<std::pair<LabelId, std::size_t>> blind_list;
  for (const auto& [label, idx] : blind_spots) {
    for (auto i : idx) blind_list.emplace_back(label, i);
  }
  std::vector<std::optional<ErrorPattern>> patterns(blind_list.size());
  parallel_for(blind_list.size(), in_flight, [&](std::size_t k) {
    const auto [label, i] = blind_list[k];
    std::vector<Rule> matching;
    for (const auto& r : active) {
      if (labels.id(r.target_label()) == label) matching.push_back(r);
    }
    try {
      patterns[k] = gradient_error_pattern(ctx, batch[i], label, matching);
    } catch (const Error& e) {
      if (e.code() != Errc::kEmptyGradient) throw;
      spdlog::info("{}", e.what());
    }
  });
  for (const auto& n : notes) report.skipped_gradients += n ? 0 : 1;
  for (const auto& p : patterns) report.skipped_gradients += p ? 0 : 1;

  // (4) Candidate generation. Drafts get scratch ids while calls run
  // concurrently, then final ids in a fixed order so runs are reproducible.
  std::vector<std::vector<ExceptionNotes>> notes_by_rule(active.size());
  for (std::size_t k = 0; k < false_coverage.size(); ++k) {
    if (notes[k]) notes_by_rule[false_coverage[k].rule].push_back(std::move(*notes[k]));
  }
  std::vector<std::size_t> rules_to_update;
  for (std::size_t r = 0; r < active.size(); ++r) {
    if (!notes_by_rule[r].empty()) rules_to_update.push_back(r);
  }
  std::map<LabelId, std::vector<ErrorPattern>> patterns_by_label;
  for (auto& p : patterns) {
    if (p) patterns_by_label[p->gold].push_back(std::move(*p));
  }
  std::vector<LabelId> synth_labels;
  for (const auto& [label, _] : patterns_by_label) synth_labels.push_back(label);

  RuleIdAllocator scratch("__draft_");
  std::vector<std::optional<Rule>> revisions(rules_to_update.size());
  std::vector<std::vector<Rule>> synthesized(synth_labels.size());
  const std::size_t jobs = rules_to_update.size() + synth_labels.size();
  parallel_for(jobs, in_flight, [&](std::size_t k) {
    if (k < rules_to_update.size()) {
      const std::size_t r = rules_to_update[k];
      revisions[k] = update_rule(ctx, active[r], notes_by_rule[r], t, scratch);
    } else {
      const std::size_t s = k - rules_to_update.size();
      const LabelId label = synth_labels[s];
      synthesized[s] = synthesize_rules(ctx, patterns_by_label[label], label, active,
                                        ctx.config.max_new_rules_per_label, t, scratch);
    }
  });

  RuleIdAllocator ids(ctx.config.rule_id_prefix, next.next_rule_id);
  std::vector<Rule> candidates;
  auto adopt = [&](const Rule& draft) {
    Rule rule = Rule::create(ids.allocate(), draft.name(), draft.target_label(), draft.body(),
                             draft.provenance(), labels);
    candidates.push_back(std::move(rule));
    return candidates.back().id();
  };
  for (const auto& rev : revisions) {
    if (rev) report.revision_ids.push_back(adopt(*rev));
  }
  for (const auto& group : synthesized) {
    for (const auto& r : group) report.synthesized_ids.push_back(adopt(r));
  }
  next.next_rule_id = ids.peek();

  // (5) Pool grows; new candidates are scored on val only.
  for (const auto& c : candidates) next.pool.add(c, t);
  std::vector<std::pair<std::size_t, std::size_t>> val_pairs;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t i = 0; i < val.size(); ++i) val_pairs.emplace_back(c, i);
  }
  report.val_classifier_calls = val_pairs.size();
  parallel_for(val_pairs.size(), in_flight, [&](std::size_t k) {
    classify_rule(ctx, val[val_pairs[k].second], candidates[val_pairs[k].first], next.table,
                  &parse_failures);
  });

  // (6) Reselect over the whole pool, seeded with the previous active set.
  SubsetSearch search(next.pool.rules(), next.table, val, labels, ctx.config.lambda);
  ActiveSet selected = search.beam(ctx.config.K, ctx.config.beam_width, next.active);
  selected.iteration = t;
  next.active = std::move(selected);
  next.iteration = t;
  next.trajectory.push_back({t, next.active.score});
  next.classifier_parse_failures += parse_failures.load();

  report.objective_after = next.active.score;
  report.active_ids = next.active.rule_ids;
  spdlog::info("iteration {}: {} false-coverage, {} blind-spot, {} new candidates, objective {:.4f} -> {:.4f}",
               t, report.false_coverage_samples, report.blind_spot_samples, candidates.size(),
               report.objective_before, report.objective_after);

  state = std::move(next);
  return report;
}

RunResult run(const OptimizerContext& ctx, std::span<const Example> train,
              std::span<const Example> val, std::optional<OptimizerState> resume,
              const IterationCallback& on_iteration) {
  RunResult result;
  result.state = resume ? std::move(*resume) : initial_state(ctx.config, val, ctx.labels);
  require(result.state.iteration <= ctx.config.T,
          "snapshot is at iteration " + std::to_string(result.state.iteration) +
              ", beyond T = " + std::to_string(ctx.config.T));
  while (result.state.iteration < ctx.config.T) {
    OptimizerState trial = result.state;
    const auto batch = draw_batch(trial, train, ctx.config.batch_size);
    auto report = run_iteration(ctx, trial, batch, val);
    result.state = std::move(trial);
    if (on_iteration) on_iteration(result.state, report);
    result.reports.push_back(std::move(report));
  }
  return result;
}

nlohmann::ordered_json state_to_json(const OptimizerState& state) {
  nlohmann::ordered_json j;
  j["format"] = kSnapshotFormat;
  j["version"] = kSnapshotVersion;
  j["iteration"] = state.iteration;
  j["rng"] = state.rng_state;
  j["next_rule_id"] = state.next_rule_id;
  j["classifier_parse_failures"] = state.classifier_parse_failures;
  auto pool = nlohmann::ordered_json::array();
  for (const auto& r : state.pool.rules()) {
    nlohmann::ordered_json e;
    e["id"] = r.id();
    e["name"] = r.name();
    e["label"] = r.target_label();
    e["body"] = r.body();
    e["origin"] = to_string(r.provenance().origin);
    if (!r.provenance().parent_id.empty()) e["parent"] = r.provenance().parent_id;
    e["iteration"] = r.provenance().iteration;
    e["created_at"] = state.pool.created_at(r.id());
    pool.push_back(std::move(e));
  }
  j["pool"] = std::move(pool);
  j["active"] = {{"rule_ids", state.active.rule_ids},
                 {"score", state.active.score},
                 {"iteration", state.active.iteration}};
  auto table = nlohmann::ordered_json::array();
  for (const auto& e : state.table.entries()) {
    table.push_back({e.example_id, e.rule_id, e.firing == Firing::kFired ? 1 : 0});
  }
  j["firings"] = std::move(table);
  auto traj = nlohmann::ordered_json::array();
  for (const auto& p : state.trajectory) traj.push_back({p.iteration, p.objective});
  j["trajectory"] = std::move(traj);
  return j;
}

OptimizerState state_from_json(const nlohmann::json& j, const LabelSpace& labels) {
  try {
    if (j.at("format").get<std::string>() != kSnapshotFormat) {
      fail(Errc::kInvalidInput, "not an optimizer snapshot");
    }
    const int version = j.at("version").get<int>();
    if (version != kSnapshotVersion) {
      fail(Errc::kInvalidInput, "unsupported snapshot version " + std::to_string(version));
    }
    OptimizerState s;
    s.iteration = j.at("iteration").get<int>();
    s.rng_state = j.at("rng").get<std::string>();
    deserialize_rng(s.rng_state);  // validates
    s.next_rule_id = j.at("next_rule_id").get<std::uint64_t>();
    s.classifier_parse_failures = j.value("classifier_parse_failures", std::size_t{0});
    for (const auto& e : j.at("pool")) {
      Provenance p{parse_origin(e.at("origin").get<std::string>()),
                   e.value("parent", std::string()), e.at("iteration").get<int>()};
      s.pool.add(Rule::create(e.at("id").get<std::string>(), e.at("name").get<std::string>(),
                              e.at("label").get<std::string>(), e.at("body").get<std::string>(),
                              std::move(p), labels),
                 e.at("created_at").get<int>());
    }
    const auto& a = j.at("active");
    s.active.rule_ids = a.at("rule_ids").get<std::vector<std::string>>();
    s.active.score = a.at("score").get<double>();
    s.active.iteration = a.at("iteration").get<int>();
    for (const auto& id : s.active.rule_ids) {
      require(s.pool.contains(id), "active rule " + id + " missing from pool");
    }
    for (const auto& e : j.at("firings")) {
      s.table.insert(e.at(0).get<std::string>(), e.at(1).get<std::string>(),
                     e.at(2).get<int>() != 0 ? Firing::kFired : Firing::kAbstain);
    }
    for (const auto& p : j.at("trajectory")) {
      s.trajectory.push_back({p.at(0).get<int>(), p.at(1).get<double>()});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kInvalidInput, std::string("malformed optimizer snapshot: ") + e.what());
  }
}

}  // namespace extc
