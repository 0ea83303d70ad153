#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "extc/decisionset/firing_table.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"
#include "extc/distill/distill.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/parsers.hpp"
#include "extc/gateway/templates.hpp"
#include "extc/grpo/batcher.hpp"
#include "extc/spo/optimizer.hpp"

namespace extc {

struct PairedTrace {
  std::string example_id;
  std::string text;
  LabelId gold = 0;
  std::string teacher_incorrect;
  std::string rl_correct;
  std::optional<int> cluster_id;  // nullopt = OTHER / unassigned
};

struct StrategyTaxonomy {
  std::vector<Strategy> strategies;
  std::vector<std::vector<Strategy>> rounds;  // inputs to the merge pass

  std::vector<int> ids() const;
};

struct ReviseConfig {
  int rounds = 3;
  ModelSettings analysis{"gpt-4.1-mini", 0.7};  // taxonomy discovery and merge
  ModelSettings assign{"gpt-4.1-mini", 0.0};
  ModelSettings synthesis{"gpt-4.1-mini", 0.0};
  ModelSettings judge{"gpt-4.1-mini", 0.0};
  ModelSettings classifier{"gpt-4.1-mini", 0.0};
  std::size_t max_discovery_traces = 0;  // 0 = all
  std::size_t max_positive_pairs = 6;
  std::size_t max_negative_pairs = 6;
  std::vector<std::string> target_labels;  // empty = every non-default label
  std::size_t K_add = 4;
  double lambda = 1.0;
  std::size_t beam_width = 15;
  std::uint64_t seed = 42;
  std::size_t max_in_flight = 8;
  std::string rule_id_prefix = "M";

  void validate() const;
};

struct ReviseContext {
  const LabelSpace& labels;
  const TaskProfile& task;
  Gateway& gateway;
  const ReviseConfig& config;
};

/// One pair per hard example with a correct rollout (the earliest in log
/// order) and a recorded teacher failure. Output follows log order.
std::vector<PairedTrace> collect_hard_successes(std::span<const RolloutGroup> rollout_logs,
                                                const std::set<std::string>& hard_ids,
                                                std::span<const TeacherOutcome> teacher_log,
                                                std::span<const Example> examples);

/// `rounds` discovery calls with distinct seed tags, then one merge call.
StrategyTaxonomy discover_taxonomy(const ReviseContext& ctx, std::span<const PairedTrace> traces,
                                   int rounds);

/// Strategy id, or nullopt for OTHER (including unparseable or unknown ids).
std::optional<int> assign_cluster(const ReviseContext& ctx, const PairedTrace& trace,
                                  const StrategyTaxonomy& taxonomy);

/// One rule block whose first description line is exactly
/// "Rule Label: <token>", or nullopt for SKIP and rejected blocks.
std::optional<Rule> synthesize_cluster_rule(const ReviseContext& ctx,
                                            std::span<const PairedTrace> pairs, LabelId target,
                                            std::span<const Rule> existing_sop,
                                            RuleIdAllocator& ids);

/// Pairwise equivalence judging in index order; YES verdicts union the pair
/// and each class keeps its preferred member. Survivors keep input order.
std::vector<Rule> dedup_candidates(const ReviseContext& ctx, std::span<const Rule> candidates);

struct ValHardSelection {
  std::vector<std::string> addition_ids;
  double score = 0.0;     // existing SOP + additions
  double baseline = 0.0;  // existing SOP alone
};

/// Beam search over candidate subsets, every composition including the
/// fixed existing SOP. The firing table must cover val_hard x (candidates
/// and existing SOP).
ValHardSelection select_on_val_hard(std::span<const Rule> candidates,
                                    std::span<const Rule> existing_sop,
                                    std::span<const Example> val_hard, const FiringTable& table,
                                    const LabelSpace& labels, std::size_t K_add, double lambda,
                                    std::size_t beam_width = 15);

struct RevisionResult {
  std::vector<PairedTrace> pairs;
  StrategyTaxonomy taxonomy;
  std::vector<Rule> candidates;  // after the SKIP and label gates
  std::vector<Rule> deduped;
  ValHardSelection selection;
  std::vector<Rule> sop;  // existing SOP followed by additions
  std::size_t classifier_calls = 0;
};

/// All five stages plus selection. Fills `table` for val_hard as needed.
RevisionResult run_revision(const ReviseContext& ctx, std::span<const Rule> existing_sop,
                            std::span<const RolloutGroup> rollout_logs,
                            const std::set<std::string>& hard_ids,
                            std::span<const TeacherOutcome> teacher_log,
                            std::span<const Example> examples, std::span<const Example> val_hard,
                            FiringTable& table);

}  // namespace extc
