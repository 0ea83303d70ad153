#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "extc/decisionset/firing_table.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/parsers.hpp"
#include "extc/gateway/templates.hpp"

namespace extc {

struct ModelSettings {
  std::string model = "gpt-4.1-mini";
  double temperature = 0.0;
};

struct OptimizerConfig {
  int T = 6;
  std::size_t batch_size = 30;
  std::size_t K = 8;
  double lambda = 1.0;
  std::size_t beam_width = 15;
  std::size_t max_new_rules_per_label = 2;
  ModelSettings classifier;
  ModelSettings gradient;
  ModelSettings update;
  std::size_t max_in_flight = 8;
  std::uint64_t seed = 42;
  std::string rule_id_prefix = "R";

  void validate() const;
};

struct TrajectoryPoint {
  int iteration = 0;
  double objective = 0.0;

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct OptimizerState {
  int iteration = 0;
  RulePool pool;
  ActiveSet active;
  FiringTable table;
  std::vector<TrajectoryPoint> trajectory;
  std::string rng_state;
  std::uint64_t next_rule_id = 1;
  std::size_t classifier_parse_failures = 0;
};

struct ExceptionNotes {
  std::string rule_id;
  std::string example_id;
  std::vector<std::string> bullets;
};

struct ErrorPattern {
  std::string example_id;
  LabelId gold = 0;
  std::string text;  // summary followed by bulleted points
};

struct IterationReport {
  int iteration = 0;
  std::vector<std::string> batch_ids;
  std::size_t false_coverage_samples = 0;
  std::size_t blind_spot_samples = 0;
  std::size_t skipped_gradients = 0;
  std::vector<std::string> revision_ids;
  std::vector<std::string> synthesized_ids;
  std::size_t batch_classifier_calls = 0;  // uncached (batch example, active rule) pairs
  std::size_t val_classifier_calls = 0;    // |new candidates| x |val|
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::vector<std::string> active_ids;

  nlohmann::ordered_json to_json() const;
};

/// Everything an optimizer step needs besides its state.
struct OptimizerContext {
  const LabelSpace& labels;
  const TaskProfile& task;
  Gateway& gateway;
  const OptimizerConfig& config;
};

/// Per-rule classifier call, cached in `table`. A response that does not
/// parse is recorded as Abstain and counted in `parse_failures`.
Firing classify_rule(const OptimizerContext& ctx, const Example& example, const Rule& rule,
                     FiringTable& table, std::atomic<std::size_t>* parse_failures = nullptr);

/// Requires `rule` to have fired on `example` with a target other than
/// `gold`. Throws empty-gradient when the response lists no exceptions.
ExceptionNotes gradient_exceptions(const OptimizerContext& ctx, const Example& example,
                                   LabelId gold, LabelId predicted, const Rule& rule,
                                   const FiringTable& table);

/// For a sample predicted as the default label while gold is not.
ErrorPattern gradient_error_pattern(const OptimizerContext& ctx, const Example& example,
                                    LabelId gold, std::span<const Rule> active_rules_for_gold);

/// Revised copy of `rule` with the notes folded in; nullopt when the
/// response holds no usable rule block. The id comes from `ids`.
std::optional<Rule> update_rule(const OptimizerContext& ctx, const Rule& rule,
                                std::span<const ExceptionNotes> notes, int iteration,
                                RuleIdAllocator& ids);

/// Up to `max_new` new rules for `label`, in document order.
std::vector<Rule> synthesize_rules(const OptimizerContext& ctx,
                                   std::span<const ErrorPattern> patterns, LabelId label,
                                   std::span<const Rule> existing_rules, std::size_t max_new,
                                   int iteration, RuleIdAllocator& ids);

/// Iteration-0 state: empty pool and active set, trajectory holding the
/// default-only validation objective.
OptimizerState initial_state(const OptimizerConfig& config, std::span<const Example> val,
                             const LabelSpace& labels);

/// Uniform draw without replacement from `train`, advancing the state RNG.
std::vector<Example> draw_batch(OptimizerState& state, std::span<const Example> train,
                                std::size_t batch_size);

/// One full iteration. On any exception `state` is left untouched.
IterationReport run_iteration(const OptimizerContext& ctx, OptimizerState& state,
                              std::span<const Example> batch, std::span<const Example> val);

struct RunResult {
  OptimizerState state;
  std::vector<IterationReport> reports;
};

using IterationCallback = std::function<void(const OptimizerState&, const IterationReport&)>;

/// Iterates until state.iteration == config.T. `resume` continues a
/// snapshot; `on_iteration` runs after each committed iteration.
RunResult run(const OptimizerContext& ctx, std::span<const Example> train,
              std::span<const Example> val, std::optional<OptimizerState> resume = std::nullopt,
              const IterationCallback& on_iteration = {});

std::vector<Rule> active_rules(const OptimizerState& state);

nlohmann::ordered_json state_to_json(const OptimizerState& state);
OptimizerState state_from_json(const nlohmann::json& j, const LabelSpace& labels);

}  // namespace extc
