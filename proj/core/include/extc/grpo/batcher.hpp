#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extc/common/random.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"
#include "extc/gateway/gateway.hpp"
#include "extc/gateway/parsers.hpp"
#include "extc/gateway/templates.hpp"

namespace extc {

struct Rollout {
  std::string text;
  std::optional<ReasonedLabel> parsed;  // nullopt on parse failure
  double reward = -1.0;
  std::optional<double> aux_score;
  double advantage = 0.0;
};

struct RolloutGroup {
  std::string example_id;
  LabelId gold = 0;
  std::string prompt;
  std::vector<Rollout> rollouts;
  bool informative = false;
  bool topped_up = false;
};

struct ClassQuota {
  std::vector<std::size_t> counts;  // indexed by LabelId
  std::size_t step = 0;

  std::size_t total() const;
};

struct TrainingBatch {
  std::size_t step = 0;
  ClassQuota quota;
  std::vector<RolloutGroup> groups;  // class order, draw order within class
  std::size_t candidates_drawn = 0;
  std::size_t filtered = 0;   // uninformative candidates discarded
  std::size_t topped_up = 0;  // groups added by top-up
};

/// 2*1[pred == gold] - 1; a parse failure is wrong.
double correctness_reward(const std::optional<LabelId>& predicted, LabelId gold);

/// (R_i - mean) / (std + epsilon), population std over the group.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon = 1e-6);

/// Correctness and auxiliary streams z-scored separately and summed with
/// weight lambda_aux. Aux statistics use scored rollouts only; unscored
/// rollouts get a zero aux term.
std::vector<double> combined_advantages(std::span<const double> rewards,
                                        std::span<const std::optional<double>> aux_scores,
                                        double lambda_aux, double epsilon = 1e-6);

/// floor(B/C) per class; the B mod C extra slots go to classes
/// (step + i) mod C.
ClassQuota class_quotas(std::size_t B, const LabelSpace& labels, std::size_t step);

class RolloutProvider {
 public:
  virtual ~RolloutProvider() = default;
  /// One generation per seed tag.
  virtual std::vector<std::string> generate(const Example& example,
                                            std::span<const std::string> seed_tags) = 0;
};

/// Samples the student through the gateway with the rules-free prompt.
class GatewayRolloutProvider : public RolloutProvider {
 public:
  GatewayRolloutProvider(Gateway& gateway, const LabelSpace& labels, const TaskProfile& task,
                         std::string model, double temperature = 1.0,
                         std::size_t max_in_flight = 8);
  std::vector<std::string> generate(const Example& example,
                                    std::span<const std::string> seed_tags) override;

 private:
  Gateway& gateway_;
  const LabelSpace& labels_;
  const TaskProfile& task_;
  std::string model_;
  double temperature_;
  std::size_t max_in_flight_;
};

/// Each rollout is independently correct with probability p(example),
/// otherwise a uniformly chosen wrong label; a fraction of outputs can be
/// made unparseable. Outcomes depend only on (seed, example id, seed tag).
class SyntheticRolloutProvider : public RolloutProvider {
 public:
  using CorrectnessFn = std::function<double(const Example&)>;

  SyntheticRolloutProvider(const LabelSpace& labels, CorrectnessFn p_correct, std::uint64_t seed,
                           double p_parse_failure = 0.0);
  std::vector<std::string> generate(const Example& example,
                                    std::span<const std::string> seed_tags) override;

 private:
  const LabelSpace& labels_;
  CorrectnessFn p_correct_;
  std::uint64_t seed_;
  double p_parse_failure_;
};

class AuxScorer {
 public:
  virtual ~AuxScorer() = default;
  /// One optional score per rollout; nullopt for rollouts the judge cannot score.
  virtual std::vector<std::optional<double>> score(const Example& example,
                                                   std::span<const Rollout> rollouts) = 0;
};

/// Faithfulness judge over (input, reasoning); empty reasoning or empty
/// input is not scored.
class JudgeAuxScorer : public AuxScorer {
 public:
  JudgeAuxScorer(Gateway& gateway, const TaskProfile& task, const LabelSpace& labels,
                 std::string model, int top_logprobs = 20, std::size_t max_in_flight = 8);
  std::vector<std::optional<double>> score(const Example& example,
                                           std::span<const Rollout> rollouts) override;

 private:
  Gateway& gateway_;
  const TaskProfile& task_;
  const LabelSpace& labels_;
  std::string model_;
  int top_logprobs_;
  std::size_t max_in_flight_;
};

/// Groundedness of `reasoning` against an evidence span, 1..5.
double groundedness_score(Gateway& gateway, const TaskProfile& task, const LabelSpace& labels,
                          const std::string& evidence, const std::string& reasoning,
                          const std::string& model, int top_logprobs = 20);

std::string rollout_prompt(const Example& example, const LabelSpace& labels,
                           const TaskProfile& task);

/// Parses generations into a group with rewards and the informative flag.
/// Advantages are left at zero.
RolloutGroup make_group(const Example& example, std::vector<std::string> texts,
                        const LabelSpace& labels, std::string prompt = {});

struct BatchOptions {
  std::size_t B = 16;
  std::size_t G = 8;
  std::size_t kappa = 6;
  double epsilon = 1e-6;
  double lambda_aux = 0.2;
  std::size_t max_in_flight = 8;
};

/// Oversample-then-filter batch for one step. class_pools is indexed by
/// LabelId. Per class, kappa*n_c candidates are drawn without replacement;
/// the first n_c informative groups in draw order are kept and any shortfall
/// is topped up with fresh same-class draws kept regardless of informativeness.
TrainingBatch build_batch(std::span<const std::vector<Example>> class_pools,
                          RolloutProvider& provider, const LabelSpace& labels,
                          const TaskProfile& task, const BatchOptions& options, std::size_t step,
                          Rng& rng, AuxScorer* aux = nullptr);

/// JSONL, one group per line.
std::string serialize_batch(const TrainingBatch& batch, const LabelSpace& labels);
void export_batch(const TrainingBatch& batch, const LabelSpace& labels,
                  const std::filesystem::path& path);
std::vector<RolloutGroup> parse_batch(std::string_view content, const LabelSpace& labels);
std::vector<RolloutGroup> read_batch(const std::filesystem::path& path, const LabelSpace& labels);

}  // namespace extc
