#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/types.hpp"
#include "extc/gateway/chat.hpp"

namespace extc {

namespace tmpl {
inline constexpr std::string_view kReasoningWithRules = "reasoning_with_rules";
inline constexpr std::string_view kReasoningWithoutRules = "reasoning_without_rules";
inline constexpr std::string_view kLabelOnly = "label_only";
inline constexpr std::string_view kRuleClassifier = "rule_classifier";
inline constexpr std::string_view kGradientExceptions = "gradient_exceptions";
inline constexpr std::string_view kGradientErrorPattern = "gradient_error_pattern";
inline constexpr std::string_view kRuleUpdate = "rule_update";
inline constexpr std::string_view kRuleSynthesis = "rule_synthesis";
inline constexpr std::string_view kTaxonomyDiscovery = "taxonomy_discovery";
inline constexpr std::string_view kTaxonomyMerge = "taxonomy_merge";
inline constexpr std::string_view kRolloutClassification = "rollout_classification";
inline constexpr std::string_view kClusterSynthesis = "cluster_synthesis";
inline constexpr std::string_view kEquivalenceJudge = "equivalence_judge";
inline constexpr std::string_view kGroundednessJudge = "groundedness_judge";
inline constexpr std::string_view kFaithfulnessJudge = "faithfulness_judge";
}  // namespace tmpl

struct PromptTemplate {
  std::string id;
  std::string text;
  // When set, this binding is sent as the system message ahead of the
  // rendered user message.
  std::optional<std::string> system_placeholder;

  /// Names of all {placeholder} markers in text, plus the system one.
  std::set<std::string> placeholders() const;
};

const PromptTemplate& prompt_template(std::string_view id);
std::vector<std::string> template_ids();

using Bindings = std::map<std::string, std::string>;

struct Prompt {
  std::string template_id;
  std::vector<Message> messages;
  Bindings bindings;

  RequestMeta meta() const { return {template_id, bindings}; }
};

/// Single-pass textual substitution of {name} markers. Substituted values are
/// never rescanned. Throws missing-placeholder naming the first unbound one.
std::string substitute(std::string_view text, const Bindings& bindings);

Prompt render(std::string_view template_id, const Bindings& bindings);

ChatRequest make_request(const Prompt& prompt, std::string model, double temperature,
                         std::optional<int> top_logprobs = std::nullopt,
                         std::optional<std::string> seed_tag = std::nullopt);

/// Per-dataset phrases substituted into the templates.
struct TaskProfile {
  std::string task_framing;         // system / CoT framing sentence
  std::string input_tag;            // e.g. "<REVIEWER_COMMENTS>"
  std::string input_noun;           // e.g. "reviewer comments"
  std::string classification_task;  // {CLASSIFICATION_TASK}
  std::string task_description;     // judge + taxonomy {task_description}
  std::string evidence_phrase;      // groundedness judge
  std::string input_phrase;         // faithfulness judge {input}
  std::string abstain_token = "ABSTAIN";

  /// "<X ...>" -> "</X>".
  std::string input_close_tag() const;

  /// Bindings shared by every template for this task.
  Bindings base_bindings(const LabelSpace& labels) const;
};

/// The label spelling used inside prompts: the alias when one is defined,
/// else the label name.
std::string label_token(const LabelSpace& labels, LabelId id);

std::string format_rule(const Rule& rule, const LabelSpace& labels);
std::string format_rulebook(std::span<const Rule> rules, const LabelSpace& labels);

/// "one", "two", ... for small counts, decimal digits otherwise.
std::string count_word(std::size_t n);

}  // namespace extc
