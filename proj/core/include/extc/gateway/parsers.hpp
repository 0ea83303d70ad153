#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "extc/decisionset/firing_table.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/gateway/chat.hpp"

namespace extc {

enum class ParseReason {
  kMissingLabelHeader,
  kLabelNotInSpace,
  kMalformedRuleBlock,
  kMissingFinalPrediction,
};

std::string_view to_string(ParseReason reason);

struct ParseFailure {
  ParseReason reason;
  std::string raw;
};

template <typename T>
using Parsed = std::variant<T, ParseFailure>;

template <typename T>
bool ok(const Parsed<T>& p) { return std::holds_alternative<T>(p); }

struct ReasonedLabel {
  std::string reasoning;
  LabelId label = 0;
};

/// "REASONING:\n...\n\nLABEL: x". The last LABEL: line after the reasoning
/// header wins; the value is matched case-insensitively against label names,
/// then aliases.
Parsed<ReasonedLabel> parse_reasoning_label(std::string_view text, const LabelSpace& labels);

/// The completion form parse_reasoning_label accepts.
std::string format_reasoning_label(std::string_view reasoning, std::string_view label);

/// Value after the last "FINAL PREDICTION:" header: the rule's label (name
/// or alias) means fired, the abstain token means abstain.
Parsed<Firing> parse_firing(std::string_view text, LabelId rule_label, const LabelSpace& labels,
                            std::string_view abstain_token = "ABSTAIN");

/// Hands out fresh rule ids ("<prefix><n>", zero padded). Thread-safe.
class RuleIdAllocator {
 public:
  explicit RuleIdAllocator(std::string prefix = "R", std::uint64_t next = 1)
      : prefix_(std::move(prefix)), next_(next) {}

  std::string allocate();
  std::uint64_t peek() const noexcept { return next_.load(); }
  void reset(std::uint64_t next) noexcept { next_.store(next); }
  const std::string& prefix() const noexcept { return prefix_; }

 private:
  std::string prefix_;
  std::atomic<std::uint64_t> next_;
};

struct RuleDraft {
  std::string rule_id;
  std::string name;
  std::string body;
};

/// Every well-formed <RULE_NAME>..</RULE_NAME> followed by
/// <RULE_DESCRIPTION>..</RULE_DESCRIPTION>, in document order. Names are
/// collapsed to one line; bodies are trimmed of surrounding blank space.
Parsed<std::vector<RuleDraft>> parse_rule_candidates(std::string_view text,
                                                     RuleIdAllocator& ids);

/// Structured fields of a gradient response. Accepts a JSON object (bare or
/// fenced) or plain text with "analysis:", "exceptions:", "summary:",
/// "points:" headings and bulleted items.
struct GradientFields {
  std::string analysis;
  std::vector<std::string> exceptions;
  std::string summary;
  std::vector<std::string> points;
};

GradientFields parse_gradient_fields(std::string_view text);

struct Strategy {
  int id = 0;
  std::string label;
  std::string analysis;

  friend bool operator==(const Strategy&, const Strategy&) = default;
};

/// <STRATEGY id="N"> blocks with "Analysis:" and "Label:" fields. Blocks
/// without an integer id or a label are dropped.
std::vector<Strategy> parse_strategies(std::string_view text);
std::string format_strategies(std::span<const Strategy> strategies);

/// A strategy id from `valid_ids`, or nullopt for OTHER / anything else.
std::optional<int> parse_cluster_id(std::string_view text, std::span<const int> valid_ids);

enum class Preference { kRule1, kRule2, kEither };

struct Verdict {
  bool equivalent = false;
  Preference preference = Preference::kEither;
};

/// nullopt when the first answer is neither YES nor NO. A YES without a
/// readable preference counts as EITHER.
std::optional<Verdict> parse_equivalence(std::string_view text);

struct SkipVerdict {};

/// Cluster-synthesis output: a SKIP line, or exactly one rule block. Blocks
/// whose description does not start with "Rule Label: <token>" for one of
/// `accepted_label_tokens` are failures (malformed-rule-block).
Parsed<std::variant<SkipVerdict, RuleDraft>> parse_cluster_rule(
    std::string_view text, std::span<const std::string> accepted_label_tokens,
    RuleIdAllocator& ids);

/// Expected 1..5 score over the renormalized mass of score tokens "1".."5".
/// Throws unscoreable when none is present.
double judge_expected_score(std::span<const TokenProb> answer_position);

/// Picks the answer position (first generated token that is a score digit,
/// else the first position listing one) and scores it.
double judge_expected_score(const ChatResponse& response);

}  // namespace extc
