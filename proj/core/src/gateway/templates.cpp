#include "extc/gateway/templates.hpp"

#include <algorithm>
#include <array>

#include "extc/common/error.hpp"
#include "extc/common/text.hpp"

namespace extc {

namespace {

constexpr std::string_view kReasoningWithRulesText =
    R"TXT(Below is a rulebook of patterns relevant to the task. Treat the rulebook as internal guidance --- it shapes what to look for in the {input_noun}, but should not be cited in your reasoning.

<RULES>
{rulebook}
</RULES>

{input_tag}
{text}
{input_close_tag}

When writing your reasoning, analyze the {input_noun} directly. Do not name or enumerate rules in your reasoning.

Return exactly in this format:
REASONING:
your reasoning

LABEL: <one of {labels}>

Please think step by step.)TXT";

constexpr std::string_view kReasoningWithoutRulesText = R"TXT({task_framing}

{input_tag}
{text}
{input_close_tag}

Analyze the {input_noun} directly to decide the label.

Return exactly in this format:
REASONING:
your reasoning

LABEL: <one of {labels}>

Please think step by step.)TXT";

constexpr std::string_view kLabelOnlyText = R"TXT({task_framing}

{input_tag}
{text}
{input_close_tag}

Return exactly:
LABEL: <one of {labels}>)TXT";

constexpr std::string_view kRuleClassifierText = R"TXT(Here is the rule you want to check:
<RULE>
{rule_text}
</RULE>

<REPORT>
{report}
</REPORT>

Provide your detailed reasoning under a header exactly written as REASONING:. Then provide your final prediction under a header exactly written as FINAL PREDICTION:. Use only one of these values for the final prediction: {RULE_LABEL} (the rule applies) or {ABSTAIN} (the rule does not apply or you cannot tell). Please think step by step:)TXT";

constexpr std::string_view kGradientExceptionsText =
    R"TXT(You are an expert at {CLASSIFICATION_TASK} and error analysis.

Review the rule and report where the existing rule may be too broad; propose exceptions to restrict it.

<RULE>
{RULE}
</RULE>

<REPORT>
{REPORT}
</REPORT>

The incorrect prediction made by the model: {PREDICTION}

The correct label for this instance: {LABEL}

In your response, provide a detailed explanation in the analysis field, then list the exceptions in the exceptions field. Explain why the model's prediction was incorrect and what type of error or misunderstanding may have occurred.)TXT";

constexpr std::string_view kGradientErrorPatternText =
    R"TXT(You are an expert at {CLASSIFICATION_TASK} and error pattern recognition.

There are errors on the analysis below. Identify the underlying error pattern that the current rules fail to capture.

<REPORT>
{REPORT}
</REPORT>

<RELEVANT_RULES>
{MATCHING_RULES}
</RELEVANT_RULES>

The incorrect prediction made by the model: {PREDICTION}

The correct label for this instance: {LABEL}

In your response, provide a diagnostic summary in the summary field and key points in the points field. Explain why the model's prediction was incorrect and what type of error or misunderstanding may have occurred.)TXT";

constexpr std::string_view kRuleUpdateText =
    R"TXT(Your task is to generate a new rule to avoid overly broad coverage mistakes by augmenting the exceptions and examples in an existing rule. Follow these steps:

Review the provided existing rule:

<EXISTING_RULE>
{RULE}
</EXISTING_RULE>

<EXCEPTION_NOTES>
{EXCEPTIONS}
</EXCEPTION_NOTES>

Keep the rule label unchanged as {RULE_LABEL}.

Identify the core pattern or principle that led to the mistake described in the existing rule.

Determine any exceptions where the rule should not apply.

Formulate a new rule using the following structure:

<RULE_NAME>[Concise, descriptive new name]</RULE_NAME>

<RULE_DESCRIPTION>
Trigger Pattern:
[Keep original pattern in the existing rule, clarify if needed]

Exceptions:
[Keep original exceptions]
[Add new exceptions to restrict over-broad coverage]

Examples
[Keep existing examples]
[Add new examples if needed]:
Source text: [Relevant source text if any]
Wrong:   [Example of violation]
Correct: [Example of compliance]
</RULE_DESCRIPTION>

Ensure the rule has a new name.)TXT";

constexpr std::string_view kRuleSynthesisText =
    R"TXT(You are an expert at analyzing patterns and developing precise rules for {CLASSIFICATION_TASK}. Your task is to systematically evaluate error patterns and create a clear, actionable and strict rule to prevent similar mistakes in future classifications.

The goal is to identify the truly exceptional instances, not just average ones.

Generate rules with label {TARGET_LABEL}.

Return at most {MAX_NEW_RULES} new rule(s).

Review the existing rules:

<EXISTING_RULES>
{RULES}
</EXISTING_RULES>

Error patterns from misclassifications:

<ERROR_PATTERNS>
{ERROR_PATTERNS}
</ERROR_PATTERNS>

First, conduct a structured error analysis:
<ERROR_ANALYSIS>
1. Context Assessment
   What was the intended behavior?
   What actually happened?
   What key factors contributed?
2. Rule Evaluation
   Do existing rules partially cover this?
   What aspects are unique?
   How can we make the rule robust?
</ERROR_ANALYSIS>

Provide the error analysis in the error_analysis field.

Then, formulate a new rule using this structure:

<RULE_NAME>[Concise, descriptive name that clearly identifies the pattern]</RULE_NAME>

<RULE_DESCRIPTION>
Trigger Pattern: [Clear description of when this rule applies, with 2-3
                  specific indicators that should trigger the rule]

Exceptions: [Specific cases where the rule should not be applied, even if
             the pattern appears to match]

Example [One clear example]:
Source text: [Relevant source text if any]
Wrong:   [Example of violation]
Correct: [Example of compliance]
</RULE_DESCRIPTION>

Please analyze the error examples thoroughly and formulate a new rule that would prevent similar classification errors in the future.)TXT";

constexpr std::string_view kTaxonomyDiscoveryText =
    R"TXT(You are analyzing reasoning traces from a model trained with reinforcement learning to improve on hard examples.

<TASK>
{TASK_DESCRIPTION}
</TASK>

Below are {NUM_SAMPLES} correct reasoning traces from different input categories:

{ROLLOUT_ENTRIES}

Identify the distinct REASONING STRATEGIES used across these traces.

A reasoning strategy is a reusable analytical METHOD --- how the model reasons, not what specific input topic it reasons about. Group by HOW the model reasons (analytical method), not by WHAT topic or input content it reasons about. Traces on different topics that use the same analytical approach belong to the same strategy. Two traces that reach the same conclusion via different analytical paths count as different strategies.

For each strategy, output in this exact format:

<STRATEGY id="N">
Analysis: [Describe the shared analytical method across traces
          that use this strategy. What steps does the reasoning
          follow? What makes it distinct from other strategies?
          Do not reference specific input topics --- describe the
          abstract pattern.]
Label: [3--6 word name for this strategy]
</STRATEGY>

Identify as many genuinely distinct strategies as you find. Do not force a predetermined number.)TXT";

// {ROUND_ENTRIES} expands to "Round k:\n<strategies>" blocks separated by a
// blank line; with three rounds the text is the fixed three-round prompt.
constexpr std::string_view kTaxonomyMergeText =
    R"TXT(Below are reasoning strategy taxonomies discovered in {NUM_ROUNDS} independent rounds of analysis on the same set of model reasoning traces. Many strategies across rounds describe the same underlying analytical pattern in different words.

{ROUND_ENTRIES}

Merge these into a single deduplicated taxonomy.
- Merge strategies that describe the SAME analytical method, even if worded differently. Keep the clearest analysis.
- Keep strategies that are genuinely distinct --- do not force-merge strategies that differ in analytical approach just because they sound vaguely similar.
- If a strategy from one round is a sub-case of a broader one, keep the broader one and note the sub-case in its analysis.

Output the merged taxonomy:

<STRATEGY id="N">
Analysis: [Merged analysis. Note which round entries were merged.]
Label: [3--6 word name]
</STRATEGY>

Output as many strategies as the data warrants.)TXT";

constexpr std::string_view kRolloutClassificationText = R"TXT(<TASK>
{TASK_DESCRIPTION}
</TASK>

Reasoning strategies:

{TAXONOMY}

Reasoning trace to classify:

{REASONING}

Which strategy does this trace primarily use? Output ONLY the strategy id (a number), or "OTHER" if none fits well.)TXT";

constexpr std::string_view kClusterSynthesisText = R"TXT(You are an expert at {CLASSIFICATION_TASK}.

The rulebook below works well on most inputs but misses some hard examples --- a teacher applying it reasons incorrectly, while an RL-trained model reasons correctly on the same inputs. Your task: propose ONE new rule that complements the rulebook.

<EXISTING_RULES>
{EXISTING_RULES}
</EXISTING_RULES>

Paired traces below show (teacher-incorrect, RL-correct) on the same inputs, grouped because the correct reasoning shares a strategy.

<PAIRED_REASONING_TRACES>
{ROLLOUT_ENTRIES}
</PAIRED_REASONING_TRACES>

Treat rollouts whose gold label is {RULE_LABEL} as positive evidence (rule should fire) and rollouts whose gold label is anything else as negative evidence (rule should NOT fire). If you cannot identify a coherent pattern that supports label={RULE_LABEL} --- including the case where the pattern actually points to a different label --- output ONLY: SKIP: insufficient signal for label={RULE_LABEL}.

Otherwise, generate ONE compact rule predicting label={RULE_LABEL}, with:
- Trigger: the specific features the correct reasoning used.
- Exceptions: the specific mistakes the incorrect reasoning made (2--3 bullets).
- One concrete source-text example.

Output (the first line inside <RULE_DESCRIPTION> MUST be exactly Rule Label: {RULE_LABEL} --- numeric, no text alias; downstream tooling parses this line):

<RULE_NAME>[name]</RULE_NAME>

<RULE_DESCRIPTION>
Rule Label: {RULE_LABEL}
[body]
</RULE_DESCRIPTION>)TXT";

constexpr std::string_view kEquivalenceJudgeText =
    R"TXT(Two candidate classification rules are shown below. Both are intended for the same task: {CLASSIFICATION_TASK}.

<RULE_1>
{RULE_1_BODY}
</RULE_1>

<RULE_2>
{RULE_2_BODY}
</RULE_2>

Question 1: Are these two rules semantically equivalent --- would they fire on the same inputs and produce the same label? Answer strictly "YES" or "NO" on its own line.

Question 2 (ONLY if YES): Which rule is clearer, more general, or otherwise preferable to keep? Answer strictly one of "RULE_1", "RULE_2", or "EITHER" on its own line.

Output format (exactly two lines for YES, one line for NO):
LINE1: YES or NO
LINE2: RULE_1 or RULE_2 or EITHER   (only when LINE1 is YES))TXT";

constexpr std::string_view kGroundednessJudgeText =
    R"TXT(You will be given an evidence excerpt. You will then be given a reasoning trace generated by an AI model that {task_description}.

Your task is to rate the reasoning on one metric. Please make sure you read and understand these instructions carefully. Please keep this document open while reviewing, and refer to it as needed.

Evaluation Criteria.
Groundedness (1--5) --- the degree to which the reasoning's CONCLUSION (its predicted label / verdict) is directly tied to specific cited evidence from {evidence_phrase}.
Anchored scale:
  5 = Conclusion explicitly named AND directly tied to specific cited evidence ("entailment because Section 3.1 prohibits X", "recommend acceptance because Reviewer 2 raised score to 6", "low risk because no recent admissions, no malignancy"). Multi-step reasoning chain to verdict.
  4 = Conclusion named and tied to at least one specific citation (section #, named reviewer/score, clinical value, named rule).
  3 = Conclusion stated but justified by general paraphrase or "broadly consistent" framing --- no specific citation linking evidence to verdict.
  2 = Conclusion stated but weakly supported; reasoning relies on unstated assumptions.
  1 = At least one claim is refuted by {evidence_phrase}, OR the text contains no analytical claim leading to a verdict (bare lists, boilerplate, anonymization markers).

CALIBRATION (apply STRICTLY):
- Generic verdict-justification ("the contract supports X", "the patient is low risk") with no specific citation is anchor 3.
- Rule-attribution paired with concrete textual evidence ("Per R5: novelty weak because incremental contribution") tied to verdict counts as specific citation.
- Exclusion enumeration tied to verdict ("low risk because no malignancy, no recent chemo") = anchor 4--5.
- Fragmented text is a 1.
APPLY THE RUBRIC STRICTLY.

Evaluation Steps.
1. Read {evidence_phrase} carefully and identify the specific facts.
2. Find the reasoning's CONCLUSION (predicted label / verdict).
3. Check whether the conclusion is DIRECTLY tied to specific cited evidence (section #, reviewer #/score, clinical value, named rule + evidence, or exclusion enumeration). General verdict-justification without specific citation = anchor 3.
4. Apply the CALIBRATION strictly.

Example.
Evidence: {source}
Reasoning: {reasoning}
Evaluation Form (scores ONLY):
- Groundedness:)TXT";

constexpr std::string_view kFaithfulnessJudgeText =
    R"TXT(You will be given {input}. You will then be given a reasoning trace generated by an AI model that {task_description}.

Your task is to rate the reasoning on one metric.

Please make sure you read and understand these instructions carefully. Please keep this document open while reviewing, and refer to it as needed.

Evaluation Criteria:

Faithfulness (1--5) --- the factual alignment between the reasoning and {input}. A faithful reasoning's claims are all directly traceable to {input}, without going beyond what {input} establishes. Penalize reasonings that misread {input}, fabricate details, or rely on external knowledge not present in {input}.

Evaluation Steps:
1. Read {input} carefully and identify the facts it presents.
2. Read the reasoning and compare it to {input}. Check if the reasoning makes claims that go beyond, contradict, or misread {input}.
3. Assign a score for faithfulness based on the Evaluation Criteria.

Example:

Input:

{source}

Reasoning:

{reasoning}

Evaluation Form (scores ONLY):

- Faithfulness:)TXT";

std::vector<PromptTemplate> build_registry() {
  auto t = [](std::string_view id, std::string_view text,
              std::optional<std::string> system = std::nullopt) {
    return PromptTemplate{std::string(id), std::string(text), std::move(system)};
  };
  std::vector<PromptTemplate> out;
  out.push_back(t(tmpl::kReasoningWithRules, kReasoningWithRulesText, "task_framing"));
  out.push_back(t(tmpl::kReasoningWithoutRules, kReasoningWithoutRulesText));
  out.push_back(t(tmpl::kLabelOnly, kLabelOnlyText));
  out.push_back(t(tmpl::kRuleClassifier, kRuleClassifierText, "task_framing"));
  out.push_back(t(tmpl::kGradientExceptions, kGradientExceptionsText));
  out.push_back(t(tmpl::kGradientErrorPattern, kGradientErrorPatternText));
  out.push_back(t(tmpl::kRuleUpdate, kRuleUpdateText));
  out.push_back(t(tmpl::kRuleSynthesis, kRuleSynthesisText));
  out.push_back(t(tmpl::kTaxonomyDiscovery, kTaxonomyDiscoveryText));
  out.push_back(t(tmpl::kTaxonomyMerge, kTaxonomyMergeText));
  out.push_back(t(tmpl::kRolloutClassification, kRolloutClassificationText));
  out.push_back(t(tmpl::kClusterSynthesis, kClusterSynthesisText));
  out.push_back(t(tmpl::kEquivalenceJudge, kEquivalenceJudgeText));
  out.push_back(t(tmpl::kGroundednessJudge, kGroundednessJudgeText));
  out.push_back(t(tmpl::kFaithfulnessJudge, kFaithfulnessJudgeText));
  return out;
}

const std::vector<PromptTemplate>& registry() {
  static const std::vector<PromptTemplate> r = build_registry();
  return r;
}

bool is_name_char(char c, bool first) {
  const bool alpha = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  return first ? alpha : alpha || (c >= '0' && c <= '9');
}

// Calls on_text / on_placeholder for each segment of `text`.
template <typename OnText, typename OnPlaceholder>
void scan(std::string_view text, OnText on_text, OnPlaceholder on_placeholder) {
  std::size_t i = 0;
  std::size_t plain_start = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_name_char(text[j], j == i + 1)) ++j;
      if (j > i + 1 && j < text.size() && text[j] == '}') {
        on_text(text.substr(plain_start, i - plain_start));
        on_placeholder(text.substr(i + 1, j - i - 1));
        i = j + 1;
        plain_start = i;
        continue;
      }
    }
    ++i;
  }
  on_text(text.substr(plain_start));
}

}  // namespace

std::set<std::string> PromptTemplate::placeholders() const {
  std::set<std::string> names;
  scan(text, [](std::string_view) {}, [&](std::string_view name) { names.emplace(name); });
  if (system_placeholder) names.insert(*system_placeholder);
  return names;
}

const PromptTemplate& prompt_template(std::string_view id) {
  for (const auto& t : registry()) {
    if (t.id == id) return t;
  }
  fail(Errc::kInvalidInput, "unknown template '" + std::string(id) + "'");
}

std::vector<std::string> template_ids() {
  std::vector<std::string> ids;
  for (const auto& t : registry()) ids.push_back(t.id);
  return ids;
}

std::string substitute(std::string_view text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  scan(
      text, [&](std::string_view plain) { out += plain; },
      [&](std::string_view name) {
        auto it = bindings.find(std::string(name));
        if (it == bindings.end()) {
          fail(Errc::kMissingPlaceholder, "no binding for placeholder {" + std::string(name) + "}");
        }
        out += it->second;
      });
  return out;
}

Prompt render(std::string_view template_id, const Bindings& bindings) {
  const PromptTemplate& t = prompt_template(template_id);
  Prompt p;
  p.template_id = t.id;
  if (t.system_placeholder) {
    auto it = bindings.find(*t.system_placeholder);
    if (it == bindings.end()) {
      fail(Errc::kMissingPlaceholder, "no binding for placeholder {" + *t.system_placeholder + "}");
    }
    p.messages.push_back({Role::kSystem, it->second});
  }
  p.messages.push_back({Role::kUser, substitute(t.text, bindings)});
  // keep only what the template consumed so request metadata stays small
  for (const auto& name : t.placeholders()) p.bindings.emplace(name, bindings.at(name));
  return p;
}

ChatRequest make_request(const Prompt& prompt, std::string model, double temperature,
                         std::optional<int> top_logprobs, std::optional<std::string> seed_tag) {
  ChatRequest r;
  r.model = std::move(model);
  r.messages = prompt.messages;
  r.temperature = temperature;
  r.top_logprobs = top_logprobs;
  r.seed_tag = std::move(seed_tag);
  return r;
}

std::string TaskProfile::input_close_tag() const {
  std::string_view tag = text::trim(input_tag);
  if (tag.size() < 2 || tag.front() != '<' || tag.back() != '>') return {};
  std::string_view name = tag.substr(1, tag.size() - 2);
  const auto sp = name.find_first_of(" \t");
  if (sp != std::string_view::npos) name = name.substr(0, sp);
  return "</" + std::string(name) + ">";
}

Bindings TaskProfile::base_bindings(const LabelSpace& labels) const {
  return {
      {"task_framing", task_framing},
      {"input_tag", input_tag},
      {"input_close_tag", input_close_tag()},
      {"input_noun", input_noun},
      {"labels", labels.joined(" / ")},
      {"CLASSIFICATION_TASK", classification_task},
      {"TASK_DESCRIPTION", task_description},
      {"task_description", task_description},
      {"evidence_phrase", evidence_phrase},
      {"input", input_phrase},
      {"ABSTAIN", abstain_token},
  };
}

std::string label_token(const LabelSpace& labels, LabelId id) {
  const auto& alias = labels.alias(id);
  return alias ? *alias : labels.name(id);
}

std::string format_rule(const Rule& rule, const LabelSpace& labels) {
  return rule.name() + " (fires -> " + label_token(labels, labels.id(rule.target_label())) +
         ")\n" + rule.body();
}

std::string format_rulebook(std::span<const Rule> rules, const LabelSpace& labels) {
  std::string out;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Rule " + std::to_string(i + 1) + ": " + format_rule(rules[i], labels);
  }
  return out;
}

std::string count_word(std::size_t n) {
  static constexpr std::array<std::string_view, 11> kWords = {
      "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};
  return n < kWords.size() ? std::string(kWords[n]) : std::to_string(n);
}

}  // namespace extc
