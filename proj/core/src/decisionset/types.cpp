#include "extc/decisionset/types.hpp"

#include "extc/common/error.hpp"
#include "extc/common/text.hpp"

namespace extc {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

std::string_view to_string(Difficulty difficulty) {
  return difficulty == Difficulty::kHard ? "hard" : "easy";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  fail(Errc::kInvalidInput, "unknown split '" + std::string(s) + "'");
}

Difficulty parse_difficulty(std::string_view s) {
  if (s == "hard") return Difficulty::kHard;
  if (s == "easy") return Difficulty::kEasy;
  fail(Errc::kInvalidInput, "unknown difficulty '" + std::string(s) + "'");
}

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::kNewSynthesis: return "new_synthesis";
    case Origin::kRevisionOf: return "revision_of";
    case Origin::kRlMined: return "rl_mined";
  }
  return "new_synthesis";
}

Origin parse_origin(std::string_view s) {
  if (s == "new_synthesis") return Origin::kNewSynthesis;
  if (s == "revision_of") return Origin::kRevisionOf;
  if (s == "rl_mined") return Origin::kRlMined;
  fail(Errc::kInvalidInput, "unknown rule origin '" + std::string(s) + "'");
}

Rule Rule::create(std::string rule_id, std::string name, std::string target_label,
                  std::string body, Provenance provenance, const LabelSpace& labels) {
  require(text::is_single_token(rule_id), "rule id must be a non-empty token");
  auto target = labels.find(target_label);
  require(target.has_value(), "rule " + rule_id + " targets unknown label '" + target_label + "'");
  require(*target != labels.default_label(),
          "rule " + rule_id + " targets the default label '" + target_label + "'");
  require(!text::trim(body).empty(), "rule " + rule_id + " has an empty body");
  require(name.find('\n') == std::string::npos, "rule name must be a single line");
  require(provenance.origin != Origin::kRevisionOf || !provenance.parent_id.empty(),
          "revision provenance needs a parent rule id");
  Rule rule;
  rule.id_ = std::move(rule_id);
  rule.name_ = std::move(name);
  rule.target_label_ = std::move(target_label);
  rule.body_ = std::move(body);
  rule.provenance_ = std::move(provenance);
  return rule;
}

void RulePool::add(Rule rule, int created_at_iteration) {
  require(!contains(rule.id()), "rule id '" + rule.id() + "' already in pool");
  index_.emplace(rule.id(), rules_.size());
  rules_.push_back(std::move(rule));
  created_at_.push_back(created_at_iteration);
}

bool RulePool::contains(std::string_view rule_id) const {
  return index_.find(std::string(rule_id)) != index_.end();
}

const Rule& RulePool::get(std::string_view rule_id) const {
  auto it = index_.find(std::string(rule_id));
  if (it == index_.end()) fail(Errc::kInvalidInput, "rule '" + std::string(rule_id) + "' not in pool");
  return rules_[it->second];
}

int RulePool::created_at(std::string_view rule_id) const {
  auto it = index_.find(std::string(rule_id));
  if (it == index_.end()) fail(Errc::kInvalidInput, "rule '" + std::string(rule_id) + "' not in pool");
  return created_at_[it->second];
}

std::vector<Rule> select_rules(const RulePool& pool, std::span<const std::string> ids) {
  std::vector<Rule> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(pool.get(id));
  return out;
}

}  // namespace extc
