#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "extc/decisionset/label_space.hpp"

namespace extc {

enum class Split { kTrain, kVal, kTest };
enum class Difficulty { kHard, kEasy };

std::string_view to_string(Split split);
std::string_view to_string(Difficulty difficulty);
Split parse_split(std::string_view s);
Difficulty parse_difficulty(std::string_view s);

struct Example {
  std::string id;
  std::string text;
  LabelId gold = 0;
  std::optional<std::string> evidence;
  Split split = Split::kTrain;
  std::optional<Difficulty> difficulty;
};

enum class Origin { kNewSynthesis, kRevisionOf, kRlMined };

std::string_view to_string(Origin origin);
Origin parse_origin(std::string_view s);

struct Provenance {
  Origin origin = Origin::kNewSynthesis;
  std::string parent_id;  // set for kRevisionOf
  int iteration = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// One stand-alone natural-language rule. It either fires (predicting its
/// target label) or abstains. Rules never target the default label.
class Rule {
 public:
  static Rule create(std::string rule_id, std::string name, std::string target_label,
                     std::string body, Provenance provenance, const LabelSpace& labels);

  const std::string& id() const noexcept { return id_; }
  const std::string& name() const noexcept { return name_; }
  const std::string& target_label() const noexcept { return target_label_; }
  const std::string& body() const noexcept { return body_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  friend bool operator==(const Rule&, const Rule&) = default;

 private:
  Rule() = default;

  std::string id_;
  std::string name_;
  std::string target_label_;
  std::string body_;
  Provenance provenance_;
};

/// Append-only persistent candidate pool. Rules are never removed or mutated.
class RulePool {
 public:
  /// Throws invalid-input when the id is already present.
  void add(Rule rule, int created_at_iteration);

  bool contains(std::string_view rule_id) const;
  const Rule& get(std::string_view rule_id) const;
  int created_at(std::string_view rule_id) const;

  std::span<const Rule> rules() const noexcept { return rules_; }
  std::size_t size() const noexcept { return rules_.size(); }
  bool empty() const noexcept { return rules_.empty(); }

 private:
  std::vector<Rule> rules_;
  std::vector<int> created_at_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Currently selected subset with its validation objective. rule_ids are kept
/// sorted.
struct ActiveSet {
  std::vector<std::string> rule_ids;
  double score = 0.0;
  int iteration = 0;

  friend bool operator==(const ActiveSet&, const ActiveSet&) = default;
};

/// Looks up `ids` in `pool`, preserving order.
std::vector<Rule> select_rules(const RulePool& pool, std::span<const std::string> ids);

}  // namespace extc
