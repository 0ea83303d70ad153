#include "extc/decisionset/label_space.hpp"

#include <algorithm>
#include <set>

#include "extc/common/error.hpp"
#include "extc/common/text.hpp"

namespace extc {

LabelSpace::LabelSpace(std::vector<std::string> labels, const std::map<std::string, int>& priority,
                       const std::map<std::string, std::string>& aliases)
    : labels_(std::move(labels)) {
  const std::size_t c = labels_.size();
  require(c >= 2, "label space needs at least two labels");
  std::set<std::string> seen;
  for (const auto& label : labels_) {
    require(text::is_single_token(label), "label '" + label + "' must be a non-empty token");
    require(seen.insert(label).second, "duplicate label '" + label + "'");
  }
  require(priority.size() == c, "priority must rank every label exactly once");
  std::set<int> ranks;
  priority_.reserve(c);
  for (const auto& label : labels_) {
    auto it = priority.find(label);
    require(it != priority.end(), "no priority for label '" + label + "'");
    require(it->second >= 1 && it->second <= static_cast<int>(c),
            "priority of '" + label + "' outside 1.." + std::to_string(c));
    require(ranks.insert(it->second).second, "priority ranks must be distinct");
    priority_.push_back(it->second);
  }
  default_ = static_cast<LabelId>(
      std::min_element(priority_.begin(), priority_.end()) - priority_.begin());

  aliases_.resize(c);
  std::set<std::string> alias_seen;
  for (const auto& [label, alias] : aliases) {
    auto id = find(label);
    require(id.has_value(), "alias given for unknown label '" + label + "'");
    require(text::is_single_token(alias), "alias for '" + label + "' must be a token");
    require(alias_seen.insert(text::to_lower(alias)).second, "duplicate alias '" + alias + "'");
    aliases_[*id] = alias;
  }
  for (LabelId i = 0; i < c; ++i) {
    for (LabelId j = 0; j < c; ++j) {
      if (aliases_[j] && i != j) {
        require(!text::iequals(labels_[i], *aliases_[j]),
                "alias '" + *aliases_[j] + "' collides with label '" + labels_[i] + "'");
      }
    }
  }
}

LabelSpace LabelSpace::ordered_by_priority(std::vector<std::string> labels,
                                           const std::map<std::string, std::string>& aliases) {
  std::map<std::string, int> priority;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    priority[labels[i]] = static_cast<int>(i + 1);
  }
  return LabelSpace(std::move(labels), priority, aliases);
}

std::optional<LabelId> LabelSpace::find(std::string_view name) const {
  for (LabelId i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == name) return i;
  }
  return std::nullopt;
}

LabelId LabelSpace::id(std::string_view name) const {
  auto found = find(name);
  if (!found) fail(Errc::kInvalidInput, "unknown label '" + std::string(name) + "'");
  return *found;
}

std::optional<LabelId> LabelSpace::resolve(std::string_view token) const {
  token = text::trim(token);
  for (LabelId i = 0; i < labels_.size(); ++i) {
    if (text::iequals(labels_[i], token)) return i;
  }
  for (LabelId i = 0; i < labels_.size(); ++i) {
    if (aliases_[i] && text::iequals(*aliases_[i], token)) return i;
  }
  return std::nullopt;
}

std::string LabelSpace::joined(std::string_view sep) const {
  return text::join(labels_, sep);
}

}  // namespace extc
