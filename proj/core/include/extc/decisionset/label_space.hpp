#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace extc {

/// Index of a label within its LabelSpace (position in labels()).
using LabelId = std::size_t;

/// Ordered label set with a priority order. The default label is the one with
/// the lowest priority rank; it is what a decision set predicts when no rule
/// fires.
class LabelSpace {
 public:
  /// `priority` must map every label onto a distinct rank in 1..C. `aliases`
  /// optionally gives a short alternative spelling per label (e.g. "1").
  LabelSpace(std::vector<std::string> labels, const std::map<std::string, int>& priority,
             const std::map<std::string, std::string>& aliases = {});

  /// Priority equal to list position: labels[0] is the default.
  static LabelSpace ordered_by_priority(std::vector<std::string> labels,
                                        const std::map<std::string, std::string>& aliases = {});

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& name(LabelId id) const { return labels_.at(id); }
  int priority(LabelId id) const { return priority_.at(id); }
  LabelId default_label() const noexcept { return default_; }

  std::optional<LabelId> find(std::string_view name) const;
  /// Like find() but throws invalid-input for unknown names.
  LabelId id(std::string_view name) const;

  /// Case-insensitive match against label names, then against aliases.
  std::optional<LabelId> resolve(std::string_view token) const;

  const std::optional<std::string>& alias(LabelId id) const { return aliases_.at(id); }

  /// "a / b / c", the form the prompt templates expect for {labels}.
  std::string joined(std::string_view sep = " / ") const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> labels_;
  std::vector<int> priority_;
  std::vector<std::optional<std::string>> aliases_;
  LabelId default_ = 0;
};

}  // namespace extc
