#pragma once

#include <span>
#include <string_view>

#include "extc/decisionset/label_space.hpp"

namespace extc {

struct RuleVerdict {
  std::string_view target_label;
  bool fired = false;
};

/// Decision-set composition: the fired target label with the highest priority
/// rank, or the default label when nothing fires. Order-independent.
/// Throws invalid-input on a label outside `labels`.
LabelId compose(std::span<const RuleVerdict> verdicts, const LabelSpace& labels);

}  // namespace extc
