#include "extc/decisionset/compose.hpp"

namespace extc {

LabelId compose(std::span<const RuleVerdict> verdicts, const LabelSpace& labels) {
  LabelId out = labels.default_label();
  for (const auto& v : verdicts) {
    const LabelId target = labels.id(v.target_label);
    if (v.fired && labels.priority(target) > labels.priority(out)) out = target;
  }
  return out;
}

}  // namespace extc
