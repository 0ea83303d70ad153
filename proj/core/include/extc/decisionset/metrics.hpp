#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "extc/decisionset/label_space.hpp"

namespace extc {

/// A predicted label, or nullopt for an output that failed to parse. A parse
/// failure is counted as wrong for the gold class: one false negative there
/// and no true or false positive anywhere.
using Prediction = std::optional<LabelId>;

struct ClassCounts {
  std::vector<std::size_t> tp;
  std::vector<std::size_t> fp;
  std::vector<std::size_t> fn;
  std::vector<std::size_t> support;  // gold instances per class

  explicit ClassCounts(std::size_t num_classes)
      : tp(num_classes), fp(num_classes), fn(num_classes), support(num_classes) {}
  std::size_t num_classes() const noexcept { return tp.size(); }
};

ClassCounts tally(std::span<const Prediction> preds, std::span<const LabelId> golds,
                  std::size_t num_classes);
ClassCounts tally(std::span<const LabelId> preds, std::span<const LabelId> golds,
                  std::size_t num_classes);

/// Unweighted mean of per-class F1 over all classes; 0/0 counts as 0.
double macro_f1(const ClassCounts& counts);
/// Unweighted mean of per-class recall over classes with gold support.
double balanced_accuracy(const ClassCounts& counts);

double macro_f1(std::span<const Prediction> preds, std::span<const LabelId> golds,
                const LabelSpace& labels);
double balanced_accuracy(std::span<const Prediction> preds, std::span<const LabelId> golds,
                         const LabelSpace& labels);

}  // namespace extc
