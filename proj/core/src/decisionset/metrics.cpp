#include "extc/decisionset/metrics.hpp"

#include <string>

#include "extc/common/error.hpp"

namespace extc {

namespace {

void check_lengths(std::size_t preds, std::size_t golds) {
  if (preds != golds) {
    fail(Errc::kInvalidInput, "prediction/gold length mismatch: " + std::to_string(preds) +
                                  " vs " + std::to_string(golds));
  }
}

template <typename PredAt>
ClassCounts tally_impl(std::size_t n, std::span<const LabelId> golds, std::size_t num_classes,
                       PredAt pred_at) {
  ClassCounts counts(num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const LabelId gold = golds[i];
    require(gold < num_classes, "gold label out of range");
    ++counts.support[gold];
    const Prediction pred = pred_at(i);
    if (!pred) {
      ++counts.fn[gold];
      continue;
    }
    require(*pred < num_classes, "predicted label out of range");
    if (*pred == gold) {
      ++counts.tp[gold];
    } else {
      ++counts.fp[*pred];
      ++counts.fn[gold];
    }
  }
  return counts;
}

}  // namespace

ClassCounts tally(std::span<const Prediction> preds, std::span<const LabelId> golds,
                  std::size_t num_classes) {
  check_lengths(preds.size(), golds.size());
  return tally_impl(preds.size(), golds, num_classes,
                    [&](std::size_t i) { return preds[i]; });
}

ClassCounts tally(std::span<const LabelId> preds, std::span<const LabelId> golds,
                  std::size_t num_classes) {
  check_lengths(preds.size(), golds.size());
  return tally_impl(preds.size(), golds, num_classes,
                    [&](std::size_t i) { return Prediction(preds[i]); });
}

double macro_f1(const ClassCounts& counts) {
  const std::size_t c = counts.num_classes();
  if (c == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t denom = 2 * counts.tp[k] + counts.fp[k] + counts.fn[k];
    if (denom > 0) sum += static_cast<double>(2 * counts.tp[k]) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(c);
}

double balanced_accuracy(const ClassCounts& counts) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < counts.num_classes(); ++k) {
    if (counts.support[k] == 0) continue;
    sum += static_cast<double>(counts.tp[k]) / static_cast<double>(counts.support[k]);
    ++present;
  }
  return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

double macro_f1(std::span<const Prediction> preds, std::span<const LabelId> golds,
                const LabelSpace& labels) {
  return macro_f1(tally(preds, golds, labels.size()));
}

double balanced_accuracy(std::span<const Prediction> preds, std::span<const LabelId> golds,
                         const LabelSpace& labels) {
  return balanced_accuracy(tally(preds, golds, labels.size()));
}

}  // namespace extc
