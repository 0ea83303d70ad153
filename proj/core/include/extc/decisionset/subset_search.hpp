#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extc/decisionset/firing_table.hpp"
#include "extc/decisionset/label_space.hpp"
#include "extc/decisionset/metrics.hpp"
#include "extc/decisionset/types.hpp"

namespace extc {

struct SubsetEvaluation {
  std::vector<LabelId> predictions;
  double macro_f1 = 0.0;
  double balanced_accuracy = 0.0;
};

/// Composes cached firings of `subset` (ids of rules in `rules`) over
/// `examples`. Reads only the firing table.
SubsetEvaluation evaluate_subset(std::span<const std::string> subset, std::span<const Rule> rules,
                                 const FiringTable& table, std::span<const Example> examples,
                                 const LabelSpace& labels);

struct SearchOptions {
  std::size_t max_size = 8;     // K
  double lambda = 1.0;          // sparsity weight
  std::size_t beam_width = 15;
};

/// Subset search problem over cached firings. The objective of a subset S is
///   macro-F1(fixed ∪ S; val) - lambda * |S| / |val|,
/// where `fixed` rules are always composed in but never searched or charged.
/// Ties go to the smaller subset, then to the lexicographically smallest
/// sorted id list.
class SubsetSearch {
 public:
  SubsetSearch(std::span<const Rule> pool, const FiringTable& table, std::span<const Example> val,
               const LabelSpace& labels, double lambda, std::span<const Rule> fixed = {});

  double objective(std::span<const std::string> subset_ids) const;

  /// Beam search from the empty set; `seed`, when given, joins the initial
  /// beam so the result never scores below it.
  ActiveSet beam(std::size_t max_size, std::size_t beam_width,
                 const std::optional<ActiveSet>& seed = std::nullopt) const;

  /// Enumerates every subset of size <= max_size. Throws too-large above
  /// kMaxExhaustiveSubsets.
  ActiveSet exhaustive(std::size_t max_size) const;

  std::size_t pool_size() const noexcept { return ids_.size(); }

  static constexpr std::size_t kMaxExhaustiveSubsets = 1'000'000;

 private:
  struct Node {
    std::vector<std::uint32_t> members;  // sorted indices into ids_
    std::vector<LabelId> predictions;
    double objective = 0.0;
  };

  Node root() const;
  Node extend(const Node& parent, std::uint32_t rule) const;
  Node from_members(std::vector<std::uint32_t> members) const;
  double score(const std::vector<LabelId>& predictions, std::size_t size) const;
  static bool better(const Node& a, const Node& b);
  ActiveSet to_active_set(const Node& node) const;

  const LabelSpace* labels_;
  double lambda_;
  std::vector<std::string> ids_;               // sorted rule ids
  std::vector<LabelId> targets_;               // per sorted rule
  std::vector<std::vector<std::uint8_t>> fires_;  // [rule][example]
  std::vector<LabelId> golds_;
  std::vector<LabelId> base_predictions_;      // composition of fixed rules
};

ActiveSet beam_select(std::span<const Rule> pool, const FiringTable& table,
                      std::span<const Example> val, const LabelSpace& labels,
                      const SearchOptions& options,
                      const std::optional<ActiveSet>& seed = std::nullopt);

ActiveSet exhaustive_select(std::span<const Rule> pool, const FiringTable& table,
                            std::span<const Example> val, const LabelSpace& labels,
                            std::size_t max_size, double lambda);

/// Σ_{k=0..max_size} C(n, k), saturating at SIZE_MAX.
std::size_t count_subsets(std::size_t n, std::size_t max_size);

}  // namespace extc
