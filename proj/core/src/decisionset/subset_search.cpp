#include "extc/decisionset/subset_search.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "extc/common/error.hpp"

namespace extc {

namespace {

std::vector<LabelId> golds_of(std::span<const Example> examples) {
  std::vector<LabelId> golds;
  golds.reserve(examples.size());
  for (const auto& ex : examples) golds.push_back(ex.gold);
  return golds;
}

}  // namespace

SubsetEvaluation evaluate_subset(std::span<const std::string> subset, std::span<const Rule> rules,
                                 const FiringTable& table, std::span<const Example> examples,
                                 const LabelSpace& labels) {
  std::unordered_map<std::string, const Rule*> by_id;
  for (const auto& r : rules) by_id.emplace(r.id(), &r);

  std::vector<std::pair<LabelId, const std::string*>> chosen;
  for (const auto& id : subset) {
    auto it = by_id.find(id);
    require(it != by_id.end(), "subset rule '" + id + "' not among the given rules");
    chosen.emplace_back(labels.id(it->second->target_label()), &it->second->id());
  }

  SubsetEvaluation out;
  out.predictions.reserve(examples.size());
  for (const auto& ex : examples) {
    LabelId pred = labels.default_label();
    for (const auto& [target, rule_id] : chosen) {
      if (table.at(ex.id, *rule_id) == Firing::kFired &&
          labels.priority(target) > labels.priority(pred)) {
        pred = target;
      }
    }
    out.predictions.push_back(pred);
  }
  const auto golds = golds_of(examples);
  const auto counts = tally(std::span<const LabelId>(out.predictions), golds, labels.size());
  out.macro_f1 = macro_f1(counts);
  out.balanced_accuracy = balanced_accuracy(counts);
  return out;
}

SubsetSearch::SubsetSearch(std::span<const Rule> pool, const FiringTable& table,
                           std::span<const Example> val, const LabelSpace& labels, double lambda,
                           std::span<const Rule> fixed)
    : labels_(&labels), lambda_(lambda), golds_(golds_of(val)) {
  require(!val.empty(), "subset search needs a non-empty validation set");
  require(lambda >= 0.0, "sparsity weight must be non-negative");

  std::vector<const Rule*> sorted;
  sorted.reserve(pool.size());
  for (const auto& r : pool) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const Rule* a, const Rule* b) { return a->id() < b->id(); });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    require(sorted[i - 1]->id() != sorted[i]->id(), "duplicate rule id '" + sorted[i]->id() + "'");
  }
  require(sorted.size() < std::numeric_limits<std::uint32_t>::max(), "pool too large");

  for (const Rule* r : sorted) {
    ids_.push_back(r->id());
    targets_.push_back(labels.id(r->target_label()));
    std::vector<std::uint8_t> row(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
      row[i] = table.at(val[i].id, r->id()) == Firing::kFired ? 1 : 0;
    }
    fires_.push_back(std::move(row));
  }

  base_predictions_.assign(val.size(), labels.default_label());
  for (const auto& r : fixed) {
    const LabelId target = labels.id(r.target_label());
    for (std::size_t i = 0; i < val.size(); ++i) {
      if (table.at(val[i].id, r.id()) == Firing::kFired &&
          labels.priority(target) > labels.priority(base_predictions_[i])) {
        base_predictions_[i] = target;
      }
    }
  }
}

double SubsetSearch::score(const std::vector<LabelId>& predictions, std::size_t size) const {
  const auto counts = tally(std::span<const LabelId>(predictions), golds_, labels_->size());
  return macro_f1(counts) -
         lambda_ * static_cast<double>(size) / static_cast<double>(golds_.size());
}

SubsetSearch::Node SubsetSearch::root() const {
  Node node;
  node.predictions = base_predictions_;
  node.objective = score(node.predictions, 0);
  return node;
}

SubsetSearch::Node SubsetSearch::extend(const Node& parent, std::uint32_t rule) const {
  Node child;
  child.members = parent.members;
  child.members.insert(std::lower_bound(child.members.begin(), child.members.end(), rule), rule);
  child.predictions = parent.predictions;
  const LabelId target = targets_[rule];
  const int rank = labels_->priority(target);
  const auto& row = fires_[rule];
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] && rank > labels_->priority(child.predictions[i])) child.predictions[i] = target;
  }
  child.objective = score(child.predictions, child.members.size());
  return child;
}

SubsetSearch::Node SubsetSearch::from_members(std::vector<std::uint32_t> members) const {
  Node node = root();
  for (std::uint32_t m : members) node = extend(node, m);
  return node;
}

bool SubsetSearch::better(const Node& a, const Node& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
  return a.members < b.members;
}

ActiveSet SubsetSearch::to_active_set(const Node& node) const {
  ActiveSet out;
  out.score = node.objective;
  for (std::uint32_t m : node.members) out.rule_ids.push_back(ids_[m]);
  return out;
}

double SubsetSearch::objective(std::span<const std::string> subset_ids) const {
  std::vector<std::uint32_t> members;
  for (const auto& id : subset_ids) {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    require(it != ids_.end() && *it == id, "rule '" + id + "' not in search pool");
    members.push_back(static_cast<std::uint32_t>(it - ids_.begin()));
  }
  std::sort(members.begin(), members.end());
  require(std::adjacent_find(members.begin(), members.end()) == members.end(),
          "duplicate rule in subset");
  return from_members(std::move(members)).objective;
}

ActiveSet SubsetSearch::beam(std::size_t max_size, std::size_t beam_width,
                             const std::optional<ActiveSet>& seed) const {
  require(max_size >= 1, "max subset size must be >= 1");
  require(beam_width >= 1, "beam width must be >= 1");

  std::vector<Node> frontier{root()};
  if (seed && !seed->rule_ids.empty()) {
    require(seed->rule_ids.size() <= max_size, "seed larger than max subset size");
    std::vector<std::uint32_t> members;
    for (const auto& id : seed->rule_ids) {
      auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
      require(it != ids_.end() && *it == id, "seed rule '" + id + "' not in pool");
      members.push_back(static_cast<std::uint32_t>(it - ids_.begin()));
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    frontier.push_back(from_members(std::move(members)));
  }

  Node best = *std::min_element(frontier.begin(), frontier.end(), better);
  const auto m = static_cast<std::uint32_t>(ids_.size());

  while (!frontier.empty()) {
    std::set<std::vector<std::uint32_t>> seen;
    std::vector<Node> children;
    for (const Node& node : frontier) {
      if (node.members.size() >= max_size) continue;
      for (std::uint32_t r = 0; r < m; ++r) {
        if (std::binary_search(node.members.begin(), node.members.end(), r)) continue;
        auto members = node.members;
        members.insert(std::lower_bound(members.begin(), members.end(), r), r);
        if (!seen.insert(members).second) continue;
        children.push_back(extend(node, r));
      }
    }
    if (children.empty()) break;
    const std::size_t keep = std::min(beam_width, children.size());
    std::partial_sort(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(keep),
                      children.end(), better);
    children.resize(keep);
    if (better(children.front(), best)) best = children.front();
    frontier = std::move(children);
  }
  return to_active_set(best);
}

std::size_t count_subsets(std::size_t n, std::size_t max_size) {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  std::size_t total = 0;
  std::size_t binom = 1;  // C(n, 0)
  for (std::size_t k = 0; k <= std::min(n, max_size); ++k) {
    if (k > 0) {
      // C(n, k) = C(n, k-1) * (n - k + 1) / k, exact at each step.
      const std::size_t num = n - k + 1;
      if (binom > kMax / num) return kMax;
      binom = binom * num / k;
    }
    if (total > kMax - binom) return kMax;
    total += binom;
  }
  return total;
}

ActiveSet SubsetSearch::exhaustive(std::size_t max_size) const {
  require(max_size >= 1, "max subset size must be >= 1");
  const std::size_t n = ids_.size();
  const std::size_t total = count_subsets(n, max_size);
  if (total > kMaxExhaustiveSubsets) {
    fail(Errc::kTooLarge, std::to_string(total) + " subsets exceed the enumeration guard of " +
                              std::to_string(kMaxExhaustiveSubsets));
  }
  Node best = root();
  // Depth-first over sorted member lists; each node extends its parent.
  std::vector<Node> stack{best};
  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    if (better(node, best)) best = node;
    if (node.members.size() >= max_size) continue;
    const std::uint32_t start = node.members.empty() ? 0 : node.members.back() + 1;
    for (std::uint32_t r = start; r < n; ++r) stack.push_back(extend(node, r));
  }
  return to_active_set(best);
}

ActiveSet beam_select(std::span<const Rule> pool, const FiringTable& table,
                      std::span<const Example> val, const LabelSpace& labels,
                      const SearchOptions& options, const std::optional<ActiveSet>& seed) {
  SubsetSearch search(pool, table, val, labels, options.lambda);
  return search.beam(options.max_size, options.beam_width, seed);
}

ActiveSet exhaustive_select(std::span<const Rule> pool, const FiringTable& table,
                            std::span<const Example> val, const LabelSpace& labels,
                            std::size_t max_size, double lambda) {
  SubsetSearch search(pool, table, val, labels, lambda);
  return search.exhaustive(max_size);
}

}  // namespace extc
