#include "extc/decisionset/firing_table.hpp"

#include <algorithm>
#include <mutex>

#include "extc/common/error.hpp"

namespace extc {

namespace {
constexpr char kSep = '\x1f';
}

std::string_view to_string(Firing firing) {
  return firing == Firing::kFired ? "fired" : "abstain";
}

FiringTable::FiringTable(const FiringTable& other) {
  std::shared_lock lock(other.mutex_);
  map_ = other.map_;
}

FiringTable& FiringTable::operator=(const FiringTable& other) {
  if (this == &other) return *this;
  std::unordered_map<std::string, Value> copy;
  {
    std::shared_lock lock(other.mutex_);
    copy = other.map_;
  }
  std::unique_lock lock(mutex_);
  map_ = std::move(copy);
  return *this;
}

FiringTable::FiringTable(FiringTable&& other) noexcept {
  std::unique_lock lock(other.mutex_);
  map_ = std::move(other.map_);
}

FiringTable& FiringTable::operator=(FiringTable&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  map_ = std::move(other.map_);
  return *this;
}

std::string FiringTable::key(std::string_view example_id, std::string_view rule_id) {
  std::string k;
  k.reserve(example_id.size() + rule_id.size() + 1);
  k.append(example_id).push_back(kSep);
  k.append(rule_id);
  return k;
}

bool FiringTable::insert(std::string_view example_id, std::string_view rule_id, Firing firing,
                         std::string reasoning) {
  std::unique_lock lock(mutex_);
  auto [it, inserted] = map_.try_emplace(key(example_id, rule_id), Value{firing, std::move(reasoning)});
  if (!inserted && it->second.firing != firing) {
    fail(Errc::kInvalidInput, "conflicting firing for (" + std::string(example_id) + ", " +
                                  std::string(rule_id) + ")");
  }
  return inserted;
}

std::optional<Firing> FiringTable::find(std::string_view example_id, std::string_view rule_id) const {
  std::shared_lock lock(mutex_);
  auto it = map_.find(key(example_id, rule_id));
  if (it == map_.end()) return std::nullopt;
  return it->second.firing;
}

Firing FiringTable::at(std::string_view example_id, std::string_view rule_id) const {
  auto found = find(example_id, rule_id);
  if (!found) {
    fail(Errc::kIncompleteCache, "no firing cached for (example " + std::string(example_id) +
                                     ", rule " + std::string(rule_id) + ")");
  }
  return *found;
}

std::size_t FiringTable::size() const {
  std::shared_lock lock(mutex_);
  return map_.size();
}

std::vector<FiringTable::Entry> FiringTable::entries() const {
  std::vector<Entry> out;
  {
    std::shared_lock lock(mutex_);
    out.reserve(map_.size());
    for (const auto& [k, v] : map_) {
      const auto sep = k.find(kSep);
      out.push_back(Entry{k.substr(0, sep), k.substr(sep + 1), v.firing, v.reasoning});
    }
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.example_id, a.rule_id) < std::tie(b.example_id, b.rule_id);
  });
  return out;
}

}  // namespace extc
