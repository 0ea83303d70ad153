#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace extc {

enum class Firing : std::uint8_t { kAbstain = 0, kFired = 1 };

std::string_view to_string(Firing firing);

/// Cache of per-(example, rule) verdicts. Safe for concurrent inserts of
/// distinct keys and concurrent reads. Re-inserting an existing key with the
/// same verdict is a no-op; with a different verdict it is an error.
class FiringTable {
 public:
  struct Entry {
    std::string example_id;
    std::string rule_id;
    Firing firing = Firing::kAbstain;
    std::string reasoning;
  };

  FiringTable() = default;
  FiringTable(const FiringTable& other);
  FiringTable& operator=(const FiringTable& other);
  FiringTable(FiringTable&& other) noexcept;
  FiringTable& operator=(FiringTable&& other) noexcept;

  /// Returns true when a new entry was written.
  bool insert(std::string_view example_id, std::string_view rule_id, Firing firing,
              std::string reasoning = {});

  std::optional<Firing> find(std::string_view example_id, std::string_view rule_id) const;

  /// Throws incomplete-cache naming the pair when absent.
  Firing at(std::string_view example_id, std::string_view rule_id) const;

  std::size_t size() const;

  /// All entries sorted by (example_id, rule_id).
  std::vector<Entry> entries() const;

 private:
  struct Value {
    Firing firing;
    std::string reasoning;
  };
  static std::string key(std::string_view example_id, std::string_view rule_id);

  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Value> map_;
};

}  // namespace extc
