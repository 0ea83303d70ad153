#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace extc {

// mt19937_64's output sequence is fixed by the standard; the helpers below
// avoid std::*_distribution so draws are identical across standard libraries.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n), n > 0, by rejection sampling.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform real in [0, 1) from the top 53 bits.
double uniform_unit(Rng& rng);

/// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

template <typename T>
void shuffle_in_place(Rng& rng, std::vector<T>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

/// Stable 64-bit seed from a base seed and a string key (FNV-1a + splitmix).
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

}  // namespace extc
