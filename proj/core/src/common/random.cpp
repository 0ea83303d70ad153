#include "extc/common/random.hpp"

#include <numeric>
#include <sstream>

#include "extc/common/error.hpp"

namespace extc {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  require(n > 0, "uniform_index: empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = Rng::max() - (Rng::max() % range + 1) % range;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x > limit);
  return static_cast<std::size_t>(x % range);
}

double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  require(k <= n, "sample_without_replacement: k > n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  }
  idx.resize(k);
  return idx;
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream in(state);
  in >> rng;
  if (!in) fail(Errc::kInvalidInput, "malformed RNG state");
  return rng;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
  std::uint64_t h = 1469598103934665603ULL ^ base;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

}  // namespace extc
