#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <vector>

namespace fedft {

using Rng = std::mt19937_64;

// Stream tags for derive_seed. Every random decision in a run draws from
// derive_seed(master_seed, tag, counters...) so that any component can be
// replayed on its own.
enum class Stream : std::uint64_t {
  kDataGeneration = 1,
  kTestSplit = 2,
  kPartition = 3,
  kModelInit = 4,
  kPretrain = 5,
  kParticipants = 6,
  kClientShuffle = 7,
  kRandomSelection = 8,
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// seed = mix(mix(mix(master ^ tag) ^ c0) ^ c1)...
inline std::uint64_t derive_seed(std::uint64_t master, Stream tag,
                                 std::initializer_list<std::uint64_t> counters = {}) noexcept {
  std::uint64_t s = mix64(master ^ mix64(static_cast<std::uint64_t>(tag)));
  for (std::uint64_t c : counters) s = mix64(s ^ mix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

// Uniform sample of k distinct values from [0, n), returned ascending.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  k = std::min(k, n);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace fedft
