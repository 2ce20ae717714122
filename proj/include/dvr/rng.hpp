#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace dvr {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ mix64(value + 0x632be59bd9b4e019ULL));
}

// Stream id used for the parameter server's own draws; disjoint from worker ids.
inline constexpr std::uint64_t kParameterServerStream = (1ULL << 63) | 0x7073ULL;

/// Seed of the random stream owned by `stream_id` (a worker index or
/// kParameterServerStream) in outer round `round`. Depends on nothing else,
/// so worker results do not depend on scheduling.
constexpr std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t round,
                                    std::uint64_t stream_id) noexcept {
  return hash_combine(hash_combine(mix64(master_seed), round), stream_id);
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dvr
