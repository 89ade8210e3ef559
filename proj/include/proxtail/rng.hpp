#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace proxtail {

namespace detail {

// SplitMix64 output function (Steele, Lea, Flood 2014).
inline std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_in(std::uint64_t h, std::uint64_t v) {
  return splitmix_finalize(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

}  // namespace detail

// Counter-based random stream. The state is a plain 64-bit counter advanced
// by a fixed odd increment, each output is a hash of the counter, so streams
// derived from distinct (replicate, iteration) keys are independent of the
// order in which they are consumed.
class SubStream {
 public:
  explicit SubStream(std::uint64_t seed) : state_(seed) {}

  // Keyed substream: one per (replicate, iteration, purpose) triple.
  static SubStream derive(std::uint64_t master_seed, std::uint64_t replicate,
                          std::uint64_t iteration, std::uint64_t purpose = 0) {
    std::uint64_t h = detail::splitmix_finalize(master_seed);
    h = detail::mix_in(h, replicate);
    h = detail::mix_in(h, iteration);
    h = detail::mix_in(h, purpose);
    return SubStream(h);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::splitmix_finalize(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; generates pairs, caches the spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, bound); rejection sampling on the top range.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
    const std::uint64_t threshold = (-bound) % bound;  // 2^64 mod bound
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r < threshold);
    return r % bound;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Floyd's algorithm: uniform m-subset of {0, ..., population-1}, returned in
// ascending order so summations over the subset have a fixed evaluation order.
inline std::vector<int> sample_subset(int population, int m, SubStream& rng) {
  if (m < 0 || m > population) {
    throw std::invalid_argument("sample_subset: need 0 <= m <= population");
  }
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(m));
  for (int j = population - m; j < population; ++j) {
    const int t = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(j) + 1));
    auto it = std::lower_bound(chosen.begin(), chosen.end(), t);
    if (it != chosen.end() && *it == t) {
      it = std::lower_bound(chosen.begin(), chosen.end(), j);
      chosen.insert(it, j);
    } else {
      chosen.insert(it, t);
    }
  }
  return chosen;
}

// FNV-1a, used for content hashes in manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace proxtail
