#pragma once

#include <cstdint>
#include <vector>

namespace signet {

// SplitMix64 generator (Steele, Lea & Flood 2014). Chosen over std::mt19937
// because the full algorithm fits in a dozen lines and, unlike the std
// distributions, every derived value below is pinned bit-for-bit across
// platforms and standard libraries. All randomness in the library (weight
// init, shuffles, synthetic signals, dropout masks) flows through this type.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 mantissa bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n). Plain modulo; the bias is ~n/2^64 and the
  // mapping is part of the documented algorithm.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Independent child stream. Mixing the tag through one SplitMix64 step
  // decorrelates sibling streams derived from the same parent.
  Rng fork(std::uint64_t tag) const {
    Rng mixer(state_ ^ (tag * 0xd1342543de82ef95ull));
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

// In-place Fisher-Yates shuffle driven by Rng::next_below.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  if (v.size() < 2) return;
  for (std::size_t i = v.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(v[i], v[j]);
  }
}

}  // namespace signet
