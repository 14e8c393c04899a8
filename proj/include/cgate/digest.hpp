#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgate {

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// First 8 bytes of SHA-256, big-endian.
std::uint64_t sha256_u64(std::string_view bytes);

// Derives a child seed from a root seed and an ordered list of labelled parts.
// The parts are joined with an unambiguous length prefix before hashing, so
// ("ab","c") and ("a","bc") never collide.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::string_view> parts);

// SplitMix64 (Steele, Lea, Flood 2014). All seeded randomness in the toolkit
// goes through this generator; results are identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace cgate
