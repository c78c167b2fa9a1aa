#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace laneil {

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, counter), so results never depend on evaluation order.

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash3(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

// FNV-1a, used to turn stream names into stream ids.
constexpr std::uint64_t stream_id(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives a child seed from a parent seed and a named purpose.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) noexcept {
  return hash3(seed, stream_id(name), index);
}

inline double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  return to_unit(hash3(seed, stream, counter));
}

// Standard normal via Box-Muller on two counter draws.
inline double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  double u1 = to_unit(hash3(seed, stream, 2 * counter));
  double u2 = to_unit(hash3(seed, stream, 2 * counter + 1));
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential view over a counter-based stream.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
  RandomStream(std::uint64_t seed, std::string_view name) : seed_(seed), stream_(stream_id(name)) {}

  std::uint64_t next_u64() noexcept { return hash3(seed_, stream_, counter_++); }
  double uniform() noexcept { return to_unit(next_u64()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept { return normal_at(seed_, stream_, counter_++); }

  // Uniform integer in [0, n) by rejection, so the result is unbiased.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates; portable, unlike std::shuffle whose algorithm is unspecified.
template <typename T>
void shuffle(std::vector<T>& v, RandomStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<std::size_t> permutation(std::size_t n, RandomStream& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle(idx, rng);
  return idx;
}

}  // namespace laneil
