#include "contour_adapt/rng.hpp"

#include "contour_adapt/errors.hpp"

namespace ca {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// Stafford mix13 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGolden)), counter_(0) {}

Rng Rng::child(std::string_view label) const {
  return Rng(mix64(key_ ^ fnv1a(label)), 0);
}

Rng Rng::child(std::string_view label, std::uint64_t index) const {
  std::uint64_t k = mix64(key_ ^ fnv1a(label));
  return Rng(mix64(k + (index + 1) * kGolden), 0);
}

std::uint64_t Rng::next_u64() {
  return mix64(key_ + (counter_++) * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw ContractError("uniform_int: n must be > 0");
  if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
  // Mask rejection keeps the result exactly uniform.
  std::uint64_t mask = ~0ull >> __builtin_clzll(n);
  for (;;) {
    std::uint64_t v = next_u64() & mask;
    if (v < n) return v;
  }
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::normal() {
  double acc = 0.0;
  for (int i = 0; i < 12; ++i) acc += uniform();
  return acc - 6.0;
}

}  // namespace ca
