#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace ca {

// Counter-based deterministic random stream. A stream is (key, counter); a
// draw mixes the pair and bumps the counter, so child streams derived from
// the key are independent of how many draws the parent has made. All draws
// are pure integer arithmetic plus IEEE divisions, so the same seed and draw
// sequence produce identical bits on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream addressed by (label) or (label, index).
  Rng child(std::string_view label) const;
  Rng child(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased uniform integer in [0, n); n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p);

  // Approximate standard normal: sum of 12 uniforms minus 6. Exact IEEE
  // arithmetic, no libm, so it keeps the cross-platform bit guarantee.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

// In-place Fisher-Yates shuffle driven by rng.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ca
