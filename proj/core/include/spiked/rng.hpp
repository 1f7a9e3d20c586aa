#pragma once

// Philox4x32-10 counter-based generator. Every draw is a
// pure function of (seed, stream, counter), so results do not depend on the
// order in which entries are generated or on the platform's <random>.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace spiked {

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  static Block generate(std::uint64_t seed, const Block& counter) noexcept {
    std::uint32_t k0 = static_cast<std::uint32_t>(seed);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
    Block c = counter;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
      k0 += kW0;
      k1 += kW1;
    }
    return c;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

// Uniform in the open interval (0, 1) from the top 53 bits.
inline double to_unit_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal addressed by (seed, stream, index); one Box-Muller draw per
// counter block.
inline double normal_at(std::uint64_t seed, std::uint32_t stream, std::uint64_t index) noexcept {
  const auto out = Philox4x32::generate(
      seed, {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream, 0u});
  const std::uint64_t a = (std::uint64_t{out[0]} << 32) | out[1];
  const std::uint64_t b = (std::uint64_t{out[2]} << 32) | out[3];
  const double u1 = to_unit_open(a);
  const double u2 = to_unit_open(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// SplitMix64 finalizer, used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t child) noexcept {
  return mix_seed(seed ^ mix_seed(child + 0x632BE59BD9B4E019ull));
}

// Sequential stream over the counter space of one (seed, stream) pair.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint32_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() noexcept {
    const auto out = Philox4x32::generate(
        seed_, {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                stream_, 1u});
    ++counter_;
    return (std::uint64_t{out[0]} << 32) | out[1];
  }

  double uniform() noexcept { return to_unit_open(next_u64()); }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace spiked
