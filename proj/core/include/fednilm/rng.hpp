#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace fednilm {

// splitmix64 finalizer; the building block for all seed derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e9b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ull + b));
}

// Batch-order seed for client `client_id` at federation round `round`.
// The same rule runs on both the in-process engine and networked clients so
// the two modes stay bit-identical.
constexpr std::uint64_t derive_round_seed(std::uint64_t run_seed,
                                          std::uint64_t client_id,
                                          std::uint64_t round) {
  return mix_seed(mix_seed(run_seed, client_id), round);
}

// Deterministic RNG wrapper. mt19937_64 output is fully specified by the
// standard; the float conversions below avoid std::uniform_real_distribution,
// whose draw sequence is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [-a, a).
  double next_symmetric(double a) { return a * (2.0 * next_unit() - 1.0); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at our n.
  std::uint64_t next_below(std::uint64_t n) { return engine_() % n; }

  // Standard normal via Box-Muller; deterministic given the seed.
  double next_gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates over an index vector.
  void shuffle(std::vector<std::size_t>& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(idx[i - 1], idx[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fednilm
