#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace avloc {

/// Deterministic random stream. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; every conversion to doubles and ranges
/// is done here so results do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Independent stream keyed by (seed, a, b): used for per-instance,
  /// per-epoch and per-batch streams.
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double draw_uniform();
  double draw_uniform(double lo, double hi) { return lo + (hi - lo) * draw_uniform(); }
  /// Standard normal via Box-Muller.
  double draw_normal();
  /// Uniform integer in [0, n); n must be positive.
  std::size_t draw_index(std::size_t n);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = draw_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  /// m distinct indices from [0, n) in selection order. Throws ConfigError if m > n.
  std::vector<std::size_t> choose_without_replacement(std::size_t n, std::size_t m);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer, exposed for tests.
std::uint64_t mix64(std::uint64_t x);

}  // namespace avloc
