#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace lbl {

/// Named independent streams derived from one root seed. Ablation arms that
/// share a seed differ only in the factor being varied.
enum class Stream : std::uint64_t {
  Init = 1,
  BatchOrder = 2,
  Fillers = 3,
  Datagen = 4,
  World = 5,
  Eval = 6,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

/// Portable generator: mt19937_64 engine with hand-rolled bounded integer and
/// normal draws so sequences do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Counter-based derivation: the stream for (seed, name, counter) is a pure
  /// function of its arguments, so a resumed run re-derives the same draws.
  static Rng stream(std::uint64_t seed, Stream name, std::uint64_t counter = 0);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

  template <typename T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lbl
