#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mstx {

// Deterministic random source. Raw bits come from std::mt19937_64 (the
// engine's output sequence is fixed by the C++ standard, so runs are
// bit-reproducible across platforms at a fixed seed); all distribution
// transforms are implemented here rather than with std:: distributions,
// whose outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates using uniform_int; order depends only on the engine state.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Engine state as text (the standard's serialization of mt19937_64).
  std::string serialize() const;
  void restore(const std::string& state);

  // SplitMix64 finalizer; derives independent stream seeds, e.g. one shuffle
  // seed per (base seed, epoch) pair.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace mstx
