#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace semiipc {

// splitmix64 finalizer; derives independent stream seeds from one user seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Portable seeded generator. std::mt19937_64 output is fixed by the standard,
// but the std distributions are not, so every derived draw is implemented
// here and produces the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n);

  // Standard normal via Box-Muller; draws come in pairs, the second is cached.
  double normal();

  // Fisher-Yates, from the back.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace semiipc
