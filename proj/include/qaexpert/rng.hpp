#pragma once

#include <cstdint>
#include <random>

namespace qaexpert {

/**
 * Seeded generator used for every random draw in the library.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. The conversions below are spelled out instead of using the
 * <random> distributions, whose algorithms are implementation-defined, so a
 * seed gives the same numbers on every platform.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, bound) by rejection; bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qaexpert
