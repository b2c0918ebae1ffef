#pragma once

#include <cmath>
#include <cstdint>

#include "deeplle/check.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle {

// splitmix64 stream. Self-contained so sequences are bit-identical across
// compilers and standard libraries, which the determinism contracts need.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller, second draw cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Deterministic sub-stream seeds: one base seed, labelled consumers.
inline uint64_t derive_seed(uint64_t base, uint64_t salt) {
  Rng r(base ^ (0x517cc1b727220a95ULL + salt * 0x2545f4914f6cdd1dULL));
  return r.next_u64();
}

// Zero-mean normal draws with variance 2/fan_in.
template <typename T>
Tensor<T> he_init(Shape shape, int64_t fan_in, uint64_t seed) {
  DLLE_CHECK(fan_in > 0, "he_init: fan_in must be positive, got ", fan_in);
  Tensor<T> out(std::move(shape));
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = static_cast<T>(stddev * rng.normal());
  return out;
}

// Same draw sequence, but driven by an existing stream (parameter init order).
template <typename T>
Tensor<T> he_init(Shape shape, int64_t fan_in, Rng& rng) {
  DLLE_CHECK(fan_in > 0, "he_init: fan_in must be positive, got ", fan_in);
  Tensor<T> out(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = static_cast<T>(stddev * rng.normal());
  return out;
}

}  // namespace deeplle
