#pragma once

#include <cmath>
#include <cstdint>

namespace kd::rng {

// Counter-based generator: every draw is a hash of (seed, stream, counter),
// so subsystems get independent streams from one user-facing 64-bit seed and
// replay identically regardless of interleaving.
//
// Stream assignment:
//   0  Fourier frequency draws (features)
//   1  sample_discretize (reduce)
//   2  coreset sampling (coreset)
//   3  bench instance generation
//   4  CLI fixture generation
//   16+ reserved for tests
struct Stream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t ctr = 0;

  Stream() = default;
  Stream(std::uint64_t seed_, std::uint64_t stream_) : seed(seed_), stream(stream_) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    std::uint64_t z = mix(seed + 0x9E3779B97F4A7C15ull * stream);
    z = mix(z + ctr++);
    return z;
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe for log().
  double next_double_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. One uniform pair per two normals.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double_open();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Index in [0, n) without modulo bias (Lemire).
  std::uint64_t next_index(std::uint64_t n) {
    while (true) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

private:
  double spare_ = 0.0;
  bool have_spare_ = false;
};

namespace streams {
inline constexpr std::uint64_t fourier = 0;
inline constexpr std::uint64_t discretize = 1;
inline constexpr std::uint64_t coreset = 2;
inline constexpr std::uint64_t bench = 3;
inline constexpr std::uint64_t fixtures = 4;
inline constexpr std::uint64_t tests = 16;
}  // namespace streams

}  // namespace kd::rng
