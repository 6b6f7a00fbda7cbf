#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "artic/core/tensor.hpp"

namespace artic {

/// Seeded random stream. Uniform/normal/int draws are built directly on the
/// mt19937_64 output so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  real uniform() {
    return static_cast<real>(next_u64() >> 11) * 0x1.0p-53;
  }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  real normal() {
    real u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const real u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n), n > 0. Rejection sampling keeps it unbiased.
  int uniform_int(int n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return static_cast<int>(r % un);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
  }

  void fill_normal(Tensor& t, real mean, real stddev) {
    real* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = mean + stddev * normal();
  }

  void fill_uniform(Tensor& t, real lo, real hi) {
    real* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = uniform(lo, hi);
  }

  /// Independent child stream; distinct tags give unrelated sequences.
  Rng fork(std::uint64_t tag) {
    return Rng(mix_(next_u64() ^ mix_(tag)));
  }

  /// Deterministic stream keyed by (seed, tag) without consuming this stream.
  static Rng keyed(std::uint64_t seed, std::uint64_t tag) {
    return Rng(mix_(mix_(seed) ^ mix_(tag ^ 0x9e3779b97f4a7c15ull)));
  }

  static std::uint64_t hash_tag(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  static std::uint64_t mix_(std::uint64_t x) {  // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace artic
