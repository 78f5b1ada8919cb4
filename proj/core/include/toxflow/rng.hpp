#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace toxflow {

// Deterministic random source. mt19937_64 output is pinned by the standard,
// but the std:: distributions are not, so every transform here is hand-rolled
// from raw 64-bit draws to keep generated tapes byte-identical across
// platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0, 1); never returns 0 so log() is safe.
  double uniform01() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  // Box-Muller without the cached spare: two uniforms per call, so the draw
  // sequence is a pure function of the call count.
  double normal() {
    const double u = uniform01();
    const double v = uniform01();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586477 * v);
  }

  double lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * normal());
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive independent substream seeds from
// (seed, stream id, day) without correlating the streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1) +
                    0xbf58476d1ce4e5b9ULL * (c + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Fisher-Yates with our own bounded draw (std::shuffle is not reproducible
// across standard libraries).
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_int(i)]);
  }
}

}  // namespace toxflow
