#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace safedom {

// Deterministic splitmix64 generator. Every stochastic component in the
// toolkit pulls from a stream forked off one user seed, so results are
// reproducible on a machine independent of standard-library RNG details.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  float uniform_f(float lo, float hi) {
    return static_cast<float>(uniform(lo, hi));
  }

  // Standard normal via Box-Muller (second draw cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    have_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  // Uniform index in [0, n). Modulo bias is negligible for any n we use.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[index(v.size())];
  }

  // Independent substream keyed by a tag; forking never disturbs this
  // generator's own sequence.
  Rng fork(std::uint64_t stream) const { return Rng(derive(state_, stream)); }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng mixer(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    mixer.next_u64();
    return mixer.next_u64();
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream tags for Rng::fork, one per stochastic subsystem.
namespace rng_stream {
inline constexpr std::uint64_t kWeightInit = 1;
inline constexpr std::uint64_t kDataShuffle = 2;
inline constexpr std::uint64_t kDomainShuffle = 3;
inline constexpr std::uint64_t kAttack = 4;
inline constexpr std::uint64_t kWorldSampler = 5;
inline constexpr std::uint64_t kNoise = 6;
}  // namespace rng_stream

}  // namespace safedom
