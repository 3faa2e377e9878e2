#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace condense {

// SplitMix64 generator. Std distributions are implementation-defined, so all
// randomness (init, shuffling, data synthesis) goes through this to keep runs
// reproducible across toolchains.
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

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  // Box-Muller; the spare value is discarded so the stream position is a pure
  // function of the call count.
  float normal(float mean, float stddev) {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * static_cast<float>(z);
  }

  // Fisher-Yates with this generator, for cross-toolchain determinism.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  // Decorrelated child stream (for per-purpose substreams of one run seed).
  Rng fork(uint64_t stream) {
    return Rng(next_from(state_ ^ (0xa0761d6478bd642fULL * (stream + 1))));
  }

 private:
  static uint64_t next_from(uint64_t s) {
    Rng r(s);
    return r.next_u64();
  }

  uint64_t state_;
};

}  // namespace condense
