#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dtvit/common.hpp"

namespace dtvit {

// splitmix64: tiny seedable generator, identical output on every platform.
// Streams for different purposes are derived with derive(), so e.g. toggling
// augmentation never perturbs the weight-init draws.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * next_double(); }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) {
    check(n > 0, "next_below: n must be positive");
    // rejection sampling to avoid modulo bias
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // standard normal via Box-Muller (two draws per sample, no cache)
  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // normal(0, std) truncated to +-clip*std by rejection
  double trunc_normal(double stddev, double clip = 2.0) {
    for (;;) {
      double z = normal();
      if (std::fabs(z) <= clip) return z * stddev;
    }
  }

  // independent child stream
  Rng derive(uint64_t salt) const {
    Rng r(state_ ^ (0xD1B54A32D192ED03ULL * (salt + 1)));
    r.next_u64();
    return r;
  }

  Rng derive(const std::string& tag) const {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : tag) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return derive(h);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace dtvit
