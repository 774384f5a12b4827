#pragma once

// Seeded random streams.
//
// Algorithm identity (kept stable so runs are bit-reproducible):
//   stream seed = splitmix64(seed ^ fnv1a64(label))
//   engine      = std::mt19937_64 seeded with the stream seed
//   uniform     = top 53 bits of one engine draw, scaled to [0, 1)
//   normal      = Marsaglia polar method on two uniforms, second value cached
// The standard-library distributions are not used because their algorithms
// are implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "nashprox/core.hpp"

namespace nashprox {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Inverse-CDF draw; the last index absorbs rounding slack.
  std::size_t categorical(std::span<const double> probs) {
    if (probs.empty()) throw ArgumentError("categorical: empty distribution");
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Independent named stream derived from an experiment seed.
inline Rng rng_split(std::uint64_t seed, std::string_view stream_label) {
  return Rng(splitmix64(seed ^ fnv1a64(stream_label)));
}

}  // namespace nashprox
