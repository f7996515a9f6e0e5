#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace joytts {

// Deterministic splitmix64 stream. One uint64 of state so it serializes
// into checkpoints trivially; no global RNG anywhere in the project.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one draw per call (the second root is discarded so the
  // state stays a single u64).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

// FNV-1a over a label, for deriving independent substreams from one seed.
inline uint64_t hash_label(std::string_view label) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline Rng substream(uint64_t seed, std::string_view label, uint64_t index = 0) {
  Rng mix(seed ^ hash_label(label));
  uint64_t a = mix.next_u64();
  Rng mix2(a ^ (index * 0x9e3779b97f4a7c15ULL));
  return Rng(mix2.next_u64());
}

}  // namespace joytts
