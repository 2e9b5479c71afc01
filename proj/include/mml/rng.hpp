#pragma once

#include <cstdint>
#include <sstream>
#include <string>

#include "mml/core.hpp"

namespace mml {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. All distributions are implemented on top of
// the raw 64-bit output so sequences are reproducible across platforms and
// standard-library versions; every stochastic component owns one stream.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    // splitmix64 expansion of the seed into the xoshiro256++ state.
    uint64_t x = seed;
    for (auto& s : state_) {
      x = splitmix64(x);
      s = x;
    }
  }

  // Derive an independent stream; (seed, stream_id) pairs never collide in
  // practice thanks to the splitmix64 avalanche.
  Rng spawn(uint64_t stream_id) const {
    return Rng(splitmix64(state_[0] ^ splitmix64(stream_id + 0x5851f42d4c957f2dULL)));
  }

  uint64_t next_u64() {
    // xoshiro256++
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] inclusive (unbiased by rejection).
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = uint64_t(hi - lo) + 1;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + int64_t(x % span);
  }

  // Standard normal via Box-Muller; two uniforms per draw, no cached spare,
  // so the consumption pattern is stable.
  double normal() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  VecX normal_vec(int n) {
    VecX v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << state_[0] << " " << state_[1] << " " << state_[2] << " " << state_[3];
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    if (!(is >> state_[0] >> state_[1] >> state_[2] >> state_[3]))
      throw ParseError("Rng::deserialize: malformed state string");
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[4];
};

}  // namespace mml
