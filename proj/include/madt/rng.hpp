#pragma once
// Deterministic RNG with explicitly implemented distributions.
//
// std:: distributions are implementation-defined, so uniform/normal draws are
// realized here from raw mt19937_64 bits. Substreams are derived with
// splitmix64 so independent consumers (sampler, init, data gen, per-step
// streams) never share state.
#include <cstdint>
#include <random>
#include <string>

namespace madt {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t bits() { return gen_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection.
  int64_t below(int64_t n) {
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t r;
    do {
      r = bits();
    } while (r >= limit);
    return static_cast<int64_t>(r % un);
  }

  bool coin() { return (bits() & 1u) != 0; }

  // Box-Muller; the second variate of the pair is discarded to keep the
  // stream state independent of call parity.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Derived stream: deterministic function of (this stream's seed path, tag).
  Rng substream(uint64_t tag) const {
    std::mt19937_64 probe = gen_;
    return Rng(splitmix64(probe() ^ splitmix64(tag)));
  }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

inline Rng subseeded(uint64_t seed, uint64_t tag) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(tag)));
}

}  // namespace madt
