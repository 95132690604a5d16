#pragma once

#include <cstdint>
#include <random>

namespace planarm {

// splitmix64 step; used to derive independent seeds from a master seed so
// that experiment cells stay reproducible regardless of execution order.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

inline double gaussian(std::mt19937_64& rng, double std_dev) {
  if (std_dev <= 0.0) return 0.0;
  std::normal_distribution<double> dist(0.0, std_dev);
  return dist(rng);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

}  // namespace planarm
