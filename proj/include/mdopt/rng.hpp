#pragma once

#include <cstdint>
#include <random>

namespace mdopt {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates structured seed tuples.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
  return mix64(mix64(mix64(a) ^ b) ^ c);
}

// One rng stream per (run seed, epoch, worker). Single-machine training is
// worker 0; the PS simulator derives worker streams the same way, which is
// what makes its m=1 path bit-identical to local training.
inline Rng epoch_rng(std::uint64_t seed, std::uint64_t epoch,
                     std::uint64_t worker = 0) {
  return Rng(mix_seed(seed, epoch + 1, worker + 1));
}

}  // namespace mdopt
