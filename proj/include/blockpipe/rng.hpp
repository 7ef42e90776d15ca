#ifndef BLOCKPIPE_RNG_HPP_
#define BLOCKPIPE_RNG_HPP_

#include <cstdint>
#include <initializer_list>

#include "blockpipe/tensor.hpp"

namespace blockpipe {

// Deterministic random source: splitmix64 for uniforms, Box-Muller for
// normals. The stream is a pure function of the 64-bit state, so a given
// seed yields one canonical sequence regardless of process, thread or
// worker placement. Single-owner: never share an instance across workers.
//
// Canonical definitions (normative, so any language can replay the stream):
//   next_u64:    state += 0x9E3779B97F4A7C15
//                z = state
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                return z ^ (z >> 31)
//   next_uniform: (next_u64() >> 11) * 2^-53, in [0, 1)
//   next_normal:  consumes exactly two raw draws a, b:
//                u1 = ((a >> 11) + 1) * 2^-53   in (0, 1]
//                u2 = (b >> 11) * 2^-53         in [0, 1)
//                return sqrt(-2 ln u1) * cos(2 pi u2)
// No spare value is cached, so k draws followed by k more equals 2k draws.
struct RandomSource {
  uint64_t state;

  explicit RandomSource(uint64_t seed) : state(seed) {}

  uint64_t next_u64();
  double next_uniform();
  double next_normal();

  // Uniform integer in [0, n). Uses next_u64() % n; the modulo bias is
  // irrelevant here (n is tiny next to 2^64) and the result is exactly
  // reproducible, which is what matters.
  uint64_t next_below(uint64_t n);

  // Fills a tensor of the given shape with next_normal() * sigma, row-major.
  Tensor normal_tensor(std::vector<int64_t> shape, double sigma = 1.0);

  // In-place Fisher-Yates over [0, n) driven by next_below.
  std::vector<int> permutation(int n);
};

// Stream derivation: stretches one master seed into independent substreams
// keyed by a tag path, e.g. (layer, role). Pure and order-sensitive.
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags);

}  // namespace blockpipe

#endif  // BLOCKPIPE_RNG_HPP_
