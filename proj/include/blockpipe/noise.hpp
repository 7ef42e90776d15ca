#ifndef BLOCKPIPE_NOISE_HPP_
#define BLOCKPIPE_NOISE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "blockpipe/rng.hpp"
#include "blockpipe/tensor.hpp"

namespace blockpipe {

// Shared pool of M = num_b + num_c/2 Gaussian frame latents, drawn once and
// immutable. Coordinated initialization draws every block from this pool so
// the whole generation reuses one noise space without repeating noise inside
// any concatenated pair of blocks.
struct NoisePool {
  int num_b = 0;
  int num_c = 0;
  std::vector<int64_t> frame_shape;  // [H, W, C]
  std::vector<Tensor> entries;       // M frames, ids 0..M-1

  int size() const { return static_cast<int>(entries.size()); }
};

NoisePool build_pool(int num_b, int num_c, std::vector<int64_t> frame_shape,
                     uint64_t noise_seed);

enum class InitStrategy {
  kCoordinated,      // pool minus the tail window, shuffled
  kCompleteShuffle,  // full pool, fresh shuffle every block
  kSubset,           // random num_b-subset, repeats across blocks allowed
  kFresh,            // fresh Gaussians, pool ignored
  kRepeat,           // the same fixed pool order every block
};

InitStrategy parse_strategy(const std::string& name);
std::string strategy_name(InitStrategy s);

struct NoiseDraw {
  Tensor frames;               // [f, H, W, C]
  std::vector<int> noise_ids;  // pool ids per frame; empty for kFresh
};

// First block: all M pool entries exactly once, in a seeded permutation.
NoiseDraw init_first_block(const NoisePool& pool, RandomSource& rng);

// Appended block: a seeded permutation of the pool minus the tail block's
// last num_c/2 ids; exactly num_b frames. Duplicate exclusions are an
// invariant violation.
NoiseDraw init_next_block(const NoisePool& pool, const std::vector<int>& tail_window_ids,
                          RandomSource& rng);

// Baseline strategies, standalone form (noise-demo and tests):
//   complete-shuffle -> full pool permuted (M frames)
//   subset           -> num_b ids without replacement (per call)
//   fresh            -> num_b fresh Gaussians, no ids
//   repeat           -> full pool in the fixed identity order (M frames)
NoiseDraw init_baseline(InitStrategy variant, const NoisePool& pool, RandomSource& rng);

// Queue-integrated draws used by the engine: the first block consumes
// num_b + num_c/2 frames, every later block num_b frames. Coordinated
// excludes tail_window_ids; the baselines ignore them. The repeat strategy
// appends the last num_b ids of the fixed order, which keeps its trademark
// overlap with the tail window on every append.
NoiseDraw draw_first_block(InitStrategy s, const NoisePool& pool, RandomSource& rng);
NoiseDraw draw_next_block(InitStrategy s, const NoisePool& pool,
                          const std::vector<int>& tail_window_ids, RandomSource& rng);

}  // namespace blockpipe

#endif  // BLOCKPIPE_NOISE_HPP_
