#ifndef BLOCKPIPE_BLOCK_QUEUE_HPP_
#define BLOCKPIPE_BLOCK_QUEUE_HPP_

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "blockpipe/tensor.hpp"

namespace blockpipe {

enum class Order { kReverse, kSequential };

// One frame block in the queue. frames holds f = num_b frame latents
// ([f, H, W, C]); the first block carries num_b + num_c/2 frames, its own
// built-in head context. noise_ids records which pool entry seeded each
// frame (empty only for the pool-free "fresh" strategy).
//
// Blocks also keep their previous state (the frames before the most recent
// update) because a neighbor's pass in flight reads the state that was
// current when that pass could have been assembled: one update older than
// the neighbor's own latest. See ExtendedBlock.
struct LatentBlock {
  int64_t block_id = 0;          // 1-based append index, video-temporal order
  Tensor frames;                 // current state [f, H, W, C]
  std::optional<Tensor> prev_frames;  // state before the last update
  int level = 0;                 // current noise level, T..0
  int updates = 0;               // completed denoise passes
  std::vector<int> noise_ids;
  std::vector<int64_t> frame_ids;  // global frame indices, assigned at append

  int64_t frame_count() const { return frames.rows() == 0 ? 0 : frames.shape[0]; }
};

struct QueueParams {
  int num_b = 2;
  int num_c = 4;      // even; num_c/2 context frames per side
  int steps = 8;      // T
  int block_num = 6;  // total blocks to generate
  bool retain_clean_context = true;  // popped block's tail frames feed the new head
  void validate() const;
};

// Tail frames of the most recently popped block, kept as clean explicit
// context for the current head block.
struct RetainedContext {
  int64_t source_block_id = 0;
  Tensor frames;                    // [num_c/2, H, W, C], level 0
  std::vector<int64_t> frame_ids;
};

// FIFO queue of latent blocks, noise levels strictly increasing head->tail
// with unit gaps. One advance per diffusion round: pop the clean head,
// append a fresh noisy block while appends remain.
struct QueueState {
  QueueParams params;
  std::deque<LatentBlock> blocks;   // head first
  int64_t appended_count = 0;
  std::optional<RetainedContext> retained;
  std::vector<int64_t> popped_ids;  // emission order

  const LatentBlock* find(int64_t block_id) const;
  LatentBlock* find(int64_t block_id);
  int context_frames() const { return params.num_c / 2; }
};

// Explicit context + cache pointer for one block's denoise pass.
// explicit_frames are the nearest num_c/2 frames of the video-earlier
// neighbor: the in-queue neighbor's state at the same update count as the
// center (its latest state is one pass ahead and is never visible to a
// pipelined pass), or the retained clean tail after that neighbor popped.
struct ExtendedBlock {
  enum class CtxSource { kNone, kInQueue, kRetained };

  int64_t center_id = 0;
  CtxSource source = CtxSource::kNone;
  int64_t ctx_block_id = 0;               // source block when source != kNone
  Tensor explicit_frames;                 // [k, H, W, C], k <= num_c/2 (may be empty)
  std::vector<int> explicit_levels;       // per context frame
  std::vector<int64_t> explicit_frame_ids;
  std::optional<int64_t> cached_context_id;  // video-later neighbor, reverse order only
};

// Applies a completed denoise pass: prev <- current, current <- frames,
// level -= 1, updates += 1.
void apply_update(QueueState& q, int64_t block_id, Tensor frames);

// End-of-round transition. Pops the head if it reached level 0 (retaining
// its clean tail frames and recording the emission) and appends new_block at
// level T if provided. Appending past block_num is a queue error. Pure:
// same input state, same output state.
QueueState advance(QueueState q, std::optional<LatentBlock> new_block);

// Tail-first (reverse, descending level) or head-first (sequential) ids.
std::vector<int64_t> processing_order(const QueueState& q, Order order);

// Builds the extended view of one in-queue block for this round's pass.
ExtendedBlock assemble_extended(const QueueState& q, int64_t block_id, Order order);

// Checks the level ladder: strictly increasing head->tail with unit gaps.
bool levels_are_unit_ladder(const QueueState& q);

}  // namespace blockpipe

#endif  // BLOCKPIPE_BLOCK_QUEUE_HPP_
