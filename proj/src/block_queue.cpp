#include "blockpipe/block_queue.hpp"

#include <algorithm>
#include <string>

#include "blockpipe/errors.hpp"

namespace blockpipe {

void QueueParams::validate() const {
  if (num_b < 1) throw ConfigError("num_b must be >= 1");
  if (num_c < 0 || num_c % 2 != 0) throw ConfigError("num_c must be even and >= 0");
  if (num_c / 2 > num_b) {
    throw ConfigError("num_c/2 must not exceed num_b (context cannot outgrow a block)");
  }
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (block_num < 1) throw ConfigError("block_num must be >= 1");
}

const LatentBlock* QueueState::find(int64_t block_id) const {
  for (const LatentBlock& b : blocks) {
    if (b.block_id == block_id) return &b;
  }
  return nullptr;
}

LatentBlock* QueueState::find(int64_t block_id) {
  for (LatentBlock& b : blocks) {
    if (b.block_id == block_id) return &b;
  }
  return nullptr;
}

void apply_update(QueueState& q, int64_t block_id, Tensor frames) {
  LatentBlock* b = q.find(block_id);
  if (b == nullptr) throw QueueError("update for unknown block " + std::to_string(block_id));
  if (b->level < 1) throw QueueError("block " + std::to_string(block_id) + " already clean");
  b->prev_frames = std::move(b->frames);
  b->frames = std::move(frames);
  b->level -= 1;
  b->updates += 1;
}

QueueState advance(QueueState q, std::optional<LatentBlock> new_block) {
  q.params.validate();
  if (!q.blocks.empty() && q.blocks.front().level == 0) {
    LatentBlock& head = q.blocks.front();
    const int ctx = q.context_frames();
    if (q.params.retain_clean_context && ctx > 0) {
      const int64_t f = head.frame_count();
      RetainedContext r;
      r.source_block_id = head.block_id;
      r.frames = slice_rows(head.frames.reshaped({f, head.frames.numel() / f}), f - ctx, f);
      // slice_rows flattened the per-frame layout; restore [ctx, H, W, C].
      std::vector<int64_t> shape = head.frames.shape;
      shape[0] = ctx;
      r.frames = r.frames.reshaped(shape);
      r.frame_ids.assign(head.frame_ids.end() - ctx, head.frame_ids.end());
      q.retained = std::move(r);
    }
    q.popped_ids.push_back(head.block_id);
    q.blocks.pop_front();
  }
  if (new_block.has_value()) {
    if (q.appended_count >= q.params.block_num) {
      throw QueueError("append after block_num=" + std::to_string(q.params.block_num) +
                       " blocks were already appended");
    }
    new_block->level = q.params.steps;
    new_block->updates = 0;
    q.blocks.push_back(std::move(*new_block));
    q.appended_count += 1;
  }
  if (static_cast<int>(q.blocks.size()) > q.params.steps) {
    throw QueueError("queue exceeded steps=" + std::to_string(q.params.steps));
  }
  return q;
}

std::vector<int64_t> processing_order(const QueueState& q, Order order) {
  std::vector<int64_t> ids;
  ids.reserve(q.blocks.size());
  for (const LatentBlock& b : q.blocks) ids.push_back(b.block_id);
  if (order == Order::kReverse) std::reverse(ids.begin(), ids.end());
  return ids;
}

ExtendedBlock assemble_extended(const QueueState& q, int64_t block_id, Order order) {
  const LatentBlock* center = q.find(block_id);
  if (center == nullptr) {
    throw QueueError("assemble_extended: unknown block " + std::to_string(block_id));
  }
  ExtendedBlock ext;
  ext.center_id = block_id;

  const int ctx = q.context_frames();
  const LatentBlock* earlier = q.find(block_id - 1);
  if (ctx > 0 && earlier != nullptr) {
    // In-queue video-earlier neighbor: use its state at the center's update
    // count. At pipeline assembly time that is its current state; a driver
    // that applies whole rounds atomically sees it as prev_frames.
    const Tensor* src = nullptr;
    if (earlier->updates == center->updates) {
      src = &earlier->frames;
    } else if (earlier->updates == center->updates + 1 && earlier->prev_frames) {
      src = &*earlier->prev_frames;
    } else {
      throw QueueError("context state for block " + std::to_string(block_id) +
                       " unavailable (neighbor updates " +
                       std::to_string(earlier->updates) + ", center " +
                       std::to_string(center->updates) + ")");
    }
    const int64_t f = earlier->frame_count();
    std::vector<int64_t> shape = src->shape;
    shape[0] = ctx;
    ext.explicit_frames =
        slice_rows(src->reshaped({f, src->numel() / f}), f - ctx, f).reshaped(shape);
    ext.explicit_levels.assign(static_cast<size_t>(ctx), center->level);
    ext.explicit_frame_ids.assign(earlier->frame_ids.end() - ctx,
                                  earlier->frame_ids.end());
    ext.source = ExtendedBlock::CtxSource::kInQueue;
    ext.ctx_block_id = block_id - 1;
  } else if (ctx > 0 && q.retained.has_value() &&
             q.retained->source_block_id == block_id - 1) {
    ext.explicit_frames = q.retained->frames;
    ext.explicit_levels.assign(static_cast<size_t>(ctx), 0);
    ext.explicit_frame_ids = q.retained->frame_ids;
    ext.source = ExtendedBlock::CtxSource::kRetained;
    ext.ctx_block_id = block_id - 1;
  }

  // The video-later neighbor's KV is only available after its own pass this
  // round, which reverse order guarantees for every non-tail block.
  if (order == Order::kReverse && ctx > 0 && q.find(block_id + 1) != nullptr) {
    ext.cached_context_id = block_id + 1;
  }
  return ext;
}

bool levels_are_unit_ladder(const QueueState& q) {
  for (size_t i = 1; i < q.blocks.size(); ++i) {
    if (q.blocks[i].level != q.blocks[i - 1].level + 1) return false;
  }
  return true;
}

}  // namespace blockpipe
