#include <map>
#include <set>
#include <vector>

#include <doctest.h>

#include "blockpipe/block_queue.hpp"
#include "blockpipe/errors.hpp"

using namespace blockpipe;

namespace {

QueueParams params(int num_b, int num_c, int steps, int block_num) {
  QueueParams p;
  p.num_b = num_b;
  p.num_c = num_c;
  p.steps = steps;
  p.block_num = block_num;
  return p;
}

Tensor frames_for(int64_t block_id, int64_t count) {
  Tensor t({count, 1, 1, 1});
  for (int64_t i = 0; i < count; ++i) t.data[static_cast<size_t>(i)] = 100.0 * block_id + i;
  return t;
}

LatentBlock make_block(const QueueParams& p, int64_t id, int64_t* next_frame) {
  LatentBlock b;
  b.block_id = id;
  const int64_t f = id == 1 ? p.num_b + p.num_c / 2 : p.num_b;
  b.frames = frames_for(id, f);
  for (int64_t i = 0; i < f; ++i) {
    b.noise_ids.push_back(static_cast<int>(i));
    b.frame_ids.push_back((*next_frame)++);
  }
  return b;
}

// Round-atomic driver: assemble everything, then apply the whole round, then
// advance. Returns emitted block ids in pop order.
struct SimResult {
  std::vector<int64_t> emitted;
  std::map<int64_t, int> passes;
};

SimResult run_rounds(const QueueParams& p, Order order) {
  SimResult out;
  QueueState q;
  q.params = p;
  int64_t next_frame = 0;
  int64_t next_block = 1;
  const int64_t rounds = p.steps + p.block_num - 1;
  for (int64_t r = 1; r <= rounds + 1; ++r) {
    std::optional<LatentBlock> nb;
    if (r <= rounds && next_block <= p.block_num) nb = make_block(p, next_block++, &next_frame);
    if (!q.blocks.empty() && q.blocks.front().level == 0) {
      out.emitted.push_back(q.blocks.front().block_id);
    }
    q = advance(std::move(q), std::move(nb));
    if (r > rounds) break;
    REQUIRE(levels_are_unit_ladder(q));
    REQUIRE(static_cast<int>(q.blocks.size()) <= p.steps);
    for (int64_t id : processing_order(q, order)) {
      (void)assemble_extended(q, id, order);
    }
    std::vector<std::pair<int64_t, Tensor>> updates;
    for (const LatentBlock& b : q.blocks) {
      updates.emplace_back(b.block_id, frames_for(b.block_id, b.frame_count()));
    }
    for (auto& [id, frames] : updates) {
      apply_update(q, id, std::move(frames));
      out.passes[id] += 1;
    }
  }
  REQUIRE(q.blocks.empty());
  return out;
}

}  // namespace

TEST_CASE("warm-up starts with a single block at level T") {
  QueueParams p = params(2, 4, 3, 4);
  QueueState q;
  q.params = p;
  int64_t nf = 0;
  q = advance(std::move(q), make_block(p, 1, &nf));
  REQUIRE(q.blocks.size() == 1);
  CHECK(q.blocks[0].level == 3);
  CHECK(q.blocks[0].frame_count() == 4);  // num_b + num_c/2
}

TEST_CASE("steady advance pops the clean head and appends at T") {
  QueueParams p = params(2, 2, 3, 4);
  QueueState q;
  q.params = p;
  int64_t nf = 0;
  int64_t next_block = 1;
  // Three warm-up rounds: queue reaches levels [1,2,3] head->tail.
  for (int r = 1; r <= 3; ++r) {
    q = advance(std::move(q), make_block(p, next_block++, &nf));
    for (const LatentBlock& b : q.blocks) (void)b;
    std::vector<int64_t> ids = processing_order(q, Order::kSequential);
    for (int64_t id : ids) apply_update(q, id, frames_for(id, q.find(id)->frame_count()));
  }
  REQUIRE(q.blocks.size() == 3);
  CHECK(q.blocks[0].level == 0);
  CHECK(q.blocks[1].level == 1);
  CHECK(q.blocks[2].level == 2);

  q = advance(std::move(q), make_block(p, next_block++, &nf));
  REQUIRE(q.blocks.size() == 3);
  CHECK(q.blocks[0].block_id == 2);
  CHECK(q.blocks[0].level == 1);
  CHECK(q.blocks[2].level == 3);
  CHECK(q.popped_ids == std::vector<int64_t>{1});
  REQUIRE(q.retained.has_value());
  CHECK(q.retained->source_block_id == 1);
  CHECK(q.retained->frames.shape[0] == 1);  // num_c/2
}

TEST_CASE("cool-down pops without appending") {
  QueueParams p = params(2, 2, 4, 2);
  QueueState q;
  q.params = p;
  int64_t nf = 0;
  q = advance(std::move(q), make_block(p, 1, &nf));
  q = advance(std::move(q), make_block(p, 2, &nf));
  CHECK_THROWS_AS(advance(QueueState(q), make_block(p, 3, &nf)), QueueError);
  // Drive block 1 to level 0.
  for (int r = 0; r < 4; ++r) {
    for (int64_t id : processing_order(q, Order::kSequential)) {
      apply_update(q, id, frames_for(id, q.find(id)->frame_count()));
    }
    if (r < 3) q = advance(std::move(q), std::nullopt);
  }
  CHECK(q.blocks.front().level == 0);
  q = advance(std::move(q), std::nullopt);
  REQUIRE(q.blocks.size() == 1);
  CHECK(q.blocks[0].block_id == 2);
}

TEST_CASE("processing order per spec examples") {
  QueueParams p = params(2, 2, 3, 3);
  QueueState q;
  q.params = p;
  int64_t nf = 0;
  q = advance(std::move(q), make_block(p, 1, &nf));
  for (int64_t id : processing_order(q, Order::kReverse)) {
    apply_update(q, id, frames_for(id, q.find(id)->frame_count()));
  }
  q = advance(std::move(q), make_block(p, 2, &nf));
  for (int64_t id : processing_order(q, Order::kReverse)) {
    apply_update(q, id, frames_for(id, q.find(id)->frame_count()));
  }
  q = advance(std::move(q), make_block(p, 3, &nf));
  // Levels head->tail are [1,2,3]; reverse = tail first.
  CHECK(processing_order(q, Order::kReverse) == std::vector<int64_t>{3, 2, 1});
  CHECK(processing_order(q, Order::kSequential) == std::vector<int64_t>{1, 2, 3});

  QueueState single;
  single.params = p;
  int64_t nf2 = 100;
  single = advance(std::move(single), make_block(p, 1, &nf2));
  CHECK(processing_order(single, Order::kReverse) == std::vector<int64_t>{1});
  CHECK(processing_order(single, Order::kSequential) == std::vector<int64_t>{1});
}

TEST_CASE("assemble_extended boundaries") {
  QueueParams p = params(2, 4, 3, 3);  // num_c/2 = 2
  QueueState q;
  q.params = p;
  int64_t nf = 0;
  int64_t next_block = 1;
  for (int r = 1; r <= 3; ++r) {
    q = advance(std::move(q), make_block(p, next_block++, &nf));
    if (r == 3) break;
    for (int64_t id : processing_order(q, Order::kReverse)) {
      apply_update(q, id, frames_for(id, q.find(id)->frame_count()));
    }
  }
  REQUIRE(q.blocks.size() == 3);

  // Tail block: nothing noisier exists, no cached context.
  ExtendedBlock tail = assemble_extended(q, 3, Order::kReverse);
  CHECK(!tail.cached_context_id.has_value());
  CHECK(tail.source == ExtendedBlock::CtxSource::kInQueue);

  // Interior block: explicit context from the video-earlier neighbor's tail
  // frames, cache standing in for the video-later neighbor.
  ExtendedBlock mid = assemble_extended(q, 2, Order::kReverse);
  REQUIRE(mid.cached_context_id.has_value());
  CHECK(*mid.cached_context_id == 3);
  CHECK(mid.source == ExtendedBlock::CtxSource::kInQueue);
  CHECK(mid.explicit_frames.shape[0] == 2);
  // Block 1 has 4 frames (ids 0..3); its last two are the context.
  CHECK(mid.explicit_frame_ids == std::vector<int64_t>{2, 3});

  // First-ever block: no explicit context, surplus frames already inside.
  ExtendedBlock head = assemble_extended(q, 1, Order::kReverse);
  CHECK(head.source == ExtendedBlock::CtxSource::kNone);
  CHECK(head.explicit_frames.numel() == 0);
  REQUIRE(head.cached_context_id.has_value());
  CHECK(*head.cached_context_id == 2);

  // Sequential order never has a cached neighbor.
  ExtendedBlock seq = assemble_extended(q, 2, Order::kSequential);
  CHECK(!seq.cached_context_id.has_value());

  CHECK_THROWS_AS(assemble_extended(q, 99, Order::kReverse), QueueError);
}

TEST_CASE("context uses the neighbor state matching the center's updates") {
  QueueParams p = params(2, 2, 4, 3);
  QueueState q;
  q.params = p;
  int64_t nf = 0;
  q = advance(std::move(q), make_block(p, 1, &nf));
  apply_update(q, 1, frames_for(10, 3));  // round 1: block 1 only
  q = advance(std::move(q), make_block(p, 2, &nf));

  // Round 2 before any updates: block 2 (updates 0) must see block 1's
  // initial frames (prev state), not its once-denoised state.
  ExtendedBlock ext = assemble_extended(q, 2, Order::kReverse);
  REQUIRE(ext.explicit_frames.shape[0] == 1);
  CHECK(ext.explicit_frames.data[0] == 100.0 * 1 + 2);  // initial frames_for(1)[2]
  CHECK(ext.explicit_levels == std::vector<int>{4});

  // One update in: the neighbor's current state is the matching one.
  apply_update(q, 2, frames_for(20, 2));
  ExtendedBlock ext2 = assemble_extended(q, 2, Order::kReverse);
  CHECK(ext2.explicit_frames.data[0] == 100.0 * 10 + 2);

  // Two updates ahead of the neighbor: no matching state exists.
  apply_update(q, 2, frames_for(21, 2));
  CHECK_THROWS_AS(assemble_extended(q, 2, Order::kReverse), QueueError);
}

TEST_CASE("full lifecycle: ladder, conservation, FIFO emission") {
  for (Order order : {Order::kReverse, Order::kSequential}) {
    QueueParams p = params(2, 4, 4, 6);
    SimResult sim = run_rounds(p, order);
    CHECK(sim.emitted == std::vector<int64_t>{1, 2, 3, 4, 5, 6});
    for (const auto& [id, passes] : sim.passes) CHECK(passes == p.steps);
    CHECK(sim.passes.size() == 6);
  }
}

TEST_CASE("retained context can be disabled") {
  QueueParams p = params(2, 2, 2, 3);
  p.retain_clean_context = false;
  SimResult sim = run_rounds(p, Order::kReverse);
  CHECK(sim.emitted.size() == 3);
}
