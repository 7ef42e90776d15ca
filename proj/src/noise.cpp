#include "blockpipe/noise.hpp"

#include <algorithm>
#include <set>

#include "blockpipe/errors.hpp"

namespace blockpipe {

namespace {

Tensor stack_entries(const NoisePool& pool, const std::vector<int>& ids) {
  std::vector<int64_t> shape = pool.frame_shape;
  shape.insert(shape.begin(), static_cast<int64_t>(ids.size()));
  Tensor out(shape);
  const int64_t per = pool.entries.empty() ? 0 : pool.entries[0].numel();
  for (size_t i = 0; i < ids.size(); ++i) {
    const Tensor& e = pool.entries[static_cast<size_t>(ids[i])];
    std::copy(e.data.begin(), e.data.end(), out.data.begin() + static_cast<int64_t>(i) * per);
  }
  return out;
}

}  // namespace

NoisePool build_pool(int num_b, int num_c, std::vector<int64_t> frame_shape,
                     uint64_t noise_seed) {
  if (num_b < 1) throw ConfigError("num_b must be >= 1");
  if (num_c < 0 || num_c % 2 != 0) throw ConfigError("num_c must be even and >= 0");
  NoisePool pool;
  pool.num_b = num_b;
  pool.num_c = num_c;
  pool.frame_shape = std::move(frame_shape);
  const int m = num_b + num_c / 2;
  RandomSource rs(noise_seed);
  for (int i = 0; i < m; ++i) {
    pool.entries.push_back(rs.normal_tensor(pool.frame_shape));
  }
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (pool.entries[static_cast<size_t>(i)].bitwise_equal(
              pool.entries[static_cast<size_t>(j)])) {
        throw ConfigError("noise pool entries collided; change the noise seed");
      }
    }
  }
  return pool;
}

InitStrategy parse_strategy(const std::string& name) {
  if (name == "coordinated") return InitStrategy::kCoordinated;
  if (name == "complete-shuffle") return InitStrategy::kCompleteShuffle;
  if (name == "subset") return InitStrategy::kSubset;
  if (name == "fresh") return InitStrategy::kFresh;
  if (name == "repeat") return InitStrategy::kRepeat;
  throw ConfigError("unknown noise strategy: " + name);
}

std::string strategy_name(InitStrategy s) {
  switch (s) {
    case InitStrategy::kCoordinated: return "coordinated";
    case InitStrategy::kCompleteShuffle: return "complete-shuffle";
    case InitStrategy::kSubset: return "subset";
    case InitStrategy::kFresh: return "fresh";
    case InitStrategy::kRepeat: return "repeat";
  }
  throw ConfigError("unreachable strategy");
}

NoiseDraw init_first_block(const NoisePool& pool, RandomSource& rng) {
  NoiseDraw d;
  d.noise_ids = rng.permutation(pool.size());
  d.frames = stack_entries(pool, d.noise_ids);
  return d;
}

NoiseDraw init_next_block(const NoisePool& pool, const std::vector<int>& tail_window_ids,
                          RandomSource& rng) {
  const int window = pool.num_c / 2;
  if (static_cast<int>(tail_window_ids.size()) != window) {
    throw QueueError("tail window must hold num_c/2 ids");
  }
  std::set<int> excluded(tail_window_ids.begin(), tail_window_ids.end());
  if (static_cast<int>(excluded.size()) != window) {
    throw QueueError("tail window ids must be distinct");
  }
  for (int id : excluded) {
    if (id < 0 || id >= pool.size()) throw QueueError("tail window id out of pool range");
  }
  std::vector<int> remaining;
  for (int id = 0; id < pool.size(); ++id) {
    if (excluded.count(id) == 0) remaining.push_back(id);
  }
  // remaining has exactly num_b entries by pool sizing; shuffle them.
  const std::vector<int> perm = rng.permutation(static_cast<int>(remaining.size()));
  NoiseDraw d;
  d.noise_ids.reserve(remaining.size());
  for (int p : perm) d.noise_ids.push_back(remaining[static_cast<size_t>(p)]);
  d.frames = stack_entries(pool, d.noise_ids);
  return d;
}

NoiseDraw init_baseline(InitStrategy variant, const NoisePool& pool, RandomSource& rng) {
  NoiseDraw d;
  switch (variant) {
    case InitStrategy::kCompleteShuffle: {
      d.noise_ids = rng.permutation(pool.size());
      d.frames = stack_entries(pool, d.noise_ids);
      return d;
    }
    case InitStrategy::kSubset: {
      const std::vector<int> perm = rng.permutation(pool.size());
      d.noise_ids.assign(perm.begin(), perm.begin() + pool.num_b);
      d.frames = stack_entries(pool, d.noise_ids);
      return d;
    }
    case InitStrategy::kFresh: {
      std::vector<int64_t> shape = pool.frame_shape;
      shape.insert(shape.begin(), pool.num_b);
      d.frames = rng.normal_tensor(shape);
      return d;
    }
    case InitStrategy::kRepeat: {
      d.noise_ids.resize(static_cast<size_t>(pool.size()));
      for (int i = 0; i < pool.size(); ++i) d.noise_ids[static_cast<size_t>(i)] = i;
      d.frames = stack_entries(pool, d.noise_ids);
      return d;
    }
    case InitStrategy::kCoordinated:
      throw ConfigError("coordinated is not a baseline variant");
  }
  throw ConfigError("unreachable variant");
}

NoiseDraw draw_first_block(InitStrategy s, const NoisePool& pool, RandomSource& rng) {
  switch (s) {
    case InitStrategy::kCoordinated:
    case InitStrategy::kCompleteShuffle:
    case InitStrategy::kSubset:
      return init_first_block(pool, rng);
    case InitStrategy::kRepeat:
      return init_baseline(InitStrategy::kRepeat, pool, rng);
    case InitStrategy::kFresh: {
      NoiseDraw d;
      std::vector<int64_t> shape = pool.frame_shape;
      shape.insert(shape.begin(), pool.size());
      d.frames = rng.normal_tensor(shape);
      return d;
    }
  }
  throw ConfigError("unreachable strategy");
}

NoiseDraw draw_next_block(InitStrategy s, const NoisePool& pool,
                          const std::vector<int>& tail_window_ids, RandomSource& rng) {
  switch (s) {
    case InitStrategy::kCoordinated:
      return init_next_block(pool, tail_window_ids, rng);
    case InitStrategy::kCompleteShuffle: {
      const std::vector<int> perm = rng.permutation(pool.size());
      NoiseDraw d;
      d.noise_ids.assign(perm.begin(), perm.begin() + pool.num_b);
      d.frames = stack_entries(pool, d.noise_ids);
      return d;
    }
    case InitStrategy::kSubset:
      return init_baseline(InitStrategy::kSubset, pool, rng);
    case InitStrategy::kFresh:
      return init_baseline(InitStrategy::kFresh, pool, rng);
    case InitStrategy::kRepeat: {
      NoiseDraw d;
      for (int i = pool.size() - pool.num_b; i < pool.size(); ++i) d.noise_ids.push_back(i);
      d.frames = stack_entries(pool, d.noise_ids);
      return d;
    }
  }
  throw ConfigError("unreachable strategy");
}

}  // namespace blockpipe
