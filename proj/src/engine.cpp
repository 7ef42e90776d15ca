#include "blockpipe/engine.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <tuple>
#include <utility>

#include "blockpipe/errors.hpp"

namespace blockpipe {

namespace {

// Everything that travels down the device chain for one pass, plus the
// logical clock. The payload morphs: latents into device 0, hidden state
// between devices, eps out of the last device.
struct PipeMessage {
  bool stop = false;
  std::exception_ptr error;

  int64_t round = 0;
  int64_t block_id = 0;
  int level = 0;
  Phase phase = Phase::kWarmup;

  Tensor payload;
  std::vector<int> frame_levels;
  std::vector<int64_t> frame_ids;
  std::vector<int> capture_frames;
  std::optional<int64_t> cached_context_id;
  int64_t center_tokens = 0;

  int64_t earliest_slot = 1;
  int64_t completion_slot = 0;
};

// Ordered point-to-point channel. Blocking pops serve the threaded mode;
// try_pop serves the single-threaded round-robin mode.
class Channel {
 public:
  void push(PipeMessage msg) {
    {
      std::lock_guard<std::mutex> lock(m_);
      q_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  PipeMessage pop_blocking() {
    std::unique_lock<std::mutex> lock(m_);
    cv_.wait(lock, [&] { return !q_.empty(); });
    PipeMessage msg = std::move(q_.front());
    q_.pop_front();
    return msg;
  }

  std::optional<PipeMessage> try_pop() {
    std::lock_guard<std::mutex> lock(m_);
    if (q_.empty()) return std::nullopt;
    PipeMessage msg = std::move(q_.front());
    q_.pop_front();
    return msg;
  }

 private:
  std::deque<PipeMessage> q_;
  std::mutex m_;
  std::condition_variable cv_;
};

// Scalars pushed into one channel, bucketed by round.
struct ChannelCounter {
  std::map<int64_t, std::pair<int64_t, int64_t>> by_round;  // round -> (passes, scalars)

  void count(const PipeMessage& msg) {
    auto& slot = by_round[msg.round];
    slot.first += 1;
    slot.second += msg.payload.numel();
  }
};

class DeviceWorker {
 public:
  DeviceWorker(ModelChunk chunk, Tensor context, CacheMode mode, int device,
               bool fault_inject, bool check_cache)
      : chunk_(std::move(chunk)),
        context_(std::move(context)),
        mode_(mode),
        device_(device),
        fault_pending_(fault_inject && device == 0),
        check_cache_(check_cache) {}

  Channel& in() { return in_; }

  void connect_output(Channel* out) { out_ = out; }

  // Processes one message end to end. Returns false once the stop token has
  // been forwarded.
  bool step_one(PipeMessage msg) {
    if (msg.stop || msg.error) {
      out_->push(std::move(msg));
      return false;
    }
    try {
      process(msg);
    } catch (...) {
      PipeMessage err;
      err.error = std::current_exception();
      out_->push(std::move(err));
      return true;  // keep draining until stop arrives
    }
    return true;
  }

  bool step_from_channel_nonblocking() {
    std::optional<PipeMessage> msg = in_.try_pop();
    if (!msg.has_value()) return false;
    step_one(std::move(*msg));
    return true;
  }

  void run_blocking() {
    while (step_one(in_.pop_blocking())) {
    }
  }

  const std::vector<ScheduleEvent>& events() const { return events_; }
  const ChannelCounter& counter() const { return counter_; }

 private:
  void process(PipeMessage& msg) {
    const int64_t slot = std::max(msg.earliest_slot, next_free_);
    next_free_ = slot + 1;

    const KVCacheEntry* cache = nullptr;
    const RecomputeEntry* recorded = nullptr;
    if (msg.cached_context_id.has_value() && mode_ != CacheMode::kDisabled) {
      if (mode_ == CacheMode::kCached) {
        if (!cache_ || cache_->block_id != *msg.cached_context_id) {
          throw CacheError("device " + std::to_string(device_) + " expected cache of block " +
                           std::to_string(*msg.cached_context_id));
        }
        if (cache_->level != msg.level + 1) {
          throw CacheError("cache level " + std::to_string(cache_->level) +
                           " does not precede pass level " + std::to_string(msg.level));
        }
        if (check_cache_) {
          if (!recorded_ || recorded_->block_id != cache_->block_id) {
            throw CacheError("cache audit has no recording for block " +
                             std::to_string(cache_->block_id));
          }
          const std::string report = cache_mismatch_report(chunk_, *cache_, *recorded_);
          if (!report.empty()) throw CacheError(report);
        }
        cache = &*cache_;
      } else {
        if (!recorded_ || recorded_->block_id != *msg.cached_context_id) {
          throw CacheError("device " + std::to_string(device_) +
                           " expected recorded rows of block " +
                           std::to_string(*msg.cached_context_id));
        }
        recorded = &*recorded_;
      }
    }

    ChunkInput in;
    in.payload = std::move(msg.payload);
    in.frame_levels = msg.frame_levels;
    in.frame_ids = msg.frame_ids;
    in.capture_frames = msg.capture_frames;
    in.record_inputs = check_cache_ && mode_ == CacheMode::kCached;

    ChunkOutput out = forward_chunk(chunk_, in, context_, mode_, cache, recorded);

    if (out.captured) {
      out.captured->block_id = msg.block_id;
      out.captured->level = msg.level;
      if (fault_pending_) {
        double& v = out.captured->per_layer[0].v.data[0];
        v = std::nextafter(v, std::numeric_limits<double>::infinity());
        fault_pending_ = false;
      }
    }
    if (out.recorded) {
      out.recorded->block_id = msg.block_id;
      out.recorded->level = msg.level;
    }
    cache_ = std::move(out.captured);
    recorded_ = std::move(out.recorded);

    events_.push_back({slot, device_, msg.block_id, msg.level, msg.phase, msg.round});

    msg.payload = std::move(out.payload);
    if (chunk_.is_last()) msg.completion_slot = slot;
    msg.earliest_slot = slot + 1;
    counter_.count(msg);
    out_->push(std::move(msg));
  }

  ModelChunk chunk_;
  Tensor context_;
  CacheMode mode_;
  int device_;
  bool fault_pending_;
  bool check_cache_;
  Channel in_;
  Channel* out_ = nullptr;
  std::optional<KVCacheEntry> cache_;
  std::optional<RecomputeEntry> recorded_;
  int64_t next_free_ = 1;
  std::vector<ScheduleEvent> events_;
  ChannelCounter counter_;
};

int64_t total_rounds(const QueueParams& p) { return p.steps + p.block_num - 1; }

Phase round_phase(const QueueParams& p, int64_t r) {
  // The queue ramps one block per round to q_max = min(T, block_num), stays
  // there, and drains symmetrically: full exactly on rounds
  // [q_max, total_rounds - q_max + 1].
  const int64_t q_max = std::min<int64_t>(p.steps, p.block_num);
  if (r < q_max) return Phase::kWarmup;
  if (r > total_rounds(p) - q_max + 1) return Phase::kCooldown;
  return Phase::kSteady;
}

}  // namespace

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kWarmup: return "warmup";
    case Phase::kSteady: return "steady";
    case Phase::kCooldown: return "cooldown";
  }
  return "?";
}

void PipelineConfig::validate() const {
  model.validate();
  queue.validate();
  if (devices < 1) throw ConfigError("devices must be >= 1");
  if (model.layers % devices != 0) {
    throw ConfigError("layers " + std::to_string(model.layers) +
                      " not divisible by devices " + std::to_string(devices));
  }
}

RunResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const QueueParams& qp = cfg.queue;
  const ModelConfig& mc = cfg.model;
  const int tpf = mc.tokens_per_frame();
  const int ctx_frames = qp.num_c / 2;
  const int64_t rounds = total_rounds(qp);

  // Devices and channels. Workers push down the chain; the last worker
  // pushes into `results`.
  std::vector<ModelChunk> chunks = partition(mc, cfg.seed_model, cfg.devices);
  const Tensor context = build_context(mc, cfg.seed_context);
  std::vector<std::unique_ptr<DeviceWorker>> workers;
  workers.reserve(chunks.size());
  for (int j = 0; j < cfg.devices; ++j) {
    workers.push_back(std::make_unique<DeviceWorker>(std::move(chunks[static_cast<size_t>(j)]),
                                                     context, cfg.cache_mode, j,
                                                     cfg.fault_inject_ulp, cfg.check_cache));
  }
  Channel results;
  for (int j = 0; j + 1 < cfg.devices; ++j) {
    workers[static_cast<size_t>(j)]->connect_output(&workers[static_cast<size_t>(j) + 1]->in());
  }
  workers.back()->connect_output(&results);

  std::vector<std::thread> threads;
  if (cfg.threaded) {
    for (auto& w : workers) {
      threads.emplace_back([worker = w.get()] { worker->run_blocking(); });
    }
  }

  // Noise: the shared pool plus a per-append stream.
  const NoisePool pool = build_pool(qp.num_b, qp.num_c,
                                    {mc.height, mc.width, mc.channels},
                                    derive_seed(cfg.seed_noise, {0}));
  RandomSource append_rng(derive_seed(cfg.seed_noise, {1}));

  QueueState q;
  q.params = qp;
  int64_t next_block = 1;
  int64_t next_frame_id = 0;
  ChannelCounter host_counter;
  std::map<std::pair<int64_t, int64_t>, int64_t> completion;  // (block, round) -> slot
  RunResult result;

  auto make_block = [&](int64_t id) {
    NoiseDraw d;
    if (id == 1) {
      d = draw_first_block(cfg.strategy, pool, append_rng);
    } else {
      std::vector<int> window;
      if (ctx_frames > 0) {
        const LatentBlock& tail = q.blocks.back();
        if (static_cast<int>(tail.noise_ids.size()) >= ctx_frames) {
          window.assign(tail.noise_ids.end() - ctx_frames, tail.noise_ids.end());
        } else if (cfg.strategy == InitStrategy::kCoordinated) {
          throw QueueError("tail block lacks noise ids for the exclusion window");
        }
      }
      d = draw_next_block(cfg.strategy, pool, window, append_rng);
    }
    LatentBlock b;
    b.block_id = id;
    b.frames = std::move(d.frames);
    b.noise_ids = std::move(d.noise_ids);
    const int64_t f = b.frames.shape[0];
    for (int64_t k = 0; k < f; ++k) b.frame_ids.push_back(next_frame_id++);
    return b;
  };

  auto emit_if_clean = [&](QueueState& state) {
    if (!state.blocks.empty() && state.blocks.front().level == 0) {
      const LatentBlock& head = state.blocks.front();
      result.blocks.push_back({head.block_id, head.frames, head.noise_ids, head.frame_ids});
    }
  };

  auto drain_error = [&](std::exception_ptr err) {
    if (cfg.threaded) {
      PipeMessage stop;
      stop.stop = true;
      workers.front()->in().push(std::move(stop));
      for (std::thread& t : threads) t.join();
    }
    std::rethrow_exception(err);
  };

  for (int64_t r = 1; r <= rounds; ++r) {
    std::optional<LatentBlock> nb;
    if (next_block <= qp.block_num) nb = make_block(next_block++);
    emit_if_clean(q);
    q = advance(std::move(q), std::move(nb));
    if (!levels_are_unit_ladder(q)) throw QueueError("level ladder violated");

    QueueSnapshot snap;
    snap.round = r;
    for (const LatentBlock& b : q.blocks) {
      snap.block_ids.push_back(b.block_id);
      snap.levels.push_back(b.level);
    }
    result.queue_snapshots.push_back(std::move(snap));

    const Phase phase = round_phase(qp, r);
    const std::vector<int64_t> order = processing_order(q, cfg.order);

    for (size_t pos = 0; pos < order.size(); ++pos) {
      const int64_t id = order[pos];
      const LatentBlock& blk = *q.find(id);
      ExtendedBlock ext = assemble_extended(q, id, cfg.order);

      PipeMessage msg;
      msg.round = r;
      msg.block_id = id;
      msg.level = blk.level;
      msg.phase = phase;
      if (cfg.cache_mode != CacheMode::kDisabled) msg.cached_context_id = ext.cached_context_id;

      const int64_t f = blk.frames.shape[0];
      Tensor center2d = blk.frames.reshaped({f * tpf, mc.channels});
      if (ext.source != ExtendedBlock::CtxSource::kNone) {
        const int64_t cf = ext.explicit_frames.shape[0];
        Tensor ctx2d = ext.explicit_frames.reshaped({cf * tpf, mc.channels});
        msg.payload = vcat_rows(ctx2d, center2d);
        msg.frame_levels = ext.explicit_levels;
        msg.frame_ids = ext.explicit_frame_ids;
      } else {
        msg.payload = std::move(center2d);
      }
      for (int64_t k = 0; k < f; ++k) {
        msg.frame_levels.push_back(blk.level);
        msg.frame_ids.push_back(blk.frame_ids[static_cast<size_t>(k)]);
      }
      msg.center_tokens = f * tpf;

      // Capture the center's leading frames when the video-earlier neighbor,
      // processed right after this pass in reverse order, will reuse them.
      if (cfg.cache_mode != CacheMode::kDisabled && cfg.order == Order::kReverse &&
          ctx_frames > 0 && q.find(id - 1) != nullptr) {
        const int ctx_offset = static_cast<int>(msg.frame_levels.size() - f);
        for (int k = 0; k < ctx_frames; ++k) msg.capture_frames.push_back(ctx_offset + k);
      }

      // Logical clock: a pass starts after its inputs exist. Own state needs
      // the previous round's result; lagged in-queue context needs the
      // neighbor's result from two rounds back; retained clean context needs
      // the popped block's final result.
      int64_t earliest = 1;
      auto dep = [&](int64_t b, int64_t rr) {
        auto it = completion.find({b, rr});
        if (it != completion.end()) earliest = std::max(earliest, it->second + 1);
      };
      if (blk.updates > 0) dep(id, r - 1);
      if (ext.source == ExtendedBlock::CtxSource::kInQueue) dep(ext.ctx_block_id, r - 2);
      if (ext.source == ExtendedBlock::CtxSource::kRetained) dep(ext.ctx_block_id, r - 1);
      msg.earliest_slot = earliest;

      host_counter.count(msg);
      workers.front()->in().push(std::move(msg));
    }

    // Collect this round's results in arrival order (= processing order) and
    // fold them back into the queue.
    for (size_t got = 0; got < order.size(); ++got) {
      PipeMessage res;
      if (cfg.threaded) {
        res = results.pop_blocking();
      } else {
        for (;;) {
          std::optional<PipeMessage> maybe = results.try_pop();
          if (maybe.has_value()) {
            res = std::move(*maybe);
            break;
          }
          bool progressed = false;
          for (auto& w : workers) progressed |= w->step_from_channel_nonblocking();
          if (!progressed) throw SchedulingError("no progress over a full worker sweep");
        }
      }
      if (res.error) drain_error(res.error);
      if (res.stop) throw SchedulingError("unexpected stop token");

      LatentBlock* blk = q.find(res.block_id);
      if (blk == nullptr) throw QueueError("result for unknown block");
      if (cfg.record_trace) result.trace.push_back({res.round, res.block_id, res.payload});
      const int64_t total = res.payload.rows();
      Tensor eps_center = slice_rows(res.payload, total - res.center_tokens, total);
      const int64_t f = blk->frames.shape[0];
      Tensor x2d = blk->frames.reshaped({f * tpf, mc.channels});
      Tensor updated = scheduler_step(x2d, eps_center, blk->level, qp.steps);
      apply_update(q, res.block_id, updated.reshaped(blk->frames.shape));
      completion[{res.block_id, res.round}] = res.completion_slot;
    }

    // Dependencies reach back two rounds at most.
    for (auto it = completion.begin(); it != completion.end();) {
      it = it->first.second < r - 1 ? completion.erase(it) : ++it;
    }
  }

  emit_if_clean(q);
  q = advance(std::move(q), std::nullopt);
  if (!q.blocks.empty()) throw QueueError("queue not empty after the final round");

  if (cfg.threaded) {
    PipeMessage stop;
    stop.stop = true;
    workers.front()->in().push(std::move(stop));
    for (std::thread& t : threads) t.join();
  } else {
    // Flush the stop token through the chain for symmetry.
    PipeMessage stop;
    stop.stop = true;
    workers.front()->in().push(std::move(stop));
    for (auto& w : workers) w->step_from_channel_nonblocking();
    (void)results.try_pop();
  }

  // Assemble the log and the ledger in canonical order.
  result.rounds = rounds;
  result.log.devices = cfg.devices;
  for (const auto& w : workers) {
    result.log.events.insert(result.log.events.end(), w->events().begin(), w->events().end());
  }
  std::sort(result.log.events.begin(), result.log.events.end(),
            [](const ScheduleEvent& a, const ScheduleEvent& b) {
              return std::tie(a.slot, a.device) < std::tie(b.slot, b.device);
            });

  auto emit_counter = [&](const std::string& name, const ChannelCounter& c) {
    for (const auto& [round, pair] : c.by_round) {
      result.ledger.entries.push_back({name, round, pair.first, pair.second});
    }
  };
  emit_counter("host->dev0", host_counter);
  for (int j = 0; j < cfg.devices; ++j) {
    const std::string name = (j + 1 < cfg.devices)
                                 ? "dev" + std::to_string(j) + "->dev" + std::to_string(j + 1)
                                 : "dev" + std::to_string(j) + "->host";
    emit_counter(name, workers[static_cast<size_t>(j)]->counter());
  }
  return result;
}

RunResult serial_oracle(PipelineConfig cfg) {
  cfg.devices = 1;
  cfg.threaded = false;
  return run_pipeline(cfg);
}

BubbleStats measure_bubbles(const EventLog& log) {
  BubbleStats st;
  if (log.events.empty()) return st;
  if (log.devices < 1) throw SchedulingError("malformed event log: no devices");

  std::vector<std::vector<const ScheduleEvent*>> per_dev(static_cast<size_t>(log.devices));
  int64_t first = log.events.front().slot, last = 0;
  for (const ScheduleEvent& e : log.events) {
    if (e.device < 0 || e.device >= log.devices) {
      throw SchedulingError("malformed event log: device out of range");
    }
    per_dev[static_cast<size_t>(e.device)].push_back(&e);
    first = std::min(first, e.slot);
    last = std::max(last, e.slot);
  }
  const int64_t busy = static_cast<int64_t>(per_dev[0].size());
  for (const auto& v : per_dev) {
    if (static_cast<int64_t>(v.size()) != busy) {
      throw SchedulingError("malformed event log: devices saw different pass counts");
    }
    for (size_t i = 1; i < v.size(); ++i) {
      if (v[i]->slot <= v[i - 1]->slot) {
        throw SchedulingError("malformed event log: duplicate slot on one device");
      }
    }
  }

  st.first_slot = first;
  st.last_slot = last;
  st.busy_per_device = busy;
  const int64_t window = last - first + 1;
  st.idle_per_device = window - busy;

  for (const auto& v : per_dev) {
    size_t next = 0;
    for (int64_t s = first; s <= last; ++s) {
      while (next < v.size() && v[next]->slot < s) ++next;
      if (next < v.size() && v[next]->slot == s) continue;  // busy
      const Phase p = next < v.size() ? v[next]->phase : Phase::kCooldown;
      switch (p) {
        case Phase::kWarmup: st.warmup_idle++; break;
        case Phase::kSteady: st.steady_idle++; break;
        case Phase::kCooldown: st.cooldown_idle++; break;
      }
    }
  }
  const double idle_total = static_cast<double>(st.idle_per_device) * log.devices;
  const double busy_total = static_cast<double>(busy) * log.devices;
  st.ratio = idle_total <= 0.0 ? 0.0 : idle_total / (idle_total + busy_total);
  return st;
}

std::vector<ScheduleEvent> schedule_grid(const EventLog& log) {
  std::vector<ScheduleEvent> grid;
  if (log.events.empty()) return grid;
  int64_t first = log.events.front().slot, last = log.events.front().slot;
  for (const ScheduleEvent& e : log.events) {
    first = std::min(first, e.slot);
    last = std::max(last, e.slot);
  }
  std::vector<std::vector<const ScheduleEvent*>> per_dev(static_cast<size_t>(log.devices));
  for (const ScheduleEvent& e : log.events) {
    per_dev[static_cast<size_t>(e.device)].push_back(&e);
  }
  for (int64_t s = first; s <= last; ++s) {
    for (int d = 0; d < log.devices; ++d) {
      const auto& v = per_dev[static_cast<size_t>(d)];
      auto it = std::lower_bound(v.begin(), v.end(), s,
                                 [](const ScheduleEvent* e, int64_t slot) {
                                   return e->slot < slot;
                                 });
      if (it != v.end() && (*it)->slot == s) {
        grid.push_back(**it);
      } else {
        const Phase p = it != v.end() ? (*it)->phase : Phase::kCooldown;
        grid.push_back({s, d, -1, -1, p, 0});
      }
    }
  }
  return grid;
}

bool blocks_bitwise_equal(const std::vector<EmittedBlock>& a,
                          const std::vector<EmittedBlock>& b, std::string* first_diff) {
  auto diff = [&](const std::string& msg) {
    if (first_diff != nullptr) *first_diff = msg;
    return false;
  };
  if (a.size() != b.size()) return diff("emitted block counts differ");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].block_id != b[i].block_id) return diff("block id mismatch at position " +
                                                    std::to_string(i));
    if (a[i].frames.shape != b[i].frames.shape) {
      return diff("frame shape mismatch in block " + std::to_string(a[i].block_id));
    }
    for (size_t k = 0; k < a[i].frames.data.size(); ++k) {
      if (a[i].frames.data[k] != b[i].frames.data[k] ||
          std::signbit(a[i].frames.data[k]) != std::signbit(b[i].frames.data[k])) {
        return diff("block " + std::to_string(a[i].block_id) + " first differs at flat index " +
                    std::to_string(k));
      }
    }
  }
  return true;
}

bool traces_bitwise_equal(const std::vector<TraceRecord>& a,
                          const std::vector<TraceRecord>& b, std::string* first_diff) {
  auto diff = [&](const std::string& msg) {
    if (first_diff != nullptr) *first_diff = msg;
    return false;
  };
  if (a.size() != b.size()) return diff("trace lengths differ");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].round != b[i].round || a[i].block_id != b[i].block_id) {
      return diff("trace order diverges at index " + std::to_string(i));
    }
    if (!a[i].eps.bitwise_equal(b[i].eps)) {
      return diff("pass output differs at round " + std::to_string(a[i].round) + " block " +
                  std::to_string(a[i].block_id));
    }
  }
  return true;
}

}  // namespace blockpipe
