#ifndef BLOCKPIPE_ENGINE_HPP_
#define BLOCKPIPE_ENGINE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockpipe/block_queue.hpp"
#include "blockpipe/model.hpp"
#include "blockpipe/noise.hpp"
#include "blockpipe/tensor.hpp"

namespace blockpipe {

// Block-wise denoising across N simulated devices, one worker per model
// chunk, joined by ordered point-to-point channels
// (coordinator -> dev0 -> ... -> devN-1 -> coordinator). Slots are logical
// unit-time: every (chunk, extended block) pass costs one slot, and a pass's
// slot is the earliest consistent with its data dependencies and its
// device's occupancy, so the resulting Gantt log is the idealized pipeline
// schedule regardless of wall-clock interleaving.

struct PipelineConfig {
  int devices = 2;                 // N
  Order order = Order::kReverse;
  CacheMode cache_mode = CacheMode::kCached;
  bool threaded = true;            // false = single-threaded round-robin reference
  QueueParams queue;               // num_b, num_c, steps (T), block_num
  ModelConfig model;
  InitStrategy strategy = InitStrategy::kCoordinated;
  uint64_t seed_model = 1;
  uint64_t seed_noise = 2;
  uint64_t seed_context = 3;
  bool fault_inject_ulp = false;   // bump one cached value by 1 ulp (device 0)
  bool record_trace = false;       // keep every pass's eps for fine-grained comparison
  bool check_cache = false;        // audit cached K,V against recomputed rows per pass

  void validate() const;
};

enum class Phase { kWarmup, kSteady, kCooldown };
std::string phase_name(Phase p);

// One busy cell of the schedule; idle cells are derived from the gaps.
struct ScheduleEvent {
  int64_t slot = 0;
  int device = 0;
  int64_t block_id = 0;
  int level = 0;
  Phase phase = Phase::kWarmup;
  int64_t round = 0;
};

struct EventLog {
  int devices = 1;
  std::vector<ScheduleEvent> events;  // sorted by (slot, device)
};

// Scalars moved per channel per round; the simulator's stand-in for P2P
// communication volume.
struct LedgerEntry {
  std::string channel;
  int64_t round = 0;
  int64_t passes = 0;
  int64_t scalars = 0;
};

struct TransferLedger {
  std::vector<LedgerEntry> entries;
};

struct EmittedBlock {
  int64_t block_id = 0;
  Tensor frames;  // clean latents [f, H, W, C]
  std::vector<int> noise_ids;
  std::vector<int64_t> frame_ids;
};

// One denoise pass's raw model output, before the scheduler folds it into
// the latents. A single-ulp disturbance anywhere upstream is visible here
// even when the scheduler's 1/T scaling rounds it away in the latents.
struct TraceRecord {
  int64_t round = 0;
  int64_t block_id = 0;
  Tensor eps;
};

// Queue occupancy at the start of each round, for reports and goldens.
struct QueueSnapshot {
  int64_t round = 0;
  std::vector<int64_t> block_ids;  // head first
  std::vector<int> levels;
};

struct RunResult {
  std::vector<EmittedBlock> blocks;  // emission (append) order
  EventLog log;
  TransferLedger ledger;
  int64_t rounds = 0;
  std::vector<TraceRecord> trace;    // populated when record_trace is set
  std::vector<QueueSnapshot> queue_snapshots;
};

RunResult run_pipeline(const PipelineConfig& cfg);

// Same schedule and cache semantics on a single worker; the canonical
// reference output every multi-device run must reproduce bitwise.
RunResult serial_oracle(PipelineConfig cfg);

// Bubble accounting over the global window [first busy slot, last busy slot]
// across all devices. Busy is identical on every device (each pass visits
// every device once), so per-device idle is window - busy everywhere.
struct BubbleStats {
  int64_t first_slot = 0;
  int64_t last_slot = 0;
  int64_t busy_per_device = 0;
  int64_t idle_per_device = 0;
  int64_t warmup_idle = 0;    // summed over devices
  int64_t steady_idle = 0;
  int64_t cooldown_idle = 0;
  double ratio = 0.0;         // idle / (idle + busy)
};

BubbleStats measure_bubbles(const EventLog& log);

// Full grid including IDLE cells, ready for CSV export.
std::vector<ScheduleEvent> schedule_grid(const EventLog& log);

bool blocks_bitwise_equal(const std::vector<EmittedBlock>& a,
                          const std::vector<EmittedBlock>& b,
                          std::string* first_diff = nullptr);

bool traces_bitwise_equal(const std::vector<TraceRecord>& a,
                          const std::vector<TraceRecord>& b,
                          std::string* first_diff = nullptr);

}  // namespace blockpipe

#endif  // BLOCKPIPE_ENGINE_HPP_
