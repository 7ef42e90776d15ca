#ifndef BLOCKPIPE_ANALYTICS_HPP_
#define BLOCKPIPE_ANALYTICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "blockpipe/block_queue.hpp"

namespace blockpipe {

// Closed-form pipeline bubble accounting. Reverse (tail-to-head) order with
// enough blocks idles only through warm-up and cool-down; with too few
// blocks every step leaves gaps; sequential order pays an extra N slots.
struct BubbleParams {
  int devices = 1;      // N
  int steps = 1;        // T
  int64_t block_num = 1;
  Order order = Order::kReverse;

  void validate() const;
};

// Bubble size (idle slots per device) and the resulting ratio
// idle / (idle + T * block_num). N = 1 never idles.
int64_t bubble_size(const BubbleParams& bp);
double bubble_ratio(const BubbleParams& bp);

// Communication / memory cost model for one diffusion step, in abstract
// scalar and memory units.
struct CostParams {
  int64_t frames = 16;     // F
  int64_t height = 4;      // H', token grid
  int64_t width = 4;       // W'
  int64_t hidden = 8;      // h
  int64_t channels = 4;    // C, latent channels
  int64_t layers = 8;      // L
  int64_t devices = 2;     // N
  int64_t num_b = 8;
  int64_t num_c = 8;
  double model_mem = 1.0;  // W, total model memory units
  double kv_mem = 1.0;     // KV, memory units per cached frame
  bool ring_refinement = false;  // use the exact (N-1)/N ring factor

  int64_t seq_len() const { return frames * height * width; }  // p
  void validate() const;
};

enum class Method { kRingAttention, kUlysses, kVideoInfinity, kFifo, kDualParal };

Method parse_method(const std::string& name);
std::string method_name(Method m);
std::vector<Method> all_methods();

struct MethodCost {
  Method method = Method::kDualParal;
  double comm_scalars = 0.0;
  bool comm_overlap = false;
  double model_mem = 0.0;
  double kv_mem = 0.0;
};

MethodCost method_cost(Method m, const CostParams& cp);

// Sweep over device counts or frame counts; one MethodCost per grid point.
struct SweepPoint {
  std::string axis;   // "N" or "F"
  int64_t value = 0;
  MethodCost cost;
};

std::vector<SweepPoint> sweep_devices(const CostParams& cp, const std::vector<Method>& ms,
                                      const std::vector<int64_t>& device_counts);
std::vector<SweepPoint> sweep_frames(const CostParams& cp, const std::vector<Method>& ms,
                                     const std::vector<int64_t>& frame_counts);

}  // namespace blockpipe

#endif  // BLOCKPIPE_ANALYTICS_HPP_
