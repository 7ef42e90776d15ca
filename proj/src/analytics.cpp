#include "blockpipe/analytics.hpp"

#include "blockpipe/errors.hpp"

namespace blockpipe {

void BubbleParams::validate() const {
  if (devices < 1) throw ConfigError("devices must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (block_num < 1) throw ConfigError("block_num must be >= 1");
}

int64_t bubble_size(const BubbleParams& bp) {
  bp.validate();
  const int64_t n = bp.devices;
  const int64_t t = bp.steps;
  if (n == 1) return 0;
  if (bp.order == Order::kSequential) return n * n - 1;
  if (n <= bp.block_num) return n * n - n - 1;
  // Few-block regime: signed evaluation, nonnegative for any valid setting.
  const int64_t size = bp.block_num * (n - t) + n * (t - 2) + 1;
  if (size < 0) throw ConfigError("bubble size negative; parameters out of regime");
  return size;
}

double bubble_ratio(const BubbleParams& bp) {
  const int64_t size = bubble_size(bp);
  if (size == 0) return 0.0;
  const double work = static_cast<double>(bp.steps) * static_cast<double>(bp.block_num);
  return static_cast<double>(size) / (static_cast<double>(size) + work);
}

void CostParams::validate() const {
  if (frames < 1 || height < 1 || width < 1 || hidden < 1 || channels < 1 ||
      layers < 1 || devices < 1 || num_b < 1) {
    throw ConfigError("cost parameters must be positive");
  }
  if (num_c < 0) throw ConfigError("num_c must be >= 0");
  if (model_mem < 0 || kv_mem < 0) throw ConfigError("memory units must be >= 0");
}

Method parse_method(const std::string& name) {
  if (name == "ring-attention") return Method::kRingAttention;
  if (name == "ulysses") return Method::kUlysses;
  if (name == "video-infinity") return Method::kVideoInfinity;
  if (name == "fifo") return Method::kFifo;
  if (name == "dualparal") return Method::kDualParal;
  throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kRingAttention: return "ring-attention";
    case Method::kUlysses: return "ulysses";
    case Method::kVideoInfinity: return "video-infinity";
    case Method::kFifo: return "fifo";
    case Method::kDualParal: return "dualparal";
  }
  throw ConfigError("unreachable method");
}

std::vector<Method> all_methods() {
  return {Method::kRingAttention, Method::kUlysses, Method::kVideoInfinity, Method::kFifo,
          Method::kDualParal};
}

MethodCost method_cost(Method m, const CostParams& cp) {
  cp.validate();
  const double p = static_cast<double>(cp.seq_len());
  const double h = static_cast<double>(cp.hidden);
  const double l = static_cast<double>(cp.layers);
  const double n = static_cast<double>(cp.devices);
  const double f = static_cast<double>(cp.frames);
  const double hw = static_cast<double>(cp.height * cp.width);
  const double c = static_cast<double>(cp.channels);
  const double nb = static_cast<double>(cp.num_b);
  const double nc = static_cast<double>(cp.num_c);

  MethodCost out;
  out.method = m;
  switch (m) {
    case Method::kRingAttention:
      out.comm_scalars = 2.0 * p * h * l;
      if (cp.ring_refinement) out.comm_scalars *= (n - 1.0) / n;
      out.comm_overlap = true;
      out.model_mem = cp.model_mem;
      out.kv_mem = (f / n) * cp.kv_mem;
      break;
    case Method::kUlysses:
      out.comm_scalars = (4.0 / n) * p * h * l;
      out.comm_overlap = false;
      out.model_mem = cp.model_mem;
      out.kv_mem = (f / n) * cp.kv_mem;
      break;
    case Method::kVideoInfinity:
      out.comm_scalars = 2.0 * nc * hw * h * l;
      out.comm_overlap = false;
      out.model_mem = cp.model_mem;
      out.kv_mem = (f / n + nc) * cp.kv_mem;
      break;
    case Method::kFifo:
      // FIFO moves raw frame latents, hence H * W * C rather than hidden
      // activations (the token grid equals the latent grid here).
      out.comm_scalars = 2.0 * (nb + nc) * hw * c;
      out.comm_overlap = true;
      out.model_mem = cp.model_mem;
      out.kv_mem = (nb + nc) * cp.kv_mem;
      break;
    case Method::kDualParal:
      out.comm_scalars = 2.0 * (nb + nc / 2.0) * hw * h;
      out.comm_overlap = true;
      out.model_mem = cp.model_mem / n;
      out.kv_mem = (nb + nc) * cp.kv_mem;
      break;
  }
  return out;
}

std::vector<SweepPoint> sweep_devices(const CostParams& cp, const std::vector<Method>& ms,
                                      const std::vector<int64_t>& device_counts) {
  if (device_counts.empty()) throw ConfigError("empty sweep axis");
  std::vector<SweepPoint> out;
  for (int64_t n : device_counts) {
    CostParams p = cp;
    p.devices = n;
    for (Method m : ms) out.push_back({"N", n, method_cost(m, p)});
  }
  return out;
}

std::vector<SweepPoint> sweep_frames(const CostParams& cp, const std::vector<Method>& ms,
                                     const std::vector<int64_t>& frame_counts) {
  if (frame_counts.empty()) throw ConfigError("empty sweep axis");
  std::vector<SweepPoint> out;
  for (int64_t f : frame_counts) {
    CostParams p = cp;
    p.frames = f;
    for (Method m : ms) out.push_back({"F", f, method_cost(m, p)});
  }
  return out;
}

}  // namespace blockpipe
