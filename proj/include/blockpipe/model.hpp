#ifndef BLOCKPIPE_MODEL_HPP_
#define BLOCKPIPE_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockpipe/rng.hpp"
#include "blockpipe/tensor.hpp"

namespace blockpipe {

// Small DiT-style denoiser: L identical layers of temporal self-attention
// (the only cross-frame component, and the only cacheable one), per-token
// cross-attention against a fixed context sequence, and a per-token FFN.
// Layers partition into contiguous chunks, one per simulated device; the
// first chunk owns the token embedding (patchify), the last owns the output
// head.

struct ModelConfig {
  int layers = 4;        // L
  int hidden = 16;       // h
  int heads = 2;
  int channels = 2;      // C, latent channels
  int height = 2;        // H', token grid rows per frame
  int width = 2;         // W'
  int context_len = 4;   // cross-attention context length

  int tokens_per_frame() const { return height * width; }
  void validate() const;
};

// Per-layer weight set. Every tensor is regenerated from
// derive_seed(seed, {layer, role}), so any device rebuilds bit-identical
// weights for its own layer range.
struct LayerWeights {
  Tensor wq, wk, wv, wo;      // self-attention projections [h, h]
  Tensor cq, ck, cv, co;      // cross-attention projections [h, h]
  Tensor w1, w2;              // FFN [h, 4h], [4h, h]
  Tensor ln1_g, ln1_b;        // affine params per sublayer norm [1, h]
  Tensor ln2_g, ln2_b;
  Tensor ln3_g, ln3_b;
};

LayerWeights build_layer(const ModelConfig& cfg, uint64_t seed, int layer);

// Contiguous layer range [begin, end) plus the boundary projections when the
// range touches an end of the model.
struct ModelChunk {
  ModelConfig cfg;
  uint64_t seed = 0;
  int begin = 0, end = 0;
  std::vector<LayerWeights> layers;   // layers[i] = weights of layer begin+i
  std::optional<Tensor> w_in;         // [C, h], chunk 0 only
  std::optional<Tensor> w_out;        // [h, C], last chunk only

  bool is_first() const { return begin == 0; }
  bool is_last() const { return end == cfg.layers; }
};

// Builds the chunk owning layers [begin, end). build_model is the monolithic
// convenience (one chunk over [0, L)).
ModelChunk build_chunk(const ModelConfig& cfg, uint64_t seed, int begin, int end);
ModelChunk build_model(const ModelConfig& cfg, uint64_t seed);

// Splits into N chunks of L/N layers each. L mod N != 0 is a partition error.
std::vector<ModelChunk> partition(const ModelConfig& cfg, uint64_t seed, int devices);

// Fixed cross-attention context, shared by every block: [context_len, h]
// standard normals from the context seed.
Tensor build_context(const ModelConfig& cfg, uint64_t context_seed);

// Deterministic additive embeddings (classic sinusoid table, no weights).
// The timestep table is injective over the 0..T ladder, level 0 = clean.
Tensor position_embedding(int64_t pos, int hidden);
Tensor timestep_embedding(int level, int hidden);

// Cached self-attention keys/values of one earlier block, one entry per
// layer of the owning chunk. Contents must stay bitwise equal to the K,V
// computed for those rows during the capturing pass.
struct LayerKV {
  Tensor k, v;  // [captured_tokens, h]
};

struct KVCacheEntry {
  int64_t block_id = -1;
  int level = -1;                     // noise level the rows were captured at
  int64_t captured_tokens = 0;
  std::vector<LayerKV> per_layer;     // size == chunk layer count
};

// Alternative route to the same rows: the captured frames' layer inputs,
// recorded during the capturing pass. A consumer re-derives K,V through the
// same projections; with a correct cache the two routes agree bitwise.
struct RecomputeEntry {
  int64_t block_id = -1;
  int level = -1;
  int64_t captured_tokens = 0;
  std::vector<Tensor> layer_inputs;   // x entering each layer, captured rows only
};

enum class CacheMode { kDisabled, kCached, kRecompute };

// One denoising pass of an extended block through a chunk.
struct ChunkInput {
  Tensor payload;                     // chunk 0: latents [tokens, C]; else hidden [tokens, h]
  std::vector<int> frame_levels;      // per explicit frame
  std::vector<int64_t> frame_ids;     // global frame indices, drive position embeddings
  std::vector<int> capture_frames;    // frame positions (within this pass) to snapshot
  bool record_inputs = false;         // also snapshot layer inputs in kCached mode
};

struct ChunkOutput {
  Tensor payload;                     // last chunk: eps [tokens, C]; else hidden [tokens, h]
  std::optional<KVCacheEntry> captured;
  std::optional<RecomputeEntry> recorded;  // kRecompute mode only
};

// Runs the chunk. `cache` / `recorded` hold the previously processed block's
// snapshot for this device (empty for the tail block). Self-attention queries
// come from the explicit tokens only; keys/values are the cached rows
// prepended to the explicit rows. Cross-attention and FFN see explicit
// tokens only. Chunk 0 adds position and per-frame timestep embeddings on
// entry.
ChunkOutput forward_chunk(const ModelChunk& chunk, const ChunkInput& in,
                          const Tensor& context, CacheMode mode,
                          const KVCacheEntry* cache, const RecomputeEntry* recorded);

// Dual-route audit: re-derives K,V from the recorded layer inputs and
// compares them with the cached rows bitwise. Returns an empty string when
// every row matches, else a description of the first mismatch. This is how
// a single-ulp disturbance in the cache is caught even when downstream
// rounding would absorb it.
std::string cache_mismatch_report(const ModelChunk& chunk, const KVCacheEntry& cache,
                                  const RecomputeEntry& recorded);

// Sublayer functions, exposed so tests can probe per-frame independence.
// All operate on [tokens, h] and return the sublayer output (pre-residual).
Tensor self_attention_sublayer(const LayerWeights& w, const Tensor& x, int heads,
                               const Tensor* k_prefix, const Tensor* v_prefix);
Tensor cross_attention_sublayer(const LayerWeights& w, const Tensor& x,
                                const Tensor& context, int heads);
Tensor ffn_sublayer(const LayerWeights& w, const Tensor& x);

// Scheduler update x_{t-1} = S(eps_t, x_t, t). The default rule is the
// 1/T Euler step: x - (1/T) * eps. t must lie in 1..T.
Tensor scheduler_step(const Tensor& x_t, const Tensor& eps_t, int level, int steps);

}  // namespace blockpipe

#endif  // BLOCKPIPE_MODEL_HPP_
