#include "blockpipe/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "blockpipe/errors.hpp"

namespace blockpipe {

namespace {

constexpr double kLnEps = 1e-5;

// Weight roles; the numeric values key the derivation streams and must not
// be reordered.
enum Role : uint64_t {
  kWq = 0, kWk, kWv, kWo,
  kCq, kCk, kCv, kCo,
  kW1, kW2,
  kLn1G, kLn1B, kLn2G, kLn2B, kLn3G, kLn3B,
  kPatchify = 100,
  kHead = 101,
};

Tensor draw(uint64_t seed, uint64_t layer, uint64_t role, std::vector<int64_t> shape,
            int64_t fan_in) {
  RandomSource rs(derive_seed(seed, {layer, role}));
  return rs.normal_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Tensor ln_affine(const Tensor& x, const Tensor& g, const Tensor& b) {
  Tensor y = layer_norm(x, kLnEps);
  const int64_t m = y.rows(), n = y.cols();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      y.at(i, j) = y.at(i, j) * g.at(0, j) + b.at(0, j);
    }
  }
  return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Multi-head attention with a fixed kv row order: queries q [m, h] attend to
// keys/values [mkv, h]. Head hd lives in columns [hd*dh, (hd+1)*dh).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const int64_t m = q.rows(), h = q.cols(), mkv = k.rows();
  const int64_t dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({m, h});
  for (int hd = 0; hd < heads; ++hd) {
    const int64_t c0 = hd * dh;
    Tensor scores({m, mkv});
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < mkv; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < dh; ++t) acc += q.at(i, c0 + t) * k.at(j, c0 + t);
        scores.at(i, j) = acc * scale;
      }
    }
    Tensor attn = softmax_rows(scores);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t t = 0; t < dh; ++t) {
        double acc = 0.0;
        for (int64_t j = 0; j < mkv; ++j) acc += attn.at(i, j) * v.at(j, c0 + t);
        out.at(i, c0 + t) = acc;
      }
    }
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (hidden < 2) throw ConfigError("hidden must be >= 2");
  if (heads < 1 || hidden % heads != 0)
    throw ConfigError("heads must divide hidden (" + std::to_string(hidden) + "/" +
                      std::to_string(heads) + ")");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (height < 1 || width < 1) throw ConfigError("token grid must be at least 1x1");
  if (context_len < 1) throw ConfigError("context_len must be >= 1");
}

LayerWeights build_layer(const ModelConfig& cfg, uint64_t seed, int layer) {
  const int64_t h = cfg.hidden;
  LayerWeights w;
  w.wq = draw(seed, layer, kWq, {h, h}, h);
  w.wk = draw(seed, layer, kWk, {h, h}, h);
  w.wv = draw(seed, layer, kWv, {h, h}, h);
  w.wo = draw(seed, layer, kWo, {h, h}, h);
  w.cq = draw(seed, layer, kCq, {h, h}, h);
  w.ck = draw(seed, layer, kCk, {h, h}, h);
  w.cv = draw(seed, layer, kCv, {h, h}, h);
  w.co = draw(seed, layer, kCo, {h, h}, h);
  w.w1 = draw(seed, layer, kW1, {h, 4 * h}, h);
  w.w2 = draw(seed, layer, kW2, {4 * h, h}, 4 * h);
  w.ln1_g = draw(seed, layer, kLn1G, {1, h}, h);
  w.ln1_b = draw(seed, layer, kLn1B, {1, h}, h);
  w.ln2_g = draw(seed, layer, kLn2G, {1, h}, h);
  w.ln2_b = draw(seed, layer, kLn2B, {1, h}, h);
  w.ln3_g = draw(seed, layer, kLn3G, {1, h}, h);
  w.ln3_b = draw(seed, layer, kLn3B, {1, h}, h);
  return w;
}

ModelChunk build_chunk(const ModelConfig& cfg, uint64_t seed, int begin, int end) {
  cfg.validate();
  if (begin < 0 || end > cfg.layers || begin >= end) {
    throw ConfigError("bad layer range [" + std::to_string(begin) + "," +
                      std::to_string(end) + ") for L=" + std::to_string(cfg.layers));
  }
  ModelChunk chunk;
  chunk.cfg = cfg;
  chunk.seed = seed;
  chunk.begin = begin;
  chunk.end = end;
  for (int l = begin; l < end; ++l) chunk.layers.push_back(build_layer(cfg, seed, l));
  if (chunk.is_first()) {
    chunk.w_in = draw(seed, cfg.layers, kPatchify, {cfg.channels, cfg.hidden}, cfg.channels);
  }
  if (chunk.is_last()) {
    chunk.w_out = draw(seed, cfg.layers, kHead, {cfg.hidden, cfg.channels}, cfg.hidden);
  }
  return chunk;
}

ModelChunk build_model(const ModelConfig& cfg, uint64_t seed) {
  return build_chunk(cfg, seed, 0, cfg.layers);
}

std::vector<ModelChunk> partition(const ModelConfig& cfg, uint64_t seed, int devices) {
  cfg.validate();
  if (devices < 1) throw PartitionError("device count must be >= 1");
  if (cfg.layers % devices != 0) {
    throw PartitionError("layers " + std::to_string(cfg.layers) +
                         " not divisible by devices " + std::to_string(devices));
  }
  const int per = cfg.layers / devices;
  std::vector<ModelChunk> chunks;
  chunks.reserve(static_cast<size_t>(devices));
  for (int j = 0; j < devices; ++j) {
    chunks.push_back(build_chunk(cfg, seed, j * per, (j + 1) * per));
  }
  return chunks;
}

Tensor build_context(const ModelConfig& cfg, uint64_t context_seed) {
  RandomSource rs(context_seed);
  return rs.normal_tensor({cfg.context_len, cfg.hidden});
}

Tensor position_embedding(int64_t pos, int hidden) {
  Tensor e({1, hidden});
  for (int i = 0; 2 * i < hidden; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / hidden);
    e.at(0, 2 * i) = std::sin(pos * freq);
    if (2 * i + 1 < hidden) e.at(0, 2 * i + 1) = std::cos(pos * freq);
  }
  return e;
}

Tensor timestep_embedding(int level, int hidden) {
  // Same sinusoid family with a fixed offset so timestep codes never
  // collide with position codes.
  return position_embedding(static_cast<int64_t>(level) + 1000000, hidden);
}

std::string cache_mismatch_report(const ModelChunk& chunk, const KVCacheEntry& cache,
                                  const RecomputeEntry& recorded) {
  if (cache.block_id != recorded.block_id) return "cache and recording cover different blocks";
  if (cache.per_layer.size() != chunk.layers.size() ||
      recorded.layer_inputs.size() != chunk.layers.size()) {
    return "layer count mismatch";
  }
  for (size_t li = 0; li < chunk.layers.size(); ++li) {
    const LayerWeights& w = chunk.layers[li];
    Tensor ln = ln_affine(recorded.layer_inputs[li], w.ln1_g, w.ln1_b);
    Tensor k = matmul(ln, w.wk);
    Tensor v = matmul(ln, w.wv);
    const LayerKV& kv = cache.per_layer[li];
    if (!kv.k.same_shape(k) || !kv.v.same_shape(v)) {
      return "cached kv geometry mismatch at layer " + std::to_string(chunk.begin + li);
    }
    for (size_t i = 0; i < k.data.size(); ++i) {
      if (std::memcmp(&k.data[i], &kv.k.data[i], sizeof(double)) != 0) {
        return "cached K diverges at layer " + std::to_string(chunk.begin + li) +
               " flat index " + std::to_string(i);
      }
      if (std::memcmp(&v.data[i], &kv.v.data[i], sizeof(double)) != 0) {
        return "cached V diverges at layer " + std::to_string(chunk.begin + li) +
               " flat index " + std::to_string(i);
      }
    }
  }
  return "";
}

Tensor self_attention_sublayer(const LayerWeights& w, const Tensor& x, int heads,
                               const Tensor* k_prefix, const Tensor* v_prefix) {
  Tensor q = matmul(x, w.wq);
  Tensor k = matmul(x, w.wk);
  Tensor v = matmul(x, w.wv);
  if (k_prefix != nullptr) {
    k = vcat_rows(*k_prefix, k);
    v = vcat_rows(*v_prefix, v);
  }
  return matmul(attention(q, k, v, heads), w.wo);
}

Tensor cross_attention_sublayer(const LayerWeights& w, const Tensor& x,
                                const Tensor& context, int heads) {
  Tensor q = matmul(x, w.cq);
  Tensor k = matmul(context, w.ck);
  Tensor v = matmul(context, w.cv);
  return matmul(attention(q, k, v, heads), w.co);
}

Tensor ffn_sublayer(const LayerWeights& w, const Tensor& x) {
  Tensor hmid = matmul(x, w.w1);
  for (double& val : hmid.data) val = gelu(val);
  return matmul(hmid, w.w2);
}

ChunkOutput forward_chunk(const ModelChunk& chunk, const ChunkInput& in,
                          const Tensor& context, CacheMode mode,
                          const KVCacheEntry* cache, const RecomputeEntry* recorded) {
  const ModelConfig& cfg = chunk.cfg;
  const int tpf = cfg.tokens_per_frame();
  const int64_t frames = static_cast<int64_t>(in.frame_levels.size());
  const int64_t tokens = frames * tpf;
  if (in.frame_ids.size() != in.frame_levels.size()) {
    throw DimensionError("frame_ids and frame_levels disagree");
  }

  // Token rows of the frames to snapshot for the next block.
  std::vector<int64_t> capture_rows;
  for (int f : in.capture_frames) {
    for (int t = 0; t < tpf; ++t) capture_rows.push_back(static_cast<int64_t>(f) * tpf + t);
  }

  Tensor x;
  if (chunk.is_first()) {
    if (in.payload.rows() != tokens || in.payload.cols() != cfg.channels) {
      throw DimensionError("chunk 0 expects [tokens, C] latents");
    }
    x = matmul(in.payload, *chunk.w_in);
    for (int64_t f = 0; f < frames; ++f) {
      const Tensor te = timestep_embedding(in.frame_levels[static_cast<size_t>(f)], cfg.hidden);
      for (int t = 0; t < tpf; ++t) {
        const int64_t row = f * tpf + t;
        const int64_t pos = in.frame_ids[static_cast<size_t>(f)] * tpf + t;
        const Tensor pe = position_embedding(pos, cfg.hidden);
        for (int64_t j = 0; j < cfg.hidden; ++j) {
          x.at(row, j) += pe.at(0, j) + te.at(0, j);
        }
      }
    }
  } else {
    if (in.payload.rows() != tokens || in.payload.cols() != cfg.hidden) {
      throw DimensionError("interior chunk expects [tokens, h] hidden state");
    }
    x = in.payload;
  }

  const bool use_prefix = (cache != nullptr) || (recorded != nullptr);
  if (mode == CacheMode::kDisabled && use_prefix) {
    throw CacheError("cache supplied while caching is disabled");
  }
  if (cache != nullptr &&
      cache->per_layer.size() != chunk.layers.size()) {
    throw CacheError("cache layer count mismatch");
  }
  if (recorded != nullptr &&
      recorded->layer_inputs.size() != chunk.layers.size()) {
    throw CacheError("recorded layer count mismatch");
  }

  ChunkOutput out;
  const bool capturing = !capture_rows.empty();
  if (capturing && mode == CacheMode::kCached) {
    out.captured.emplace();
    out.captured->captured_tokens = static_cast<int64_t>(capture_rows.size());
  }
  if (capturing && (mode == CacheMode::kRecompute || in.record_inputs)) {
    out.recorded.emplace();
    out.recorded->captured_tokens = static_cast<int64_t>(capture_rows.size());
  }

  for (size_t li = 0; li < chunk.layers.size(); ++li) {
    const LayerWeights& w = chunk.layers[li];

    if (out.recorded) out.recorded->layer_inputs.push_back(take_rows(x, capture_rows));

    // Self-attention; cached rows are prepended to the explicit rows so both
    // routes see the identical kv order.
    Tensor ln1 = ln_affine(x, w.ln1_g, w.ln1_b);
    Tensor k_prefix, v_prefix;
    bool have_prefix = false;
    if (cache != nullptr) {
      const LayerKV& kv = cache->per_layer[li];
      if (kv.k.rows() != cache->captured_tokens || kv.k.cols() != cfg.hidden) {
        throw CacheError("cached kv geometry mismatch at layer " + std::to_string(li));
      }
      k_prefix = kv.k;
      v_prefix = kv.v;
      have_prefix = true;
    } else if (recorded != nullptr) {
      Tensor ln_prev = ln_affine(recorded->layer_inputs[li], w.ln1_g, w.ln1_b);
      k_prefix = matmul(ln_prev, w.wk);
      v_prefix = matmul(ln_prev, w.wv);
      have_prefix = true;
    }
    Tensor attn = self_attention_sublayer(w, ln1, cfg.heads,
                                          have_prefix ? &k_prefix : nullptr,
                                          have_prefix ? &v_prefix : nullptr);
    if (out.captured) {
      // Fresh K,V of the captured rows, exactly as used in this pass.
      Tensor k_rows = take_rows(matmul(ln1, w.wk), capture_rows);
      Tensor v_rows = take_rows(matmul(ln1, w.wv), capture_rows);
      out.captured->per_layer.push_back(LayerKV{std::move(k_rows), std::move(v_rows)});
    }
    x = add(x, attn);

    Tensor ln2 = ln_affine(x, w.ln2_g, w.ln2_b);
    x = add(x, cross_attention_sublayer(w, ln2, context, cfg.heads));

    Tensor ln3 = ln_affine(x, w.ln3_g, w.ln3_b);
    x = add(x, ffn_sublayer(w, ln3));
  }

  out.payload = chunk.is_last() ? matmul(x, *chunk.w_out) : std::move(x);
  return out;
}

Tensor scheduler_step(const Tensor& x_t, const Tensor& eps_t, int level, int steps) {
  if (!x_t.same_shape(eps_t)) throw SchedulerError("x and eps shapes disagree");
  if (level < 1 || level > steps) {
    throw SchedulerError("level " + std::to_string(level) + " outside 1.." +
                         std::to_string(steps));
  }
  return sub(x_t, scale(eps_t, 1.0 / static_cast<double>(steps)));
}

}  // namespace blockpipe
