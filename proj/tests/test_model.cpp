#include <cmath>
#include <vector>

#include <doctest.h>

#include "blockpipe/errors.hpp"
#include "blockpipe/model.hpp"

using namespace blockpipe;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.channels = 2;
  cfg.height = 1;
  cfg.width = 1;
  cfg.context_len = 3;
  return cfg;
}

// Reference forward, written from the layer contract with raw tensor ops
// only: per layer x += self_attn(ln1(x)); x += cross_attn(ln2(x));
// x += ffn(ln3(x)); entry embeddings on the first layer, head after the
// last. Shares no code with forward_chunk beyond the tensor primitives.
Tensor affine(const Tensor& x, const Tensor& g, const Tensor& b) {
  Tensor y = layer_norm(x, 1e-5);
  for (int64_t i = 0; i < y.rows(); ++i) {
    for (int64_t j = 0; j < y.cols(); ++j) y.at(i, j) = y.at(i, j) * g.at(0, j) + b.at(0, j);
  }
  return y;
}

Tensor ref_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const int64_t m = q.rows(), h = q.cols(), mkv = k.rows();
  const int64_t dh = h / heads;
  Tensor out({m, h});
  for (int hd = 0; hd < heads; ++hd) {
    Tensor scores({m, mkv});
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < mkv; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < dh; ++t) acc += q.at(i, hd * dh + t) * k.at(j, hd * dh + t);
        scores.at(i, j) = acc / std::sqrt(static_cast<double>(dh));
      }
    }
    Tensor attn = softmax_rows(scores);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t t = 0; t < dh; ++t) {
        double acc = 0.0;
        for (int64_t j = 0; j < mkv; ++j) acc += attn.at(i, j) * v.at(j, hd * dh + t);
        out.at(i, hd * dh + t) = acc;
      }
    }
  }
  return out;
}

Tensor ref_forward(const ModelChunk& model, const ChunkInput& in, const Tensor& context) {
  const ModelConfig& cfg = model.cfg;
  Tensor x = matmul(in.payload, *model.w_in);
  const int tpf = cfg.tokens_per_frame();
  for (size_t f = 0; f < in.frame_levels.size(); ++f) {
    Tensor te = timestep_embedding(in.frame_levels[f], cfg.hidden);
    for (int t = 0; t < tpf; ++t) {
      const int64_t row = static_cast<int64_t>(f) * tpf + t;
      Tensor pe = position_embedding(in.frame_ids[f] * tpf + t, cfg.hidden);
      for (int64_t j = 0; j < cfg.hidden; ++j) x.at(row, j) += pe.at(0, j) + te.at(0, j);
    }
  }
  for (const LayerWeights& w : model.layers) {
    Tensor ln1 = affine(x, w.ln1_g, w.ln1_b);
    Tensor attn = ref_attention(matmul(ln1, w.wq), matmul(ln1, w.wk), matmul(ln1, w.wv),
                                cfg.heads);
    x = add(x, matmul(attn, w.wo));
    Tensor ln2 = affine(x, w.ln2_g, w.ln2_b);
    Tensor cross = ref_attention(matmul(ln2, w.cq), matmul(context, w.ck),
                                 matmul(context, w.cv), cfg.heads);
    x = add(x, matmul(cross, w.co));
    Tensor ln3 = affine(x, w.ln3_g, w.ln3_b);
    Tensor mid = matmul(ln3, w.w1);
    for (double& v : mid.data) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    x = add(x, matmul(mid, w.w2));
  }
  return matmul(x, *model.w_out);
}

}  // namespace

TEST_CASE("build is deterministic and seed-sensitive") {
  ModelConfig cfg = tiny_cfg();
  ModelChunk a = build_model(cfg, 1);
  ModelChunk b = build_model(cfg, 1);
  CHECK(a.layers[0].wq.bitwise_equal(b.layers[0].wq));
  CHECK(a.layers[1].w2.bitwise_equal(b.layers[1].w2));
  CHECK(a.w_in->bitwise_equal(*b.w_in));

  ModelChunk c = build_model(cfg, 2);
  bool any_differ = !a.layers[0].wq.bitwise_equal(c.layers[0].wq) ||
                    !a.layers[0].w1.bitwise_equal(c.layers[0].w1);
  CHECK(any_differ);
}

TEST_CASE("chunked build reassembles to the monolithic build") {
  ModelConfig cfg = tiny_cfg();
  cfg.layers = 8;
  ModelChunk mono = build_model(cfg, 7);
  std::vector<ModelChunk> parts = partition(cfg, 7, 4);
  REQUIRE(parts.size() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(parts[j].begin == 2 * j);
    CHECK(parts[j].end == 2 * j + 2);
    for (int l = 0; l < 2; ++l) {
      CHECK(parts[j].layers[l].wq.bitwise_equal(mono.layers[2 * j + l].wq));
      CHECK(parts[j].layers[l].ln3_b.bitwise_equal(mono.layers[2 * j + l].ln3_b));
    }
  }
  CHECK(parts[0].w_in.has_value());
  CHECK(!parts[0].w_out.has_value());
  CHECK(parts[3].w_out.has_value());
  CHECK(parts[3].w_out->bitwise_equal(*mono.w_out));
}

TEST_CASE("partition ranges and errors") {
  ModelConfig cfg = tiny_cfg();
  cfg.layers = 8;
  std::vector<ModelChunk> one = partition(cfg, 1, 1);
  CHECK(one.size() == 1);
  CHECK(one[0].begin == 0);
  CHECK(one[0].end == 8);

  cfg.layers = 6;
  CHECK_THROWS_AS(partition(cfg, 1, 4), PartitionError);
}

TEST_CASE("no-cache forward equals the reference transformer") {
  ModelConfig cfg = tiny_cfg();
  ModelChunk model = build_model(cfg, 5);
  Tensor context = build_context(cfg, 11);

  RandomSource rs(21);
  ChunkInput in;
  in.payload = rs.normal_tensor({2, cfg.channels});  // two frames, one token each
  in.frame_levels = {4, 4};
  in.frame_ids = {0, 1};

  ChunkOutput got = forward_chunk(model, in, context, CacheMode::kDisabled, nullptr, nullptr);
  Tensor want = ref_forward(model, in, context);
  CHECK(got.payload.bitwise_equal(want));
}

TEST_CASE("chunked forward equals monolithic forward") {
  ModelConfig cfg = tiny_cfg();
  cfg.layers = 4;
  ModelChunk mono = build_model(cfg, 9);
  std::vector<ModelChunk> parts = partition(cfg, 9, 2);
  Tensor context = build_context(cfg, 13);

  RandomSource rs(33);
  ChunkInput in;
  in.payload = rs.normal_tensor({3, cfg.channels});
  in.frame_levels = {2, 2, 2};
  in.frame_ids = {5, 6, 7};

  ChunkOutput whole = forward_chunk(mono, in, context, CacheMode::kDisabled, nullptr, nullptr);

  ChunkOutput first = forward_chunk(parts[0], in, context, CacheMode::kDisabled, nullptr, nullptr);
  ChunkInput second = in;
  second.payload = first.payload;
  ChunkOutput last = forward_chunk(parts[1], second, context, CacheMode::kDisabled, nullptr, nullptr);

  CHECK(last.payload.bitwise_equal(whole.payload));
}

TEST_CASE("cached path equals explicit recompute oracle") {
  // Previous block's pass captures either K,V (cached route) or its layer
  // inputs (recompute route); the next block's outputs must agree bitwise.
  ModelConfig cfg = tiny_cfg();
  ModelChunk model = build_model(cfg, 17);
  Tensor context = build_context(cfg, 19);
  RandomSource rs(23);

  ChunkInput prev;
  prev.payload = rs.normal_tensor({2, cfg.channels});  // num_b = 2 frames
  prev.frame_levels = {5, 5};
  prev.frame_ids = {4, 5};
  prev.capture_frames = {0};  // num_c/2 = 1 frame snapshot

  ChunkOutput cap = forward_chunk(model, prev, context, CacheMode::kCached, nullptr, nullptr);
  REQUIRE(cap.captured.has_value());
  ChunkOutput rec = forward_chunk(model, prev, context, CacheMode::kRecompute, nullptr, nullptr);
  REQUIRE(rec.recorded.has_value());
  CHECK(cap.payload.bitwise_equal(rec.payload));

  ChunkInput cur;
  cur.payload = rs.normal_tensor({3, cfg.channels});  // 1 ctx frame + 2 own frames
  cur.frame_levels = {4, 4, 4};
  cur.frame_ids = {1, 2, 3};

  ChunkOutput via_cache =
      forward_chunk(model, cur, context, CacheMode::kCached, &*cap.captured, nullptr);
  ChunkOutput via_recompute =
      forward_chunk(model, cur, context, CacheMode::kRecompute, nullptr, &*rec.recorded);
  CHECK(via_cache.payload.bitwise_equal(via_recompute.payload));

  // Double capture: re-running the capturing pass reproduces the cache rows.
  ChunkOutput cap2 = forward_chunk(model, prev, context, CacheMode::kCached, nullptr, nullptr);
  for (size_t l = 0; l < cap.captured->per_layer.size(); ++l) {
    CHECK(cap.captured->per_layer[l].k.bitwise_equal(cap2.captured->per_layer[l].k));
    CHECK(cap.captured->per_layer[l].v.bitwise_equal(cap2.captured->per_layer[l].v));
  }

  // Sensitivity: a single-ulp perturbation in the cache must change the output.
  KVCacheEntry tampered = *cap.captured;
  double& v0 = tampered.per_layer[0].v.data[0];
  v0 = std::nextafter(v0, 1e308);
  ChunkOutput via_tampered =
      forward_chunk(model, cur, context, CacheMode::kCached, &tampered, nullptr);
  CHECK(!via_tampered.payload.bitwise_equal(via_cache.payload));
}

TEST_CASE("zeroed cache moves self-attention but not per-token sublayers") {
  ModelConfig cfg = tiny_cfg();
  ModelChunk model = build_model(cfg, 29);
  Tensor context = build_context(cfg, 31);
  RandomSource rs(37);
  Tensor x = rs.normal_tensor({3, cfg.hidden});
  Tensor kp = rs.normal_tensor({2, cfg.hidden});
  Tensor vp = rs.normal_tensor({2, cfg.hidden});
  Tensor vz({2, cfg.hidden});

  const LayerWeights& w = model.layers[0];
  Tensor with_v = self_attention_sublayer(w, x, cfg.heads, &kp, &vp);
  Tensor with_zero = self_attention_sublayer(w, x, cfg.heads, &kp, &vz);
  CHECK(!with_v.bitwise_equal(with_zero));

  CHECK(cross_attention_sublayer(w, x, context, cfg.heads)
            .bitwise_equal(cross_attention_sublayer(w, x, context, cfg.heads)));
  CHECK(ffn_sublayer(w, x).bitwise_equal(ffn_sublayer(w, x)));
}

TEST_CASE("per-token sublayers commute with row permutation") {
  ModelConfig cfg = tiny_cfg();
  ModelChunk model = build_model(cfg, 41);
  Tensor context = build_context(cfg, 43);
  RandomSource rs(47);
  Tensor x = rs.normal_tensor({4, cfg.hidden});
  const std::vector<int64_t> perm = {2, 0, 3, 1};
  Tensor xp = take_rows(x, perm);

  const LayerWeights& w = model.layers[1];
  CHECK(take_rows(cross_attention_sublayer(w, x, context, cfg.heads), perm)
            .bitwise_equal(cross_attention_sublayer(w, xp, context, cfg.heads)));
  CHECK(take_rows(ffn_sublayer(w, x), perm).bitwise_equal(ffn_sublayer(w, xp)));
  CHECK(take_rows(layer_norm(x, 1e-5), perm).bitwise_equal(layer_norm(xp, 1e-5)));
}

TEST_CASE("timestep embedding is injective over the ladder") {
  const int hidden = 8, steps = 50;
  for (int a = 0; a <= steps; ++a) {
    for (int b = a + 1; b <= steps; ++b) {
      CHECK(!timestep_embedding(a, hidden).bitwise_equal(timestep_embedding(b, hidden)));
    }
  }
}

TEST_CASE("scheduler zero update") {
  Tensor x({2, 2}, {1, 2, 3, 4});
  Tensor eps({2, 2});
  CHECK(scheduler_step(x, eps, 3, 8).bitwise_equal(x));
}

TEST_CASE("scheduler telescopes to zero under a constant model") {
  const int steps = 10;
  Tensor eps({1, 3}, {0.5, -1.5, 2.0});
  Tensor x = eps;
  for (int t = steps; t >= 1; --t) x = scheduler_step(x, eps, t, steps);
  for (double v : x.data) CHECK(std::abs(v) <= 1e-13);
}

TEST_CASE("scheduler closed form at T=50") {
  RandomSource rs(71);
  Tensor x = rs.normal_tensor({2, 3});
  Tensor eps = rs.normal_tensor({2, 3});
  Tensor got = scheduler_step(x, eps, 25, 50);
  for (size_t i = 0; i < x.data.size(); ++i) {
    CHECK(got.data[i] == x.data[i] - 0.02 * eps.data[i]);
  }
}

TEST_CASE("scheduler rejects out-of-range levels") {
  Tensor x({1, 1}, {1.0});
  CHECK_THROWS_AS(scheduler_step(x, x, 0, 8), SchedulerError);
  CHECK_THROWS_AS(scheduler_step(x, x, 9, 8), SchedulerError);
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_cfg();
  cfg.heads = 3;  // does not divide hidden=8
  CHECK_THROWS_AS(build_model(cfg, 1), ConfigError);
}
