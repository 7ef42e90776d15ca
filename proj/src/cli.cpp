#include "blockpipe/cli.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "blockpipe/analytics.hpp"
#include "blockpipe/artifacts.hpp"
#include "blockpipe/errors.hpp"
#include "blockpipe/run_config.hpp"

namespace blockpipe {

namespace {

using json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Shared config flags for run/verify. String-typed enum flags are converted
// after parsing so a bad token surfaces as a config error, not a CLI11 one.
struct ConfigFlags {
  std::string order, cache, mode, strategy;

  void attach(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--devices,-N", cfg.pipe.devices, "simulated device count");
    cmd->add_option("--order", order, "reverse | sequential");
    cmd->add_option("--cache", cache, "on | off | recompute");
    cmd->add_option("--mode", mode, "threaded | single");
    cmd->add_option("--num-b", cfg.pipe.queue.num_b, "frames per block");
    cmd->add_option("--num-c", cfg.pipe.queue.num_c, "context frames (even)");
    cmd->add_option("--steps,-T", cfg.pipe.queue.steps, "denoising steps");
    cmd->add_option("--blocks", cfg.pipe.queue.block_num, "total blocks to generate");
    cmd->add_option("--layers,-L", cfg.pipe.model.layers, "DiT layers");
    cmd->add_option("--hidden", cfg.pipe.model.hidden, "hidden size");
    cmd->add_option("--heads", cfg.pipe.model.heads, "attention heads");
    cmd->add_option("--channels", cfg.pipe.model.channels, "latent channels");
    cmd->add_option("--height", cfg.pipe.model.height, "token grid height");
    cmd->add_option("--width", cfg.pipe.model.width, "token grid width");
    cmd->add_option("--context-len", cfg.pipe.model.context_len, "cross-attn context length");
    cmd->add_option("--strategy", strategy,
                    "coordinated | complete-shuffle | subset | fresh | repeat");
    cmd->add_option("--seed-model", cfg.pipe.seed_model, "model weight seed");
    cmd->add_option("--seed-noise", cfg.pipe.seed_noise, "noise pool seed");
    cmd->add_option("--seed-context", cfg.pipe.seed_context, "context seed");
    cmd->add_flag("--retain-context,!--no-retain-context",
                  cfg.pipe.queue.retain_clean_context,
                  "keep popped tail frames as head context (default on)");
    cmd->add_option("--out", cfg.out_dir, "artifact directory");
    cmd->add_flag("--emit-first-surplus,!--trim-first-surplus", cfg.emit_first_surplus,
                  "keep the first block's built-in context frames in latents.bin");
    cmd->add_option("--format", cfg.format, "json | text | csv");
  }

  void apply(RunConfig& cfg) const {
    if (!order.empty()) cfg.pipe.order = parse_order(order);
    if (!cache.empty()) cfg.pipe.cache_mode = parse_cache(cache);
    if (!strategy.empty()) cfg.pipe.strategy = parse_strategy(strategy);
    if (!mode.empty()) {
      if (mode == "threaded") cfg.pipe.threaded = true;
      else if (mode == "single") cfg.pipe.threaded = false;
      else throw ConfigError("mode must be threaded or single");
    }
  }
};

RunConfig preload_config(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return load_run_config(args[i + 1]);
    if (args[i].rfind("--config=", 0) == 0) return load_run_config(args[i].substr(9));
  }
  // Defaults, possibly reseeded from the environment.
  return run_config_from_json_text("{}");
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
  const std::string summary = run_and_write_artifacts(cfg);
  out << "wrote " << summary << "\n";
  return 0;
}

// ---- verify ------------------------------------------------------------

struct CheckTable {
  std::ostream& out;
  bool all_ok = true;

  void report(const std::string& name, bool ok, const std::string& detail) {
    all_ok &= ok;
    out << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) out << " — " << detail;
    out << "\n";
  }

  void run(const std::string& name, const std::function<std::string()>& body) {
    try {
      const std::string detail = body();
      report(name, true, detail);
    } catch (const std::exception& e) {
      report(name, false, e.what());
    }
  }
};

PipelineConfig small_pipe() {
  PipelineConfig p;
  p.model.layers = 4;
  p.model.hidden = 8;
  p.model.heads = 2;
  p.model.channels = 2;
  p.model.height = 2;
  p.model.width = 2;
  p.model.context_len = 3;
  p.queue.num_b = 2;
  p.queue.num_c = 4;
  p.queue.steps = 4;
  p.queue.block_num = 4;
  p.threaded = false;
  return p;
}

int cmd_verify(const RunConfig& cfg, bool fault_inject, std::ostream& out) {
  CheckTable t{out};

  t.run("configured pipeline matches its serial oracle", [&] {
    PipelineConfig p = cfg.pipe;
    p.validate();
    const RunResult got = run_pipeline(p);
    const RunResult want = serial_oracle(p);
    std::string diff;
    if (!blocks_bitwise_equal(got.blocks, want.blocks, &diff)) throw std::runtime_error(diff);
    return std::string("bitwise equal (N=") + std::to_string(p.devices) + ")";
  });

  t.run("pipeline matches serial oracle", [&] {
    int compared = 0;
    for (int n : {1, 2, 4}) {
      for (CacheMode mode : {CacheMode::kDisabled, CacheMode::kCached}) {
        PipelineConfig p = small_pipe();
        p.devices = n;
        p.cache_mode = mode;
        const RunResult got = run_pipeline(p);
        const RunResult want = serial_oracle(p);
        std::string diff;
        if (!blocks_bitwise_equal(got.blocks, want.blocks, &diff)) {
          throw std::runtime_error("N=" + std::to_string(n) + " cache=" +
                                   cache_token(mode) + ": " + diff);
        }
        ++compared;
      }
    }
    return std::to_string(compared) + " configurations bitwise equal";
  });

  t.run("threaded matches single-threaded reference", [&] {
    PipelineConfig p = small_pipe();
    p.devices = 2;
    p.threaded = true;
    const RunResult a = run_pipeline(p);
    p.threaded = false;
    const RunResult b = run_pipeline(p);
    std::string diff;
    if (!blocks_bitwise_equal(a.blocks, b.blocks, &diff)) throw std::runtime_error(diff);
    return std::string("bitwise equal");
  });

  t.run("feature cache matches explicit recompute", [&] {
    PipelineConfig p = small_pipe();
    p.devices = 2;
    p.queue.steps = 6;
    p.queue.block_num = 5;
    p.cache_mode = CacheMode::kCached;
    p.fault_inject_ulp = fault_inject;
    p.record_trace = true;
    p.check_cache = true;  // per-pass dual-route audit of every cached row
    const RunResult cached = run_pipeline(p);
    p.cache_mode = CacheMode::kRecompute;
    p.fault_inject_ulp = false;
    p.check_cache = false;
    const RunResult recomputed = run_pipeline(p);
    std::string diff;
    if (!blocks_bitwise_equal(cached.blocks, recomputed.blocks, &diff)) {
      throw std::runtime_error(diff);
    }
    if (!traces_bitwise_equal(cached.trace, recomputed.trace, &diff)) {
      throw std::runtime_error(diff);
    }
    return std::string("latents, pass outputs and cached rows bitwise equal");
  });

  t.run("processing order changes timing, not math (cache off)", [&] {
    PipelineConfig p = small_pipe();
    p.devices = 2;
    p.cache_mode = CacheMode::kDisabled;
    p.order = Order::kReverse;
    const RunResult rev = run_pipeline(p);
    p.order = Order::kSequential;
    const RunResult seq = run_pipeline(p);
    std::string diff;
    if (!blocks_bitwise_equal(rev.blocks, seq.blocks, &diff)) throw std::runtime_error(diff);
    return std::string("bitwise equal");
  });

  t.run("coordinated noise: no window repeats, full coverage", [&] {
    const int num_b = 8, num_c = 8;
    NoisePool pool = build_pool(num_b, num_c, {2, 2, 1}, 99);
    RandomSource rng(7);
    NoiseDraw cur = init_first_block(pool, rng);
    for (int i = 0; i < 300; ++i) {
      std::vector<int> window(cur.noise_ids.end() - num_c / 2, cur.noise_ids.end());
      NoiseDraw next = init_next_block(pool, window, rng);
      std::set<int> seen(window.begin(), window.end());
      for (int id : next.noise_ids) {
        if (!seen.insert(id).second) throw std::runtime_error("repeat in append " +
                                                              std::to_string(i));
      }
      if (static_cast<int>(seen.size()) != pool.size()) {
        throw std::runtime_error("coverage hole in append " + std::to_string(i));
      }
      cur = std::move(next);
    }
    return std::string("300 appends clean");
  });

  t.run("bubble formulas match the measured schedule", [&] {
    std::ostringstream detail;
    for (auto [n, steps, blocks] : {std::tuple{1, 4, 4}, {2, 8, 6}, {4, 8, 8}}) {
      PipelineConfig p = small_pipe();
      p.devices = n;
      p.queue.steps = steps;
      p.queue.block_num = blocks;
      const RunResult r = run_pipeline(p);
      const BubbleStats st = measure_bubbles(r.log);
      BubbleParams bp{n, steps, blocks, Order::kReverse};
      const int64_t expect_busy = static_cast<int64_t>(steps) * blocks;
      if (st.busy_per_device != expect_busy) {
        throw std::runtime_error("busy slots diverge at N=" + std::to_string(n));
      }
      if (st.steady_idle != 0) {
        throw std::runtime_error("steady idle nonzero at N=" + std::to_string(n));
      }
      if (std::llabs(st.idle_per_device - bubble_size(bp)) > n) {
        throw std::runtime_error("idle " + std::to_string(st.idle_per_device) +
                                 " too far from " + std::to_string(bubble_size(bp)));
      }
      detail << "N" << n << ":" << st.idle_per_device << "/" << bubble_size(bp) << " ";
    }
    return "idle vs formula " + detail.str();
  });

  t.run("invalid partitions fail cleanly", [&] {
    PipelineConfig p = small_pipe();
    p.devices = 3;  // 4 layers
    try {
      run_pipeline(p);
    } catch (const ConfigError&) {
      return std::string("config error raised");
    }
    throw std::runtime_error("config error not raised");
  });

  return t.all_ok ? 0 : 1;
}

// ---- analyze -----------------------------------------------------------

std::vector<int64_t> parse_i64_list(const std::string& csv) {
  std::vector<int64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoll(item));
  }
  if (out.empty()) throw ConfigError("empty list: " + csv);
  return out;
}

void print_cost_row(std::ostream& out, const MethodCost& c) {
  out << std::left << std::setw(16) << method_name(c.method) << std::right
      << std::setw(16) << fmt(c.comm_scalars) << std::setw(9)
      << (c.comm_overlap ? "yes" : "no") << std::setw(14) << fmt(c.model_mem)
      << std::setw(14) << fmt(c.kv_mem) << "\n";
}

void print_cost_header(std::ostream& out) {
  out << std::left << std::setw(16) << "method" << std::right << std::setw(16)
      << "comm_scalars" << std::setw(9) << "overlap" << std::setw(14) << "model_mem"
      << std::setw(14) << "kv_mem" << "\n";
}

json cost_json(const MethodCost& c) {
  return {{"method", method_name(c.method)},
          {"comm_scalars", c.comm_scalars},
          {"comm_overlap", c.comm_overlap},
          {"model_mem", c.model_mem},
          {"kv_mem", c.kv_mem}};
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    CLI::App app{"block-wise denoising pipeline simulator"};
    app.require_subcommand(1);

    RunConfig cfg = preload_config(args);
    std::string config_path;
    ConfigFlags run_flags, verify_flags;
    bool fault_inject = false;

    CLI::App* run = app.add_subcommand("run", "run the pipeline and write artifacts");
    run->add_option("--config", config_path, "JSON config file");
    run_flags.attach(run, cfg);

    CLI::App* verify = app.add_subcommand("verify", "oracle equivalence and invariant checks");
    verify->add_option("--config", config_path, "JSON config file");
    verify->add_flag("--fault-inject", fault_inject,
                     "perturb one cached value by 1 ulp to prove test sensitivity");
    verify_flags.attach(verify, cfg);

    CLI::App* analyze = app.add_subcommand("analyze", "closed-form formulas and sweeps");
    analyze->require_subcommand(1);

    BubbleParams bp{4, 50, 4, Order::kReverse};
    std::string bubble_order = "reverse";
    CLI::App* bubble = analyze->add_subcommand("bubble", "pipeline bubble ratio");
    bubble->add_option("--N", bp.devices, "device count");
    bubble->add_option("--T", bp.steps, "denoising steps");
    bubble->add_option("--blocks", bp.block_num, "total blocks");
    bubble->add_option("--order", bubble_order, "reverse | sequential");
    bubble->add_option("--format", cfg.format, "json | text");

    CostParams cp;
    std::string cost_method = "all";
    CLI::App* costs = analyze->add_subcommand("costs", "per-method communication/memory");
    costs->add_option("--method", cost_method,
                      "ring-attention | ulysses | video-infinity | fifo | dualparal | all");
    costs->add_option("--frames,-F", cp.frames, "frame count F");
    costs->add_option("--height", cp.height, "token grid H'");
    costs->add_option("--width", cp.width, "token grid W'");
    costs->add_option("--hidden", cp.hidden, "hidden size h");
    costs->add_option("--channels", cp.channels, "latent channels C");
    costs->add_option("--layers,-L", cp.layers, "layers L");
    costs->add_option("--devices,-N", cp.devices, "device count N");
    costs->add_option("--num-b", cp.num_b, "frames per block");
    costs->add_option("--num-c", cp.num_c, "context frames");
    costs->add_option("--model-mem", cp.model_mem, "total model memory units W");
    costs->add_option("--kv-mem", cp.kv_mem, "per-frame kv memory units KV");
    costs->add_flag("--ring-refinement", cp.ring_refinement,
                    "use the exact (N-1)/N ring attention factor");
    costs->add_option("--format", cfg.format, "json | text");

    std::string sweep_blocks, sweep_devices_csv, sweep_frames_csv, sweep_methods = "all";
    CLI::App* sweep = analyze->add_subcommand("sweep", "scaling sweeps");
    sweep->add_option("--blocks", sweep_blocks, "bubble ratio over block counts (csv)");
    sweep->add_option("--devices", sweep_devices_csv, "cost sweep over device counts (csv)");
    sweep->add_option("--frames", sweep_frames_csv, "cost sweep over frame counts (csv)");
    sweep->add_option("--methods", sweep_methods, "method list or all");
    sweep->add_option("--N", bp.devices, "device count for bubble sweeps");
    sweep->add_option("--T", bp.steps, "steps for bubble sweeps");
    sweep->add_option("--hidden", cp.hidden, "hidden size for cost sweeps");
    sweep->add_option("--num-b", cp.num_b, "frames per block for cost sweeps");
    sweep->add_option("--num-c", cp.num_c, "context frames for cost sweeps");
    sweep->add_option("--model-mem", cp.model_mem, "model memory units");
    sweep->add_option("--kv-mem", cp.kv_mem, "per-frame kv memory units");
    sweep->add_option("--format", cfg.format, "json | text | csv");

    CLI::App* noise = app.add_subcommand("noise-demo", "show noise strategies side by side");
    std::string demo_strategy = "coordinated";
    int demo_appends = 5, demo_num_b = 4, demo_num_c = 4;
    uint64_t demo_seed = 2;
    noise->add_option("--strategy", demo_strategy, "strategy variant");
    noise->add_option("--appends", demo_appends, "number of appended blocks");
    noise->add_option("--num-b", demo_num_b, "frames per block");
    noise->add_option("--num-c", demo_num_c, "context frames");
    noise->add_option("--seed", demo_seed, "pool/shuffle seed");

    std::vector<std::string> cli_args(args.rbegin(), args.rend());
    try {
      app.parse(cli_args);
    } catch (const CLI::ParseError& e) {
      std::ostringstream dummy;
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 2;
    }

    if (run->parsed()) {
      run_flags.apply(cfg);
      cfg.validate();
      return cmd_run(cfg, out);
    }

    if (verify->parsed()) {
      verify_flags.apply(cfg);
      return cmd_verify(cfg, fault_inject, out);
    }

    if (analyze->parsed()) {
      if (cfg.format != "json" && cfg.format != "text" && cfg.format != "csv") {
        throw ConfigError("format must be json, text or csv");
      }
      if (bubble->parsed()) {
        bp.order = parse_order(bubble_order);
        const double ratio = bubble_ratio(bp);
        if (cfg.format == "json") {
          json j{{"N", bp.devices},        {"T", bp.steps},
                 {"blocks", bp.block_num}, {"order", order_token(bp.order)},
                 {"size", bubble_size(bp)}, {"ratio", ratio}};
          out << j.dump(2) << "\n";
        } else {
          out << "bubble N=" << bp.devices << " T=" << bp.steps << " blocks=" << bp.block_num
              << " order=" << order_token(bp.order) << " size=" << bubble_size(bp)
              << " ratio=" << fmt(ratio) << "\n";
        }
        return 0;
      }
      if (costs->parsed()) {
        std::vector<Method> ms = cost_method == "all"
                                     ? all_methods()
                                     : std::vector<Method>{parse_method(cost_method)};
        if (cfg.format == "json") {
          json rows = json::array();
          for (Method m : ms) rows.push_back(cost_json(method_cost(m, cp)));
          out << rows.dump(2) << "\n";
        } else {
          print_cost_header(out);
          for (Method m : ms) print_cost_row(out, method_cost(m, cp));
        }
        return 0;
      }
      if (sweep->parsed()) {
        if (!sweep_blocks.empty()) {
          const std::vector<int64_t> blocks = parse_i64_list(sweep_blocks);
          if (cfg.format == "csv") out << "blocks,ratio\n";
          json rows = json::array();
          for (int64_t b : blocks) {
            BubbleParams p = bp;
            p.block_num = b;
            const double ratio = bubble_ratio(p);
            if (cfg.format == "csv") {
              out << b << "," << fmt(ratio) << "\n";
            } else if (cfg.format == "json") {
              rows.push_back({{"blocks", b}, {"ratio", ratio}});
            } else {
              out << "blocks=" << std::setw(10) << b << "  ratio=" << fmt(ratio) << "\n";
            }
          }
          if (cfg.format == "json") out << rows.dump(2) << "\n";
          return 0;
        }
        std::vector<Method> ms = sweep_methods == "all"
                                     ? all_methods()
                                     : std::vector<Method>{parse_method(sweep_methods)};
        std::vector<SweepPoint> points;
        if (!sweep_devices_csv.empty()) {
          points = sweep_devices(cp, ms, parse_i64_list(sweep_devices_csv));
        } else if (!sweep_frames_csv.empty()) {
          points = sweep_frames(cp, ms, parse_i64_list(sweep_frames_csv));
        } else {
          throw ConfigError("sweep needs --blocks, --devices or --frames");
        }
        if (cfg.format == "csv") {
          out << "axis,value,method,comm_scalars,overlap,model_mem,kv_mem\n";
          for (const SweepPoint& p : points) {
            out << p.axis << "," << p.value << "," << method_name(p.cost.method) << ","
                << fmt(p.cost.comm_scalars) << "," << (p.cost.comm_overlap ? 1 : 0) << ","
                << fmt(p.cost.model_mem) << "," << fmt(p.cost.kv_mem) << "\n";
          }
        } else if (cfg.format == "json") {
          json rows = json::array();
          for (const SweepPoint& p : points) {
            json row = cost_json(p.cost);
            row["axis"] = p.axis;
            row["value"] = p.value;
            rows.push_back(std::move(row));
          }
          out << rows.dump(2) << "\n";
        } else {
          for (const SweepPoint& p : points) {
            out << p.axis << "=" << std::setw(8) << p.value << "  ";
            print_cost_row(out, p.cost);
          }
        }
        return 0;
      }
    }

    if (noise->parsed()) {
      const InitStrategy strategy = parse_strategy(demo_strategy);
      NoisePool pool = build_pool(demo_num_b, demo_num_c, {2, 2, 1}, demo_seed);
      RandomSource rng(derive_seed(demo_seed, {1}));
      NoiseDraw cur = draw_first_block(strategy, pool, rng);
      auto ids_str = [](const std::vector<int>& ids) {
        std::string s = "[";
        for (size_t i = 0; i < ids.size(); ++i) {
          if (i) s += " ";
          s += std::to_string(ids[i]);
        }
        return s + "]";
      };
      out << "strategy=" << strategy_name(strategy) << " pool=" << pool.size() << "\n";
      out << "block 1 ids=" << ids_str(cur.noise_ids) << "\n";
      for (int i = 2; i <= demo_appends + 1; ++i) {
        std::vector<int> window;
        const int w = demo_num_c / 2;
        if (w > 0 && static_cast<int>(cur.noise_ids.size()) >= w) {
          window.assign(cur.noise_ids.end() - w, cur.noise_ids.end());
        }
        NoiseDraw next = draw_next_block(strategy, pool, window, rng);
        int overlaps = 0;
        for (int id : next.noise_ids) {
          for (int t : window) overlaps += (id == t) ? 1 : 0;
        }
        out << "block " << i << " ids=" << ids_str(next.noise_ids)
            << " window=" << ids_str(window) << " overlap=" << overlaps << "\n";
        cur = std::move(next);
      }
      return 0;
    }

    err << "no subcommand selected\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace blockpipe
