#include "blockpipe/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "blockpipe/errors.hpp"

namespace blockpipe {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  pipe.validate();
  if (format != "json" && format != "text" && format != "csv") {
    throw ConfigError("format must be json, text or csv");
  }
}

std::string order_token(Order o) {
  return o == Order::kReverse ? "reverse" : "sequential";
}

Order parse_order(const std::string& s) {
  if (s == "reverse") return Order::kReverse;
  if (s == "sequential") return Order::kSequential;
  throw ConfigError("order must be reverse or sequential, got " + s);
}

std::string cache_token(CacheMode m) {
  switch (m) {
    case CacheMode::kDisabled: return "off";
    case CacheMode::kCached: return "on";
    case CacheMode::kRecompute: return "recompute";
  }
  return "?";
}

CacheMode parse_cache(const std::string& s) {
  if (s == "off") return CacheMode::kDisabled;
  if (s == "on") return CacheMode::kCached;
  if (s == "recompute") return CacheMode::kRecompute;
  throw ConfigError("cache must be on, off or recompute, got " + s);
}

RunConfig run_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;

  // Seeds default from the environment when the file does not set them.
  if (const char* env = std::getenv("BLOCKPIPE_SEED")) {
    const uint64_t base = std::strtoull(env, nullptr, 10);
    cfg.pipe.seed_model = base;
    cfg.pipe.seed_noise = base + 1;
    cfg.pipe.seed_context = base + 2;
  }

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "devices") cfg.pipe.devices = v.get<int>();
      else if (k == "order") cfg.pipe.order = parse_order(v.get<std::string>());
      else if (k == "cache") cfg.pipe.cache_mode = parse_cache(v.get<std::string>());
      else if (k == "mode") {
        const std::string m = v.get<std::string>();
        if (m == "threaded") cfg.pipe.threaded = true;
        else if (m == "single") cfg.pipe.threaded = false;
        else throw ConfigError("mode must be threaded or single");
      }
      else if (k == "num_b") cfg.pipe.queue.num_b = v.get<int>();
      else if (k == "num_c") cfg.pipe.queue.num_c = v.get<int>();
      else if (k == "steps") cfg.pipe.queue.steps = v.get<int>();
      else if (k == "blocks") cfg.pipe.queue.block_num = v.get<int>();
      else if (k == "retain_clean_context") cfg.pipe.queue.retain_clean_context = v.get<bool>();
      else if (k == "layers") cfg.pipe.model.layers = v.get<int>();
      else if (k == "hidden") cfg.pipe.model.hidden = v.get<int>();
      else if (k == "heads") cfg.pipe.model.heads = v.get<int>();
      else if (k == "channels") cfg.pipe.model.channels = v.get<int>();
      else if (k == "height") cfg.pipe.model.height = v.get<int>();
      else if (k == "width") cfg.pipe.model.width = v.get<int>();
      else if (k == "context_len") cfg.pipe.model.context_len = v.get<int>();
      else if (k == "strategy") cfg.pipe.strategy = parse_strategy(v.get<std::string>());
      else if (k == "seed_model") cfg.pipe.seed_model = v.get<uint64_t>();
      else if (k == "seed_noise") cfg.pipe.seed_noise = v.get<uint64_t>();
      else if (k == "seed_context") cfg.pipe.seed_context = v.get<uint64_t>();
      else if (k == "fault_inject") cfg.pipe.fault_inject_ulp = v.get<bool>();
      else if (k == "out_dir") cfg.out_dir = v.get<std::string>();
      else if (k == "emit_first_surplus") cfg.emit_first_surplus = v.get<bool>();
      else if (k == "format") cfg.format = v.get<std::string>();
      else throw ConfigError("unknown config key: " + k);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for key '" + k + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json_text(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["devices"] = cfg.pipe.devices;
  j["order"] = order_token(cfg.pipe.order);
  j["cache"] = cache_token(cfg.pipe.cache_mode);
  j["mode"] = cfg.pipe.threaded ? "threaded" : "single";
  j["num_b"] = cfg.pipe.queue.num_b;
  j["num_c"] = cfg.pipe.queue.num_c;
  j["steps"] = cfg.pipe.queue.steps;
  j["blocks"] = cfg.pipe.queue.block_num;
  j["retain_clean_context"] = cfg.pipe.queue.retain_clean_context;
  j["layers"] = cfg.pipe.model.layers;
  j["hidden"] = cfg.pipe.model.hidden;
  j["heads"] = cfg.pipe.model.heads;
  j["channels"] = cfg.pipe.model.channels;
  j["height"] = cfg.pipe.model.height;
  j["width"] = cfg.pipe.model.width;
  j["context_len"] = cfg.pipe.model.context_len;
  j["strategy"] = strategy_name(cfg.pipe.strategy);
  j["seed_model"] = cfg.pipe.seed_model;
  j["seed_noise"] = cfg.pipe.seed_noise;
  j["seed_context"] = cfg.pipe.seed_context;
  j["fault_inject"] = cfg.pipe.fault_inject_ulp;
  j["out_dir"] = cfg.out_dir;
  j["emit_first_surplus"] = cfg.emit_first_surplus;
  j["format"] = cfg.format;
  return j.dump(2);
}

}  // namespace blockpipe
