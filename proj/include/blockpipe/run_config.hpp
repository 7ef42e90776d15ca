#ifndef BLOCKPIPE_RUN_CONFIG_HPP_
#define BLOCKPIPE_RUN_CONFIG_HPP_

#include <string>

#include "blockpipe/engine.hpp"

namespace blockpipe {

// Operator-facing configuration: the pipeline settings plus output control.
// Serialized as flat key-value JSON; flags override file values; the
// BLOCKPIPE_SEED environment variable supplies default seeds when neither
// file nor flag sets them. Every artifact echoes the effective config.
struct RunConfig {
  PipelineConfig pipe;
  std::string out_dir = "out";
  bool emit_first_surplus = true;  // keep the first block's built-in context frames
  std::string format = "text";     // report rendering: json | text | csv

  void validate() const;
};

std::string order_token(Order o);
Order parse_order(const std::string& s);
std::string cache_token(CacheMode m);
CacheMode parse_cache(const std::string& s);

// JSON round trip. load merges onto defaults; unknown keys are config errors.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace blockpipe

#endif  // BLOCKPIPE_RUN_CONFIG_HPP_
