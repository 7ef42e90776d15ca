#ifndef BLOCKPIPE_ARTIFACTS_HPP_
#define BLOCKPIPE_ARTIFACTS_HPP_

#include <string>

#include "blockpipe/engine.hpp"
#include "blockpipe/run_config.hpp"

namespace blockpipe {

// Artifact writers. All output is deterministic: fixed key order, no
// timestamps, raw little-endian doubles for latents.

// Layout: two text header lines
//   blockpipe-latents v1
//   shape <H> <W> <C>
// then one record per emitted block:
//   block <id> <frames>
// followed by frames*H*W*C raw little-endian float64 values.
void write_latents(const std::string& path, const RunResult& result,
                   const RunConfig& cfg);

// A `# config` comment line, then columns slot,device,block_id,level,phase;
// idle cells carry IDLE and an empty level.
void write_schedule_csv(const std::string& path, const EventLog& log,
                        const RunConfig& cfg);

void write_transfers_json(const std::string& path, const TransferLedger& ledger,
                          const RunConfig& cfg);

// Effective config echo, measured bubble stats next to the closed-form
// values, per-block emission metadata and per-channel transfer totals.
void write_summary_json(const std::string& path, const RunConfig& cfg,
                        const RunResult& result);

// Runs the pipeline per cfg and writes all four artifacts into cfg.out_dir.
// Returns the summary path.
std::string run_and_write_artifacts(const RunConfig& cfg);

}  // namespace blockpipe

#endif  // BLOCKPIPE_ARTIFACTS_HPP_
