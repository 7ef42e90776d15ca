#include "blockpipe/artifacts.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "blockpipe/analytics.hpp"
#include "blockpipe/errors.hpp"

namespace blockpipe {

using json = nlohmann::ordered_json;

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

void write_latents(const std::string& path, const RunResult& result, const RunConfig& cfg) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  const ModelConfig& mc = cfg.pipe.model;
  out << "blockpipe-latents v1\n";
  out << "shape " << mc.height << " " << mc.width << " " << mc.channels << "\n";
  const int surplus = cfg.pipe.queue.num_c / 2;
  for (const EmittedBlock& b : result.blocks) {
    Tensor frames = b.frames;
    if (!cfg.emit_first_surplus && b.block_id == 1 && frames.shape[0] > surplus) {
      const int64_t f = frames.shape[0];
      std::vector<int64_t> shape = frames.shape;
      shape[0] = f - surplus;
      frames = slice_rows(frames.reshaped({f, frames.numel() / f}), surplus, f)
                   .reshaped(shape);
    }
    out << "block " << b.block_id << " " << frames.shape[0] << "\n";
    out.write(reinterpret_cast<const char*>(frames.data.data()),
              static_cast<std::streamsize>(frames.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("short write to " + path);
}

void write_schedule_csv(const std::string& path, const EventLog& log,
                        const RunConfig& cfg) {
  std::ofstream out = open_out(path);
  out << "# config " << json::parse(run_config_to_json(cfg)).dump() << "\n";
  out << "slot,device,block_id,level,phase\n";
  for (const ScheduleEvent& e : schedule_grid(log)) {
    out << e.slot << "," << e.device << ",";
    if (e.block_id < 0) {
      out << "IDLE,,";
    } else {
      out << e.block_id << "," << e.level << ",";
    }
    out << phase_name(e.phase) << "\n";
  }
  if (!out) throw IoError("short write to " + path);
}

void write_transfers_json(const std::string& path, const TransferLedger& ledger,
                          const RunConfig& cfg) {
  json j;
  j["config"] = json::parse(run_config_to_json(cfg));
  j["entries"] = json::array();
  for (const LedgerEntry& e : ledger.entries) {
    j["entries"].push_back({{"channel", e.channel},
                            {"round", e.round},
                            {"passes", e.passes},
                            {"scalars", e.scalars}});
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path);
}

void write_summary_json(const std::string& path, const RunConfig& cfg,
                        const RunResult& result) {
  const BubbleStats st = measure_bubbles(result.log);

  BubbleParams bp;
  bp.devices = cfg.pipe.devices;
  bp.steps = cfg.pipe.queue.steps;
  bp.block_num = cfg.pipe.queue.block_num;
  bp.order = cfg.pipe.order;

  json j;
  j["config"] = json::parse(run_config_to_json(cfg));
  j["rounds"] = result.rounds;
  j["bubbles"] = {
      {"measured",
       {{"busy_per_device", st.busy_per_device},
        {"idle_per_device", st.idle_per_device},
        {"warmup_idle", st.warmup_idle},
        {"steady_idle", st.steady_idle},
        {"cooldown_idle", st.cooldown_idle},
        {"ratio", st.ratio}}},
      {"formula", {{"size", bubble_size(bp)}, {"ratio", bubble_ratio(bp)}}},
  };
  json blocks = json::array();
  for (const EmittedBlock& b : result.blocks) {
    blocks.push_back({{"block_id", b.block_id},
                      {"frames", b.frames.shape[0]},
                      {"noise_ids", b.noise_ids},
                      {"frame_ids", b.frame_ids}});
  }
  j["emitted"] = std::move(blocks);

  json totals = json::object();
  for (const LedgerEntry& e : result.ledger.entries) {
    if (!totals.contains(e.channel)) totals[e.channel] = 0;
    totals[e.channel] = totals[e.channel].get<int64_t>() + e.scalars;
  }
  j["transfer_totals"] = std::move(totals);

  json queue = json::array();
  for (const QueueSnapshot& s : result.queue_snapshots) {
    queue.push_back({{"round", s.round}, {"block_ids", s.block_ids}, {"levels", s.levels}});
  }
  j["queue"] = std::move(queue);

  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path);
}

std::string run_and_write_artifacts(const RunConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir);

  const RunResult result = run_pipeline(cfg.pipe);
  const std::string base = cfg.out_dir + "/";
  write_latents(base + "latents.bin", result, cfg);
  write_schedule_csv(base + "schedule.csv", result.log, cfg);
  write_transfers_json(base + "transfers.json", result.ledger, cfg);
  write_summary_json(base + "summary.json", cfg, result);
  return base + "summary.json";
}

}  // namespace blockpipe
