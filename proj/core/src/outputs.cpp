// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/outputs.hpp"

#include <filesystem>
#include <fstream>

namespace plasti {
namespace {

const char* kind_name(ElementKind k) { return k == ElementKind::excitatory ? "excitatory" : "inhibitory"; }

std::string u(std::uint64_t v) { return std::to_string(v); }
std::string d(double v) { return format_double(v); }

void comm_fields(std::string& out, const transport::CommStats& s) {
  out += u(s.bytes_sent) + ',' + u(s.bytes_received) + ',' + u(s.bytes_remotely_accessed) + ',' +
         u(s.messages_sent) + ',' + u(s.remote_fetches) + ',' + u(s.sync_points);
}

constexpr const char* kCommHeader =
    "bytes_sent,bytes_received,bytes_remotely_accessed,messages_sent,remote_fetches,sync_points";

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw OutputError("failed writing " + path.string());
}

}  // namespace

std::string metrics_csv(const RunResult& r) {
  std::string out = std::string("step,spikes,synapses,mean_calcium,") + kCommHeader + "\n";
  for (const auto& m : r.metrics) {
    out += u(m.step) + ',' + u(m.spikes) + ',' + u(m.synapses) + ',' + d(m.mean_calcium) + ',';
    comm_fields(out, m.comm);
    out += '\n';
  }
  return out;
}

std::string calcium_csv(const RunResult& r) {
  std::string out = "step,neuron_id,calcium\n";
  for (const auto& c : r.calcium) out += u(c.step) + ',' + u(c.neuron) + ',' + d(c.calcium) + '\n';
  return out;
}

std::string comm_csv(const RunResult& r) {
  std::string out = std::string("rank,") + kCommHeader + "\n";
  for (const auto& rank : r.ranks) {
    out += u(rank.rank) + ',';
    comm_fields(out, rank.comm);
    out += '\n';
  }
  return out;
}

std::string connectome_csv(const RunResult& r) {
  std::string out = "source_id,target_id,kind\n";
  for (const auto& s : r.connectome) out += u(s.source) + ',' + u(s.target) + ',' + kind_name(s.kind) + '\n';
  return out;
}

std::string neurons_csv(const RunResult& r) {
  std::string out =
      "neuron_id,x,y,z,kind,calcium,axonal_grown,axonal_connected,dendritic_ex_connected,dendritic_in_connected\n";
  for (const auto& n : r.neurons) {
    out += u(n.id) + ',' + d(n.position.x) + ',' + d(n.position.y) + ',' + d(n.position.z) + ',' +
           kind_name(n.kind) + ',' + d(n.calcium) + ',' + d(n.axonal_grown) + ',' + u(n.axonal_connected) + ',' +
           u(n.dendritic_connected[0]) + ',' + u(n.dendritic_connected[1]) + '\n';
  }
  return out;
}

std::string raster_csv(const RunResult& r) {
  std::string out = "step,neuron_id\n";
  for (const auto& s : r.raster) out += u(s.step) + ',' + u(s.neuron) + '\n';
  return out;
}

// Per rank and phase: total seconds, calls and the mean per call; the "mean"
// rows average the totals across ranks.
std::string timings_csv(const RunResult& r) {
  std::string out = "rank,phase,total_seconds,calls,mean_seconds_per_call\n";
  for (std::size_t p = 0; p < kPhaseCount; ++p) {
    double sum = 0.0;
    std::uint64_t calls = 0;
    for (const auto& rank : r.ranks) {
      const auto& t = rank.timings[p];
      const double mean = t.calls ? t.seconds / static_cast<double>(t.calls) : 0.0;
      out += u(rank.rank) + ',' + phase_name(static_cast<Phase>(p)) + ',' + d(t.seconds) + ',' + u(t.calls) + ',' +
             d(mean) + '\n';
      sum += t.seconds;
      calls += t.calls;
    }
    if (r.ranks.empty()) continue;
    const double n = static_cast<double>(r.ranks.size());
    const double mean_calls = static_cast<double>(calls) / n;
    out += std::string("mean,") + phase_name(static_cast<Phase>(p)) + ',' + d(sum / n) + ',' + d(mean_calls) + ',' +
           d(calls ? sum / static_cast<double>(calls) : 0.0) + '\n';
  }
  return out;
}

std::string manifest_text(const RunResult& r) {
  std::string out = render_config(r.config);
  out += "run.branch_depth=" + u(r.branch_depth) + '\n';
  out += "run.connectivity_updates=" + u(r.connectivity_updates()) + '\n';
  out += "run.activity_exchanges=" + u(r.activity_exchanges()) + '\n';
  out += "run.total_neurons=" + u(r.config.total_neurons()) + '\n';
  out += "run.final_synapses=" + u(r.connectome.size()) + '\n';
  return out;
}

void emit_outputs(const RunResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError("cannot create output directory " + out_dir);
  write_file(dir / "metrics.csv", metrics_csv(result));
  write_file(dir / "calcium.csv", calcium_csv(result));
  write_file(dir / "comm.csv", comm_csv(result));
  write_file(dir / "connectome.csv", connectome_csv(result));
  write_file(dir / "neurons.csv", neurons_csv(result));
  write_file(dir / "timings.csv", timings_csv(result));
  write_file(dir / "manifest.txt", manifest_text(result));
  if (result.config.write_raster) write_file(dir / "raster.csv", raster_csv(result));
}

}  // namespace plasti
