// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// plastisim run --config FILE [--ranks N] [--algo classic|aware] [--spikes exact|freq]
//               [--theta X] [--seed S] [--backend local|tcp] [--out DIR] [--set key=value]...
// With --rank R --peers h:p,... the process joins a TCP group as one rank.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "plasti/config.hpp"
#include "plasti/outputs.hpp"
#include "plasti/simulation.hpp"
#include "plasti/tcp_transport.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct RunArgs {
  std::string config_path;
  std::optional<std::uint32_t> ranks;
  std::optional<std::string> algo;
  std::optional<std::string> spikes;
  std::optional<double> theta;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> out;
  std::optional<std::uint64_t> steps;
  std::vector<std::string> settings;
  std::optional<std::uint32_t> join_rank;
  std::string peers;
  bool quiet = false;
};

plasti::SimConfig build_config(const RunArgs& a) {
  plasti::SimConfig cfg;
  if (!a.config_path.empty()) cfg = plasti::load_config(a.config_path);
  for (const auto& kv : a.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw plasti::ConfigError("--set expects key=value, got '" + kv + "'");
    plasti::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.ranks) cfg.ranks = *a.ranks;
  if (a.algo) plasti::apply_setting(cfg, "algorithm", *a.algo);
  if (a.spikes) plasti::apply_setting(cfg, "spikes", *a.spikes);
  if (a.theta) cfg.search.theta = *a.theta;
  if (a.seed) cfg.seed = *a.seed;
  if (a.backend) plasti::apply_setting(cfg, "backend", *a.backend);
  if (a.out) cfg.out_dir = *a.out;
  if (a.steps) cfg.total_steps = *a.steps;
  cfg.validate();
  return cfg;
}

void summarize(const plasti::RunResult& r) {
  const auto comm = r.total_comm();
  const double n = static_cast<double>(r.config.total_neurons());
  std::cout << "steps=" << r.config.total_steps << " ranks=" << r.config.ranks
            << " neurons=" << r.config.total_neurons() << " connectivity_updates=" << r.connectivity_updates()
            << " synapses=" << r.connectome.size() << " mean_degree=" << static_cast<double>(r.connectome.size()) / n
            << "\n"
            << "bytes_sent=" << comm.bytes_sent << " bytes_remotely_accessed=" << comm.bytes_remotely_accessed
            << " activity_exchanges=" << r.activity_exchanges() << "\n"
            << "outputs in " << r.config.out_dir << "\n";
}

int run(const RunArgs& args) {
  const auto cfg = build_config(args);
  std::optional<plasti::RunResult> result;
  if (args.join_rank) {
    if (args.peers.empty()) throw plasti::ConfigError("--rank needs --peers");
    auto peers = plasti::transport::parse_endpoints(args.peers);
    if (peers.size() != cfg.ranks) {
      throw plasti::ConfigError("peer list has " + std::to_string(peers.size()) + " entries for " +
                                std::to_string(cfg.ranks) + " ranks");
    }
    try {
      plasti::transport::TcpTransport transport(*args.join_rank, peers, cfg.timeout);
      result = plasti::run_rank(cfg, transport);
    } catch (const plasti::ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("rank " + std::to_string(*args.join_rank) + ": " + e.what());
    }
    if (!result) return 0;  // only rank 0 writes outputs
  } else {
    result = plasti::run_simulation(cfg);
  }
  plasti::emit_outputs(*result, cfg.out_dir);
  if (!args.quiet) summarize(*result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plastisim: distributed structural-plasticity simulator"};
  app.require_subcommand(1);

  RunArgs args;
  auto* run_cmd = app.add_subcommand("run", "run a simulation and write CSV outputs");
  run_cmd->add_option("--config", args.config_path, "key=value config file");
  run_cmd->add_option("--ranks", args.ranks, "number of ranks (power of two)");
  run_cmd->add_option("--algo", args.algo, "partner search: classic|aware");
  run_cmd->add_option("--spikes", args.spikes, "activity exchange: exact|freq");
  run_cmd->add_option("--theta", args.theta, "Barnes-Hut acceptance parameter");
  run_cmd->add_option("--seed", args.seed, "master seed");
  run_cmd->add_option("--backend", args.backend, "transport: local|tcp");
  run_cmd->add_option("--out", args.out, "output directory");
  run_cmd->add_option("--steps", args.steps, "total simulation steps");
  run_cmd->add_option("--set", args.settings, "override any config key (key=value), repeatable");
  run_cmd->add_option("--rank", args.join_rank, "join a TCP group as this rank (needs --peers)");
  run_cmd->add_option("--peers", args.peers, "host:port per rank, comma separated");
  run_cmd->add_flag("--quiet", args.quiet, "no summary on stdout");

  auto* defaults_cmd = app.add_subcommand("defaults", "print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*defaults_cmd) {
      std::cout << plasti::render_config(plasti::SimConfig{});
      return 0;
    }
    return run(args);
  } catch (const plasti::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const plasti::transport::RankFailure& e) {
    try {
      e.rethrow_cause();
    } catch (const plasti::ConfigError&) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (...) {
    }
    std::cerr << "runtime fault: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime fault: " << e.what() << "\n";
    return kExitRuntime;
  }
}
