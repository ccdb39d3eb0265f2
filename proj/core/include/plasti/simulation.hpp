// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plasti/config.hpp"
#include "plasti/transport.hpp"
#include "plasti/types.hpp"

namespace plasti {

/// Global sums for one sampled step.
struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t spikes = 0;
  std::uint64_t synapses = 0;
  double mean_calcium = 0.0;
  transport::CommStats comm;  // cumulative, summed over ranks
};

struct CalciumSample {
  std::uint64_t step = 0;
  NeuronId neuron = 0;
  double calcium = 0.0;
};

struct SpikeEvent {
  std::uint64_t step = 0;
  NeuronId neuron = 0;
};

struct Synapse {
  NeuronId source = 0;
  NeuronId target = 0;
  ElementKind kind = ElementKind::excitatory;
  friend auto operator<=>(const Synapse&, const Synapse&) = default;
};

struct NeuronSummary {
  NeuronId id = 0;
  Vec3 position;
  ElementKind kind = ElementKind::excitatory;
  double calcium = 0.0;
  double axonal_grown = 0.0;
  std::uint32_t axonal_connected = 0;
  std::array<std::uint32_t, 2> dendritic_connected{};
};

enum class Phase : std::uint8_t { activity, electrical, deletion, tree, search, resolution };
inline constexpr std::size_t kPhaseCount = 6;
const char* phase_name(Phase phase);

struct PhaseTiming {
  double seconds = 0.0;
  std::uint64_t calls = 0;
};

/// One partner search, recorded when `trace_searches` is on.
struct SearchRecord {
  NeuronId source = 0;
  std::uint64_t round = 0;
  std::uint32_t fetches = 0;
  std::uint32_t fetches_below_branch = 0;
  std::uint32_t remote_expansions = 0;
  bool entered_remote = false;
  std::uint32_t chosen_depth = 0;
  std::uint32_t v2_requests = 0;
  bool found = false;
  bool target_remote = false;  // the chosen target lives on another rank
};

struct RankReport {
  RankId rank = 0;
  transport::CommStats comm;
  std::array<PhaseTiming, kPhaseCount> timings{};
  std::uint64_t activity_exchanges = 0;
  std::uint64_t connectivity_updates = 0;
  std::uint64_t searches = 0;
  std::uint64_t v2_requests = 0;
  std::uint64_t max_v2_per_neuron_round = 0;  // worst V2 count of one neuron in one round
  std::uint64_t max_searches_per_neuron_round = 0;
  std::uint64_t fetches_below_branch = 0;
  std::vector<SearchRecord> search_records;
};

/// Everything a run produced, assembled on rank 0.
struct RunResult {
  SimConfig config;
  unsigned branch_depth = 1;
  std::vector<MetricsRow> metrics;
  std::vector<CalciumSample> calcium;   // sorted by (step, neuron)
  std::vector<SpikeEvent> raster;       // sorted by (step, neuron); only with write_raster
  std::vector<Synapse> connectome;      // sorted
  std::vector<NeuronSummary> neurons;   // sorted by id
  std::vector<RankReport> ranks;        // indexed by rank

  std::uint64_t connectivity_updates() const;
  std::uint64_t activity_exchanges() const;  // per rank (identical on all ranks)
  transport::CommStats total_comm() const;
};

/// Extra switches used by tests and the acceptance suite.
struct RunOptions {
  bool trace_searches = false;
};

/// Runs one rank of the simulation over `transport`. Returns the assembled
/// result on rank 0 and nullopt elsewhere.
std::optional<RunResult> run_rank(const SimConfig& config, transport::Transport& transport,
                                  const RunOptions& options = {});

/// Spawns config.ranks in-process ranks over the configured backend
/// (TCP over loopback for `tcp`) and returns rank 0's result.
RunResult run_simulation(const SimConfig& config, const RunOptions& options = {});

/// Initial position of global neuron `id` (inside its subdomain at the branch depth).
Vec3 initial_position(const SimConfig& config, NeuronId id, unsigned branch_depth);

}  // namespace plasti
