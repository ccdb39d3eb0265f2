// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

#include "plasti/neuron_model.hpp"
#include "plasti/octree.hpp"
#include "plasti/plasticity.hpp"
#include "plasti/spike_exchange.hpp"

namespace plasti {

enum class Backend { local, tcp };

struct SimConfig {
  std::uint32_t ranks = 1;
  std::uint64_t neurons_per_rank = 32;
  std::uint64_t total_steps = 1001;
  std::uint32_t plasticity_interval = 100;  // 0 disables structural plasticity
  std::uint64_t seed = 1;

  plasticity::SearchConfig search;
  bool fetch_cache = true;
  spikes::Mode spike_mode = spikes::Mode::exact;
  spikes::Sampling sampling = spikes::Sampling::per_rank;
  std::uint32_t epoch = 100;  // Delta

  neuron::NeuronParams neuron;
  double synaptic_strength = 0.24;
  double inhibitory_fraction = 0.0;
  double initial_elements_min = 1.1;
  double initial_elements_max = 1.5;
  octree::Domain domain;

  Backend backend = Backend::local;
  std::string out_dir = "out";
  std::uint64_t metrics_interval = 1;
  std::uint64_t calcium_interval = 100;
  std::uint64_t calcium_neurons = 64;  // trace the lowest ids only; 0 = all
  bool write_raster = false;
  std::chrono::milliseconds timeout = std::chrono::minutes(5);

  /// Throws ConfigError naming the offending key.
  void validate() const;
  std::uint64_t total_neurons() const { return neurons_per_rank * ranks; }
};

/// Applies one key=value setting; unknown keys and bad values throw ConfigError.
void apply_setting(SimConfig& config, const std::string& key, const std::string& value);

/// Flat key=value text; '#' starts a comment, blank lines are ignored.
SimConfig parse_config(const std::string& text, SimConfig base = {});
SimConfig load_config(const std::string& path, SimConfig base = {});

/// Every key with its current value, in a stable order; parse_config of the
/// rendered text reproduces the config.
std::map<std::string, std::string> config_entries(const SimConfig& config);
std::string render_config(const SimConfig& config);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace plasti
