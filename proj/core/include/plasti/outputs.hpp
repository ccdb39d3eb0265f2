// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include "plasti/simulation.hpp"

namespace plasti {

class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV renderings (header row, LF line ends). All but timings are a pure
/// function of config and seed.
std::string metrics_csv(const RunResult& result);
std::string calcium_csv(const RunResult& result);
std::string comm_csv(const RunResult& result);
std::string connectome_csv(const RunResult& result);
std::string neurons_csv(const RunResult& result);
std::string raster_csv(const RunResult& result);
std::string timings_csv(const RunResult& result);
std::string manifest_text(const RunResult& result);

/// Writes metrics.csv, calcium.csv, comm.csv, connectome.csv, neurons.csv,
/// timings.csv, manifest.txt and (if enabled) raster.csv into `out_dir`,
/// creating it. Throws OutputError when it cannot be written.
void emit_outputs(const RunResult& result, const std::string& out_dir);

}  // namespace plasti
