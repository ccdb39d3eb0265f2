// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

#include "plasti/random.hpp"
#include "plasti/types.hpp"

namespace plasti::neuron {

enum class ModelKind { izhikevich, poisson };

/// How grown elements respond to calcium. `linear` is nu * (1 - c / eps);
/// `gaussian` is the bell-shaped MSP curve with zeros at eta and eps.
enum class GrowthRule { linear, gaussian };

struct NeuronParams {
  ModelKind model = ModelKind::poisson;

  // Izhikevich regular-spiking defaults.
  double a = 0.02;
  double b = 0.2;
  double c = -65.0;
  double d = 8.0;

  // Poisson firing probability per step = clamp(input_scale * total_input, 0, 1).
  double input_scale = 0.08;

  double calcium_alpha = 1e-4;
  double target_calcium = 0.7;
  double growth_rate = 0.001;
  GrowthRule growth_rule = GrowthRule::linear;
  double growth_min_calcium = 0.0;  // eta, gaussian rule only

  double background_mean = 5.0;
  double background_std = 1.0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct NeuronState {
  double v = -65.0;
  double u = -13.0;
  double calcium = 0.0;
  bool fired = false;
};

NeuronState initial_state(const NeuronParams& params);

struct ElementPool {
  double grown = 0.0;
  std::uint32_t connected = 0;
};

struct SynapticElements {
  ElementKind kind = ElementKind::excitatory;  // type of the axon
  ElementPool axonal;
  std::array<ElementPool, 2> dendritic;  // indexed by kind_index()
};

struct VacantCounts {
  std::uint32_t axonal = 0;
  std::array<std::uint32_t, 2> dendritic{};
};

double draw_background(const NeuronParams& params, Rng& rng);

/// One simulation step (1 ms) of the electrical model. `fired` is recomputed.
/// Throws NumericFault if the state becomes non-finite.
NeuronState step_electrical(const NeuronState& state, const NeuronParams& params,
                            double synaptic_input, double background, Rng& rng);

NeuronState update_calcium(const NeuronState& state, const NeuronParams& params);

/// Signed change of grown elements per step for calcium level `calcium`.
double growth_delta(double calcium, const NeuronParams& params);

SynapticElements update_synaptic_elements(const SynapticElements& el, double calcium,
                                          const NeuronParams& params);

std::uint32_t usable(const ElementPool& pool);
std::uint32_t vacant(const ElementPool& pool);
VacantCounts vacant_counts(const SynapticElements& el);

}  // namespace plasti::neuron
