// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/neuron_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace plasti::neuron {

void NeuronParams::validate() const {
  if (!(calcium_alpha > 0.0 && calcium_alpha < 1.0)) {
    throw ConfigError("calcium_alpha must lie in (0, 1), got " + std::to_string(calcium_alpha));
  }
  if (!(growth_rate > 0.0)) throw ConfigError("growth_rate must be > 0");
  if (!(target_calcium > 0.0)) throw ConfigError("target_calcium must be > 0");
  if (!(background_std >= 0.0)) throw ConfigError("background_std must be >= 0");
  if (!(input_scale >= 0.0)) throw ConfigError("input_scale must be >= 0");
  if (growth_rule == GrowthRule::gaussian &&
      !(growth_min_calcium >= 0.0 && growth_min_calcium < target_calcium)) {
    throw ConfigError("growth_min_calcium must lie in [0, target_calcium)");
  }
}

NeuronState initial_state(const NeuronParams& params) {
  NeuronState s;
  s.v = params.c;
  s.u = params.b * params.c;
  return s;
}

double draw_background(const NeuronParams& params, Rng& rng) {
  if (params.background_std == 0.0) return params.background_mean;
  std::normal_distribution<double> dist(params.background_mean, params.background_std);
  return dist(rng);
}

NeuronState step_electrical(const NeuronState& state, const NeuronParams& params,
                            double synaptic_input, double background, Rng& rng) {
  NeuronState next = state;
  const double input = synaptic_input + background;

  if (params.model == ModelKind::izhikevich) {
    // Two half-steps for v keep the quadratic term stable at dt = 1 ms.
    next.v += 0.5 * (0.04 * next.v * next.v + 5.0 * next.v + 140.0 - next.u + input);
    next.v += 0.5 * (0.04 * next.v * next.v + 5.0 * next.v + 140.0 - next.u + input);
    next.u += params.a * (params.b * next.v - next.u);
    next.fired = next.v >= 30.0;
    if (next.fired) {
      next.v = params.c;
      next.u += params.d;
    }
    if (!std::isfinite(next.v) || !std::isfinite(next.u)) {
      throw NumericFault("non-finite membrane state (v=" + std::to_string(next.v) +
                         ", u=" + std::to_string(next.u) + ")");
    }
  } else {
    const double p = std::clamp(params.input_scale * input, 0.0, 1.0);
    if (!std::isfinite(p)) throw NumericFault("non-finite firing probability");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    next.fired = unit(rng) < p;
  }
  return next;
}

NeuronState update_calcium(const NeuronState& state, const NeuronParams& params) {
  NeuronState next = state;
  const double spike = state.fired ? 1.0 : 0.0;
  next.calcium = std::clamp(state.calcium + params.calcium_alpha * (spike - state.calcium), 0.0, 1.0);
  return next;
}

double growth_delta(double calcium, const NeuronParams& params) {
  if (params.growth_rule == GrowthRule::linear) {
    return params.growth_rate * (1.0 - calcium / params.target_calcium);
  }
  const double eta = params.growth_min_calcium;
  const double eps = params.target_calcium;
  const double xi = 0.5 * (eta + eps);
  const double zeta = (eps - eta) / (2.0 * std::sqrt(std::log(2.0)));
  const double t = (calcium - xi) / zeta;
  return params.growth_rate * (2.0 * std::exp(-t * t) - 1.0);
}

SynapticElements update_synaptic_elements(const SynapticElements& el, double calcium,
                                          const NeuronParams& params) {
  const double delta = growth_delta(calcium, params);
  SynapticElements next = el;
  next.axonal.grown = std::max(0.0, el.axonal.grown + delta);
  for (auto& pool : next.dendritic) pool.grown = std::max(0.0, pool.grown + delta);
  return next;
}

std::uint32_t usable(const ElementPool& pool) {
  return static_cast<std::uint32_t>(std::floor(pool.grown));
}

std::uint32_t vacant(const ElementPool& pool) {
  const auto u = usable(pool);
  return u > pool.connected ? u - pool.connected : 0;
}

VacantCounts vacant_counts(const SynapticElements& el) {
  VacantCounts v;
  v.axonal = vacant(el.axonal);
  v.dendritic = {vacant(el.dendritic[0]), vacant(el.dendritic[1])};
  return v;
}

}  // namespace plasti::neuron
