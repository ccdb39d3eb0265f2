// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "plasti/types.hpp"

namespace plasti {

/// Global neuron numbering: rank r owns ids [r * per_rank, (r + 1) * per_rank).
struct NeuronLayout {
  std::uint64_t neurons_per_rank = 1;
  std::uint32_t rank_count = 1;

  std::uint64_t total() const { return neurons_per_rank * rank_count; }
  RankId rank_of(NeuronId id) const { return static_cast<RankId>(id / neurons_per_rank); }
  NeuronId first_of(RankId rank) const { return rank * neurons_per_rank; }
  std::size_t local_index(NeuronId id) const { return static_cast<std::size_t>(id % neurons_per_rank); }
};

struct InSynapse {
  NeuronId source = 0;
  ElementKind kind = ElementKind::excitatory;
  friend bool operator==(const InSynapse&, const InSynapse&) = default;
};

/// Both endpoint views of the synapses touching one rank's neurons. Parallel
/// synapses between the same pair are separate entries.
class Connectome {
 public:
  Connectome(NeuronLayout layout, RankId me);

  const NeuronLayout& layout() const { return layout_; }
  RankId rank() const { return me_; }
  std::size_t local_count() const { return out_.size(); }
  NeuronId global_id(std::size_t local) const { return layout_.first_of(me_) + local; }
  bool is_local(NeuronId id) const { return layout_.rank_of(id) == me_; }

  const std::vector<NeuronId>& out_targets(std::size_t local) const { return out_[local]; }
  const std::vector<InSynapse>& in_sources(std::size_t local) const { return in_[local]; }
  std::uint32_t in_count(std::size_t local, ElementKind kind) const;

  void add_out(std::size_t local, NeuronId target);
  void add_in(std::size_t local, InSynapse synapse);
  /// Remove one instance; returns false when no such synapse exists.
  bool remove_out(std::size_t local, NeuronId target);
  bool remove_in(std::size_t local, InSynapse synapse);

  /// Ranks other than this one that host at least one target of `local`, ascending.
  const std::vector<RankId>& remote_destinations(std::size_t local) const;

  std::uint64_t out_synapse_count() const;

 private:
  NeuronLayout layout_;
  RankId me_;
  std::vector<std::vector<NeuronId>> out_;
  std::vector<std::vector<InSynapse>> in_;
  mutable std::vector<std::vector<RankId>> destinations_;
  mutable std::vector<bool> destinations_dirty_;
};

}  // namespace plasti
