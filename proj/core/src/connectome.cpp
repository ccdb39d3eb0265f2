// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/connectome.hpp"

#include <algorithm>

namespace plasti {

Connectome::Connectome(NeuronLayout layout, RankId me)
    : layout_(layout),
      me_(me),
      out_(layout.neurons_per_rank),
      in_(layout.neurons_per_rank),
      destinations_(layout.neurons_per_rank),
      destinations_dirty_(layout.neurons_per_rank, false) {}

std::uint32_t Connectome::in_count(std::size_t local, ElementKind kind) const {
  return static_cast<std::uint32_t>(
      std::count_if(in_[local].begin(), in_[local].end(), [kind](const InSynapse& s) { return s.kind == kind; }));
}

void Connectome::add_out(std::size_t local, NeuronId target) {
  out_[local].push_back(target);
  destinations_dirty_[local] = true;
}

void Connectome::add_in(std::size_t local, InSynapse synapse) { in_[local].push_back(synapse); }

bool Connectome::remove_out(std::size_t local, NeuronId target) {
  auto& v = out_[local];
  auto it = std::find(v.begin(), v.end(), target);
  if (it == v.end()) return false;
  v.erase(it);
  destinations_dirty_[local] = true;
  return true;
}

bool Connectome::remove_in(std::size_t local, InSynapse synapse) {
  auto& v = in_[local];
  auto it = std::find(v.begin(), v.end(), synapse);
  if (it == v.end()) return false;
  v.erase(it);
  return true;
}

const std::vector<RankId>& Connectome::remote_destinations(std::size_t local) const {
  if (destinations_dirty_[local]) {
    auto& d = destinations_[local];
    d.clear();
    for (auto t : out_[local]) {
      const auto r = layout_.rank_of(t);
      if (r != me_) d.push_back(r);
    }
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    destinations_dirty_[local] = false;
  }
  return destinations_[local];
}

std::uint64_t Connectome::out_synapse_count() const {
  std::uint64_t n = 0;
  for (const auto& v : out_) n += v.size();
  return n;
}

}  // namespace plasti
