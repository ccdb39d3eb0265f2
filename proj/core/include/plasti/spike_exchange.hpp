// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plasti/connectome.hpp"
#include "plasti/types.hpp"
#include "plasti/wire.hpp"

namespace plasti::spikes {

enum class Mode { exact, frequency };

/// Who shares a Bernoulli draw for a remote source in frequency mode: all
/// targets on the receiving rank, or each target separately.
enum class Sampling { per_rank, per_target };

struct FrequencyEntry {
  NeuronId id = 0;
  double frequency = 0.0;
  friend bool operator==(const FrequencyEntry&, const FrequencyEntry&) = default;
};

// count u32 | ids u64 x count
Bytes encode_spike_batch(std::span<const NeuronId> ids);
/// Throws ProtocolError on truncation or ids that are not strictly increasing.
std::vector<NeuronId> decode_spike_batch(std::span<const std::byte> payload);

// count u32 | (id u64, frequency f64) x count
Bytes encode_frequency_batch(std::span<const FrequencyEntry> entries);
std::vector<FrequencyEntry> decode_frequency_batch(std::span<const std::byte> payload);

/// Ids of fired local neurons per destination rank, ascending. A neuron goes to
/// rank r iff it has a synapse onto a neuron there; the own rank stays empty.
std::vector<std::vector<NeuronId>> gather_spike_batches(const Connectome& connectome,
                                                        std::span<const std::uint8_t> fired);

/// Binary search; the batch must be sorted (checked in debug builds).
bool lookup_spike(std::span<const NeuronId> batch, NeuronId id);

double compute_frequency(std::uint32_t count, std::uint32_t epoch);

/// Frequency entries per destination rank for every local neuron with a
/// synapse onto that rank; `counts` are spikes over the last epoch.
std::vector<std::vector<FrequencyEntry>> gather_frequency_batches(const Connectome& connectome,
                                                                  std::span<const std::uint32_t> counts,
                                                                  std::uint32_t epoch);

/// Key of the draw that decides whether `source` is seen firing at `step` on
/// rank `receiver` (and, for per-target sampling, by `target`).
std::uint64_t remote_sample_key(std::uint64_t seed, RankId receiver, NeuronId source, std::uint64_t step,
                                Sampling sampling, NeuronId target);

bool sample_remote_spike(double frequency, std::uint64_t key);

/// What one rank knows about the activity of other ranks' neurons.
class RemoteActivity {
 public:
  RemoteActivity(Mode mode, Sampling sampling, std::uint64_t seed, const NeuronLayout& layout, RankId me);

  /// Decodes the activity payloads of an exchange (indexed by source rank).
  void receive(const std::vector<Bytes>& payloads);

  /// Whether `target` on this rank sees remote `source` fire at `step`.
  bool fired(NeuronId source, NeuronId target, std::uint64_t step) const;

  const std::vector<NeuronId>& spikes_from(RankId rank) const { return spikes_[rank]; }

 private:
  Mode mode_;
  Sampling sampling_;
  std::uint64_t seed_;
  NeuronLayout layout_;
  RankId me_;
  std::vector<std::vector<NeuronId>> spikes_;
  std::vector<std::vector<FrequencyEntry>> frequencies_;
};

/// Net signed count of in-synapses whose source fired: +1 excitatory, -1
/// inhibitory. `local_fired` is indexed by local neuron.
std::int64_t net_input_count(const Connectome& connectome, std::size_t local, std::span<const std::uint8_t> local_fired,
                             const RemoteActivity& remote, std::uint64_t step);

}  // namespace plasti::spikes
