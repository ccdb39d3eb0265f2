// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/spike_exchange.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "plasti/random.hpp"

namespace plasti::spikes {

Bytes encode_spike_batch(std::span<const NeuronId> ids) {
  Bytes out;
  out.reserve(4 + 8 * ids.size());
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(ids.size()));
  for (auto id : ids) w.u64(id);
  return out;
}

std::vector<NeuronId> decode_spike_batch(std::span<const std::byte> payload) {
  ByteReader r(payload);
  const auto count = r.u32();
  if (r.remaining() != std::size_t{8} * count) throw ProtocolError("spike batch length mismatch");
  std::vector<NeuronId> ids(count);
  for (auto& id : ids) id = r.u64();
  if (std::adjacent_find(ids.begin(), ids.end(), std::greater_equal<>()) != ids.end()) {
    throw ProtocolError("spike batch ids not strictly increasing");
  }
  return ids;
}

Bytes encode_frequency_batch(std::span<const FrequencyEntry> entries) {
  Bytes out;
  out.reserve(4 + 16 * entries.size());
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.u64(e.id);
    w.f64(e.frequency);
  }
  return out;
}

std::vector<FrequencyEntry> decode_frequency_batch(std::span<const std::byte> payload) {
  ByteReader r(payload);
  const auto count = r.u32();
  if (r.remaining() != std::size_t{16} * count) throw ProtocolError("frequency batch length mismatch");
  std::vector<FrequencyEntry> entries(count);
  for (auto& e : entries) {
    e.id = r.u64();
    e.frequency = r.f64();
    if (!(e.frequency >= 0.0 && e.frequency <= 1.0)) throw ProtocolError("frequency outside [0, 1]");
  }
  auto by_id = [](const FrequencyEntry& a, const FrequencyEntry& b) { return a.id >= b.id; };
  if (std::adjacent_find(entries.begin(), entries.end(), by_id) != entries.end()) {
    throw ProtocolError("frequency batch ids not strictly increasing");
  }
  return entries;
}

std::vector<std::vector<NeuronId>> gather_spike_batches(const Connectome& connectome,
                                                        std::span<const std::uint8_t> fired) {
  std::vector<std::vector<NeuronId>> batches(connectome.layout().rank_count);
  for (std::size_t i = 0; i < connectome.local_count(); ++i) {
    if (!fired[i]) continue;
    for (auto r : connectome.remote_destinations(i)) batches[r].push_back(connectome.global_id(i));
  }
  return batches;
}

bool lookup_spike(std::span<const NeuronId> batch, NeuronId id) {
  assert(std::is_sorted(batch.begin(), batch.end()) && "spike batch must be sorted");
  return std::binary_search(batch.begin(), batch.end(), id);
}

double compute_frequency(std::uint32_t count, std::uint32_t epoch) {
  if (epoch == 0) throw ConfigError("epoch length must be >= 1");
  return std::min(1.0, static_cast<double>(count) / static_cast<double>(epoch));
}

std::vector<std::vector<FrequencyEntry>> gather_frequency_batches(const Connectome& connectome,
                                                                  std::span<const std::uint32_t> counts,
                                                                  std::uint32_t epoch) {
  std::vector<std::vector<FrequencyEntry>> batches(connectome.layout().rank_count);
  for (std::size_t i = 0; i < connectome.local_count(); ++i) {
    const auto& dest = connectome.remote_destinations(i);
    if (dest.empty()) continue;
    const FrequencyEntry e{connectome.global_id(i), compute_frequency(counts[i], epoch)};
    for (auto r : dest) batches[r].push_back(e);
  }
  return batches;
}

std::uint64_t remote_sample_key(std::uint64_t seed, RankId receiver, NeuronId source, std::uint64_t step,
                                Sampling sampling, NeuronId target) {
  const std::uint64_t who = sampling == Sampling::per_rank ? receiver : (target | (std::uint64_t{1} << 63));
  return stream_key(seed, source, step, who, StreamPurpose::remote_sample);
}

bool sample_remote_spike(double frequency, std::uint64_t key) {
  if (frequency <= 0.0) return false;
  if (frequency >= 1.0) return true;
  return uniform_from_key(key) < frequency;
}

RemoteActivity::RemoteActivity(Mode mode, Sampling sampling, std::uint64_t seed, const NeuronLayout& layout,
                               RankId me)
    : mode_(mode),
      sampling_(sampling),
      seed_(seed),
      layout_(layout),
      me_(me),
      spikes_(layout.rank_count),
      frequencies_(layout.rank_count) {}

void RemoteActivity::receive(const std::vector<Bytes>& payloads) {
  for (RankId r = 0; r < payloads.size(); ++r) {
    if (r == me_) continue;
    if (mode_ == Mode::exact) {
      spikes_[r] = payloads[r].empty() ? std::vector<NeuronId>{} : decode_spike_batch(payloads[r]);
    } else {
      frequencies_[r] = payloads[r].empty() ? std::vector<FrequencyEntry>{} : decode_frequency_batch(payloads[r]);
    }
  }
}

bool RemoteActivity::fired(NeuronId source, NeuronId target, std::uint64_t step) const {
  const RankId r = layout_.rank_of(source);
  if (mode_ == Mode::exact) return lookup_spike(spikes_[r], source);
  const auto& entries = frequencies_[r];
  auto it = std::lower_bound(entries.begin(), entries.end(), source,
                             [](const FrequencyEntry& e, NeuronId id) { return e.id < id; });
  // A synapse formed since the last epoch has no frequency yet.
  if (it == entries.end() || it->id != source) return false;
  return sample_remote_spike(it->frequency, remote_sample_key(seed_, me_, source, step, sampling_, target));
}

std::int64_t net_input_count(const Connectome& connectome, std::size_t local, std::span<const std::uint8_t> local_fired,
                             const RemoteActivity& remote, std::uint64_t step) {
  const NeuronId target = connectome.global_id(local);
  std::int64_t net = 0;
  for (const auto& syn : connectome.in_sources(local)) {
    const bool spiked = connectome.is_local(syn.source)
                            ? local_fired[connectome.layout().local_index(syn.source)] != 0
                            : remote.fired(syn.source, target, step);
    if (spiked) net += syn.kind == ElementKind::excitatory ? 1 : -1;
  }
  return net;
}

}  // namespace plasti::spikes
