// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "plasti/spike_exchange.hpp"

namespace plasti::spikes {
namespace {

// Random synapses out of rank `me` of a 4-rank, 50-per-rank layout.
Connectome random_connectome(std::mt19937_64& rng, const NeuronLayout& layout, RankId me, int synapses) {
  Connectome c(layout, me);
  for (int s = 0; s < synapses; ++s) {
    const std::size_t local = rng() % layout.neurons_per_rank;
    c.add_out(local, rng() % layout.total());
  }
  return c;
}

TEST(SpikeBatches, NoFiringGivesEmptyBatchesForEveryRank) {
  std::mt19937_64 rng(1);
  const NeuronLayout layout{50, 4};
  const auto c = random_connectome(rng, layout, 1, 200);
  const std::vector<std::uint8_t> fired(50, 0);
  const auto batches = gather_spike_batches(c, fired);
  ASSERT_EQ(batches.size(), 4u);
  for (const auto& b : batches) EXPECT_TRUE(b.empty());
}

TEST(SpikeBatches, OneNeuronReachesExactlyItsTargetRanks) {
  const NeuronLayout layout{10, 4};
  Connectome c(layout, 0);
  c.add_out(3, 12);  // rank 1
  c.add_out(3, 35);  // rank 3
  c.add_out(3, 5);   // own rank
  std::vector<std::uint8_t> fired(10, 0);
  fired[3] = 1;
  const auto batches = gather_spike_batches(c, fired);
  EXPECT_TRUE(batches[0].empty());
  EXPECT_EQ(batches[1], std::vector<NeuronId>{3});
  EXPECT_TRUE(batches[2].empty());
  EXPECT_EQ(batches[3], std::vector<NeuronId>{3});
}

TEST(SpikeBatches, MembershipMatchesBruteForceScan) {
  std::mt19937_64 rng(2);
  const NeuronLayout layout{50, 4};
  for (RankId me = 0; me < 4; ++me) {
    const auto c = random_connectome(rng, layout, me, 300);
    std::vector<std::uint8_t> fired(50);
    for (auto& f : fired) f = rng() % 3 == 0;
    const auto batches = gather_spike_batches(c, fired);
    for (RankId r = 0; r < 4; ++r) {
      std::set<NeuronId> expect;
      if (r != me) {
        for (std::size_t i = 0; i < 50; ++i) {
          if (!fired[i]) continue;
          for (auto t : c.out_targets(i)) {
            if (layout.rank_of(t) == r) expect.insert(c.global_id(i));
          }
        }
      }
      EXPECT_EQ(batches[r], std::vector<NeuronId>(expect.begin(), expect.end())) << me << "->" << r;
    }
  }
}

TEST(SpikeBatches, CodecRoundTripAndValidation) {
  const std::vector<NeuronId> ids{1, 5, 900, 1ull << 40};
  const auto bytes = encode_spike_batch(ids);
  EXPECT_EQ(bytes.size(), 4 + 8 * ids.size());
  EXPECT_EQ(decode_spike_batch(bytes), ids);

  const std::vector<NeuronId> unsorted{5, 1};
  EXPECT_THROW(decode_spike_batch(encode_spike_batch(unsorted)), ProtocolError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_spike_batch(truncated), ProtocolError);

  const std::vector<FrequencyEntry> freq{{2, 0.25}, {7, 1.0}};
  const auto fb = encode_frequency_batch(freq);
  EXPECT_EQ(fb.size(), 4 + 16 * freq.size());
  EXPECT_EQ(decode_frequency_batch(fb), freq);
  const std::vector<FrequencyEntry> bad{{2, 1.5}};
  EXPECT_THROW(decode_frequency_batch(encode_frequency_batch(bad)), ProtocolError);
}

TEST(Lookup, AgreesWithLinearScan) {
  std::mt19937_64 rng(3);
  std::vector<NeuronId> batch;
  EXPECT_FALSE(lookup_spike(batch, 3));
  std::set<NeuronId> s;
  while (s.size() < 500) s.insert(rng() % 5000);
  batch.assign(s.begin(), s.end());
  EXPECT_TRUE(lookup_spike(batch, batch[17]));
  for (int q = 0; q < 10000; ++q) {
    const NeuronId id = rng() % 5000;
    EXPECT_EQ(lookup_spike(batch, id), std::find(batch.begin(), batch.end(), id) != batch.end());
  }
}

TEST(Frequency, Examples) {
  EXPECT_EQ(compute_frequency(0, 100), 0.0);
  EXPECT_EQ(compute_frequency(100, 100), 1.0);
  std::uint32_t count = 0;
  for (int t = 0; t < 100; ++t) count += (t % 10 == 0);
  EXPECT_DOUBLE_EQ(compute_frequency(count, 100), 0.1);
}

TEST(Frequency, BatchesCarryEveryConnectedNeuron) {
  const NeuronLayout layout{4, 2};
  Connectome c(layout, 0);
  c.add_out(1, 6);
  c.add_out(2, 1);
  const std::vector<std::uint32_t> counts{0, 0, 30, 100};
  const auto batches = gather_frequency_batches(c, counts, 100);
  EXPECT_TRUE(batches[0].empty());
  ASSERT_EQ(batches[1].size(), 1u);
  EXPECT_EQ(batches[1][0], (FrequencyEntry{1, 0.0}));
}

TEST(Sampling, DegenerateFrequencies) {
  for (std::uint64_t step = 0; step < 10000; ++step) {
    const auto key = remote_sample_key(1, 0, 7, step, Sampling::per_rank, 0);
    EXPECT_FALSE(sample_remote_spike(0.0, key));
    EXPECT_TRUE(sample_remote_spike(1.0, key));
  }
}

TEST(Sampling, TenPercentStaysWithinBinomialBounds) {
  for (auto sampling : {Sampling::per_rank, Sampling::per_target}) {
    const int n = 100000;
    int hits = 0;
    for (int step = 0; step < n; ++step) {
      hits += sample_remote_spike(0.1, remote_sample_key(42, 3, 17, step, sampling, 99));
    }
    EXPECT_LE(std::abs(hits / double(n) - 0.1), 3 * std::sqrt(0.1 * 0.9 / n));
  }
}

TEST(Sampling, PerRankSharesDrawsPerTargetDoesNot) {
  int differ_rank = 0;
  int differ_target = 0;
  for (std::uint64_t step = 0; step < 2000; ++step) {
    differ_rank += sample_remote_spike(0.5, remote_sample_key(1, 2, 9, step, Sampling::per_rank, 10)) !=
                   sample_remote_spike(0.5, remote_sample_key(1, 2, 9, step, Sampling::per_rank, 11));
    differ_target += sample_remote_spike(0.5, remote_sample_key(1, 2, 9, step, Sampling::per_target, 10)) !=
                     sample_remote_spike(0.5, remote_sample_key(1, 2, 9, step, Sampling::per_target, 11));
  }
  EXPECT_EQ(differ_rank, 0);
  EXPECT_GT(differ_target, 800);
}

TEST(NetInput, ExactModeCountsSignedSpikes) {
  const NeuronLayout layout{4, 2};
  Connectome c(layout, 0);
  EXPECT_EQ(net_input_count(c, 0, std::vector<std::uint8_t>(4, 1), RemoteActivity(Mode::exact, Sampling::per_rank, 1, layout, 0), 0), 0);

  c.add_in(0, {1, ElementKind::excitatory});
  c.add_in(0, {2, ElementKind::excitatory});
  c.add_in(0, {5, ElementKind::excitatory});
  c.add_in(0, {6, ElementKind::inhibitory});
  RemoteActivity remote(Mode::exact, Sampling::per_rank, 1, layout, 0);
  std::vector<Bytes> payloads(2);
  const std::vector<NeuronId> fired_remote{5};
  payloads[1] = encode_spike_batch(fired_remote);
  remote.receive(payloads);
  const std::vector<std::uint8_t> local{0, 1, 1, 0};
  EXPECT_EQ(net_input_count(c, 0, local, remote, 0), 3);

  const std::vector<NeuronId> both{5, 6};
  payloads[1] = encode_spike_batch(both);
  remote.receive(payloads);
  EXPECT_EQ(net_input_count(c, 0, local, remote, 0), 2);
}

TEST(NetInput, FrequencyModeUsesTheTransmittedRate) {
  const NeuronLayout layout{2, 2};
  Connectome c(layout, 1);
  c.add_in(0, {0, ElementKind::excitatory});
  RemoteActivity remote(Mode::frequency, Sampling::per_rank, 5, layout, 1);
  // No frequency received yet: the remote source counts as silent.
  EXPECT_EQ(net_input_count(c, 0, std::vector<std::uint8_t>(2), remote, 0), 0);
  std::vector<Bytes> payloads(2);
  const std::vector<FrequencyEntry> f{{0, 0.1}};
  payloads[0] = encode_frequency_batch(f);
  remote.receive(payloads);
  const int n = 100000;
  int hits = 0;
  for (int step = 0; step < n; ++step) hits += net_input_count(c, 0, std::vector<std::uint8_t>(2), remote, step);
  EXPECT_LE(std::abs(hits / double(n) - 0.1), 3 * std::sqrt(0.1 * 0.9 / n));
}

}  // namespace
}  // namespace plasti::spikes
