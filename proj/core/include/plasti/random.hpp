// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace plasti {

using Rng = std::mt19937_64;

/// Tags separating the independent random streams derived from the master seed.
enum class StreamPurpose : std::uint64_t {
  position = 1,
  elements = 2,
  electrical = 3,
  search = 4,
  forwarded_search = 5,
  resolution = 6,
  deletion = 7,
  remote_sample = 8,
  neuron_kind = 9,
};

std::uint64_t mix64(std::uint64_t x);

/// Hashes (seed, a, b, c, purpose) into one 64-bit stream key. Any change of a
/// component yields an unrelated key, so streams never depend on evaluation order.
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         StreamPurpose purpose);

Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                StreamPurpose purpose);

/// Counter-based uniform draw in [0, 1) from a key (53 random mantissa bits).
double uniform_from_key(std::uint64_t key);

}  // namespace plasti
