// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plasti/types.hpp"
#include "plasti/wire.hpp"

namespace plasti::messages {

// All layouts are little-endian and packed.

/// source_id u64 | target_id u64 | element_kind u8
struct FormationRequestV1 {
  static constexpr std::size_t kSize = 17;
  NeuronId source = 0;
  NeuronId target = 0;
  ElementKind kind = ElementKind::excitatory;
  friend bool operator==(const FormationRequestV1&, const FormationRequestV1&) = default;
};

/// source_id u64 | position 3xf64 | target_node_id u64 | target_is_leaf u8 | element_kind u8
struct FormationRequestV2 {
  static constexpr std::size_t kSize = 42;
  NeuronId source = 0;
  Vec3 source_position;
  std::uint64_t target_node = 0;
  bool target_is_leaf = false;
  ElementKind kind = ElementKind::excitatory;
  friend bool operator==(const FormationRequestV2&, const FormationRequestV2&) = default;
};

/// status u8
struct FormationResponseV1 {
  static constexpr std::size_t kSize = 1;
  bool accepted = false;
  friend bool operator==(const FormationResponseV1&, const FormationResponseV1&) = default;
};

/// found_neuron_id u64 | status u8 (0 declined or none found, 1 success)
struct FormationResponseV2 {
  static constexpr std::size_t kSize = 9;
  NeuronId found = 0;
  bool accepted = false;
  friend bool operator==(const FormationResponseV2&, const FormationResponseV2&) = default;
};

/// Tells the partner of a broken synapse to release its side.
/// source_id u64 | target_id u64 | element_kind u8
struct DeletionNotice {
  static constexpr std::size_t kSize = 17;
  NeuronId source = 0;
  NeuronId target = 0;
  ElementKind kind = ElementKind::excitatory;
  friend bool operator==(const DeletionNotice&, const DeletionNotice&) = default;
};

void encode(const FormationRequestV1& m, Bytes& out);
void encode(const FormationRequestV2& m, Bytes& out);
void encode(const FormationResponseV1& m, Bytes& out);
void encode(const FormationResponseV2& m, Bytes& out);
void encode(const DeletionNotice& m, Bytes& out);

/// Decodes one message from the front of `in`; throws ProtocolError on short
/// input or invalid enum/flag bytes.
FormationRequestV1 decode_request_v1(ByteReader& in);
FormationRequestV2 decode_request_v2(ByteReader& in);
FormationResponseV1 decode_response_v1(ByteReader& in);
FormationResponseV2 decode_response_v2(ByteReader& in);
DeletionNotice decode_deletion(ByteReader& in);

/// Decodes a whole payload of back-to-back fixed-size messages.
template <typename Message, typename Decoder>
std::vector<Message> decode_all(std::span<const std::byte> payload, Decoder decode) {
  if (payload.size() % Message::kSize != 0) {
    throw ProtocolError("payload of " + std::to_string(payload.size()) + " bytes is not a multiple of " +
                        std::to_string(Message::kSize));
  }
  std::vector<Message> out;
  out.reserve(payload.size() / Message::kSize);
  ByteReader r(payload);
  while (!r.done()) out.push_back(decode(r));
  return out;
}

}  // namespace plasti::messages
