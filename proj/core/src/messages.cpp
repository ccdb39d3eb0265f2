// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/messages.hpp"

namespace plasti::messages {

namespace {

ElementKind read_kind(ByteReader& in) {
  const auto v = in.u8();
  if (v > 1) throw ProtocolError("invalid element kind " + std::to_string(v));
  return static_cast<ElementKind>(v);
}

bool read_flag(ByteReader& in) {
  const auto v = in.u8();
  if (v > 1) throw ProtocolError("invalid flag byte " + std::to_string(v));
  return v == 1;
}

}  // namespace

void encode(const FormationRequestV1& m, Bytes& out) {
  ByteWriter w(out);
  w.u64(m.source);
  w.u64(m.target);
  w.u8(static_cast<std::uint8_t>(m.kind));
}

void encode(const FormationRequestV2& m, Bytes& out) {
  ByteWriter w(out);
  w.u64(m.source);
  w.vec3(m.source_position);
  w.u64(m.target_node);
  w.u8(m.target_is_leaf ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(m.kind));
}

void encode(const FormationResponseV1& m, Bytes& out) {
  ByteWriter(out).u8(m.accepted ? 1 : 0);
}

void encode(const FormationResponseV2& m, Bytes& out) {
  ByteWriter w(out);
  w.u64(m.found);
  w.u8(m.accepted ? 1 : 0);
}

void encode(const DeletionNotice& m, Bytes& out) {
  ByteWriter w(out);
  w.u64(m.source);
  w.u64(m.target);
  w.u8(static_cast<std::uint8_t>(m.kind));
}

FormationRequestV1 decode_request_v1(ByteReader& in) {
  FormationRequestV1 m;
  m.source = in.u64();
  m.target = in.u64();
  m.kind = read_kind(in);
  return m;
}

FormationRequestV2 decode_request_v2(ByteReader& in) {
  FormationRequestV2 m;
  m.source = in.u64();
  m.source_position = in.vec3();
  m.target_node = in.u64();
  m.target_is_leaf = read_flag(in);
  m.kind = read_kind(in);
  return m;
}

FormationResponseV1 decode_response_v1(ByteReader& in) {
  return {read_flag(in)};
}

FormationResponseV2 decode_response_v2(ByteReader& in) {
  FormationResponseV2 m;
  m.found = in.u64();
  m.accepted = read_flag(in);
  return m;
}

DeletionNotice decode_deletion(ByteReader& in) {
  DeletionNotice m;
  m.source = in.u64();
  m.target = in.u64();
  m.kind = read_kind(in);
  return m;
}

}  // namespace plasti::messages
