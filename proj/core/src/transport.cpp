// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/transport.hpp"

namespace plasti::transport {

CommStats& CommStats::operator+=(const CommStats& o) {
  bytes_sent += o.bytes_sent;
  bytes_received += o.bytes_received;
  bytes_remotely_accessed += o.bytes_remotely_accessed;
  messages_sent += o.messages_sent;
  remote_fetches += o.remote_fetches;
  sync_points += o.sync_points;
  return *this;
}

TransportError::TransportError(RankId rank, const std::string& what)
    : std::runtime_error("rank " + std::to_string(rank) + ": " + what), rank_(rank) {}

RankFailure::RankFailure(RankId rank, std::exception_ptr cause, const std::string& what)
    : std::runtime_error(what), rank_(rank), cause_(std::move(cause)) {}

void rethrow_first_failure(const std::vector<std::exception_ptr>& errors) {
  // Transport errors on other ranks are usually the echo of the real failure.
  std::optional<RankId> follow_up;
  for (RankId r = 0; r < errors.size(); ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const TransportError&) {
      if (!follow_up) follow_up = r;
    } catch (const std::exception& e) {
      throw RankFailure(r, errors[r], "rank " + std::to_string(r) + ": " + e.what());
    } catch (...) {
      throw RankFailure(r, errors[r], "rank " + std::to_string(r) + ": unknown error");
    }
  }
  if (follow_up) {
    try {
      std::rethrow_exception(errors[*follow_up]);
    } catch (const std::exception& e) {
      throw RankFailure(*follow_up, errors[*follow_up], e.what());
    }
  }
}

std::vector<Bytes> Transport::all_to_all(std::vector<Bytes> payloads) {
  const auto me = rank();
  if (payloads.size() != size()) {
    throw TransportError(me, "all_to_all needs one payload per rank, got " +
                                 std::to_string(payloads.size()));
  }
  for (RankId j = 0; j < payloads.size(); ++j) {
    if (j == me || payloads[j].empty()) continue;
    stats_.bytes_sent += payloads[j].size();
    stats_.messages_sent += 1;
  }
  auto received = do_all_to_all(std::move(payloads));
  for (RankId i = 0; i < received.size(); ++i) {
    if (i != me) stats_.bytes_received += received[i].size();
  }
  stats_.sync_points += 1;
  return received;
}

FetchRecord Transport::remote_fetch(RankId owner, std::uint64_t node_id) {
  if (owner >= size()) throw TransportError(rank(), "fetch from unknown rank " + std::to_string(owner));
  auto record = do_remote_fetch(owner, node_id);
  if (!record) {
    throw TransportError(rank(), "rank " + std::to_string(owner) + " does not own node " +
                                     std::to_string(node_id));
  }
  if (owner != rank()) {
    stats_.bytes_remotely_accessed += kFetchRecordBytes;
    stats_.remote_fetches += 1;
  }
  return *record;
}

void Transport::barrier() {
  do_barrier();
  stats_.sync_points += 1;
}

std::vector<Bytes> Transport::gather_to_root(Bytes payload) {
  return do_gather_to_root(std::move(payload));
}

}  // namespace plasti::transport
