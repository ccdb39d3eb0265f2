// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plasti/types.hpp"
#include "plasti/wire.hpp"

namespace plasti::transport {

inline constexpr std::size_t kFetchRecordBytes = 64;
using FetchRecord = std::array<std::byte, kFetchRecordBytes>;

/// Payload-only byte accounting for one rank. Self-addressed data is never counted.
struct CommStats {
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t bytes_remotely_accessed = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t remote_fetches = 0;
  std::uint64_t sync_points = 0;

  CommStats& operator+=(const CommStats& o);
  friend bool operator==(const CommStats&, const CommStats&) = default;
};

class TransportError : public std::runtime_error {
 public:
  TransportError(RankId rank, const std::string& what);
  RankId rank() const { return rank_; }

 private:
  RankId rank_;
};

/// A rank of an in-process group failed; `cause` is the original exception.
class RankFailure : public std::runtime_error {
 public:
  RankFailure(RankId rank, std::exception_ptr cause, const std::string& what);
  RankId rank() const { return rank_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  RankId rank_;
  std::exception_ptr cause_;
};

/// Throws RankFailure for the most informative failure in `errors` (indexed by
/// rank), preferring root causes over follow-up transport errors. No-op when
/// every entry is empty.
void rethrow_first_failure(const std::vector<std::exception_ptr>& errors);

/// Answers a one-sided read of a node record owned by this rank. Returns
/// nullopt for unknown ids. Must not touch mutable simulation state.
using FetchHandler = std::function<std::optional<FetchRecord>(std::uint64_t node_id)>;

/// One participant's view of the rank group. all_to_all, barrier and
/// gather_to_root are collective; remote_fetch is one-sided.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual RankId rank() const = 0;
  virtual std::uint32_t size() const = 0;

  /// payloads[j] is delivered to rank j; result[i] holds what rank i addressed
  /// to us. Every call is a synchronization point, even with all-empty payloads.
  std::vector<Bytes> all_to_all(std::vector<Bytes> payloads);

  FetchRecord remote_fetch(RankId owner, std::uint64_t node_id);

  void barrier();

  /// Collects one payload per rank on rank 0 (empty result elsewhere). Used for
  /// result collection only and excluded from CommStats.
  std::vector<Bytes> gather_to_root(Bytes payload);

  virtual void set_fetch_handler(FetchHandler handler) = 0;

  const CommStats& stats() const { return stats_; }

 protected:
  virtual std::vector<Bytes> do_all_to_all(std::vector<Bytes> payloads) = 0;
  virtual std::optional<FetchRecord> do_remote_fetch(RankId owner, std::uint64_t node_id) = 0;
  virtual void do_barrier() = 0;
  virtual std::vector<Bytes> do_gather_to_root(Bytes payload) = 0;

 private:
  CommStats stats_;
};

}  // namespace plasti::transport
