// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "plasti/transport.hpp"

namespace plasti::transport {

/// Shared state of an in-process rank group: mailbox slots, fetch handlers and
/// a reusable rendezvous. Any rank that fails aborts the hub so the others do
/// not wait forever.
class LocalHub {
 public:
  explicit LocalHub(std::uint32_t size, std::chrono::milliseconds timeout = std::chrono::minutes(5));

  std::uint32_t size() const { return size_; }
  void abort(const std::string& reason);
  bool aborted() const;

 private:
  friend class LocalTransport;

  void rendezvous(RankId me);

  const std::uint32_t size_;
  const std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::uint32_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  bool aborted_ = false;
  std::string abort_reason_;
  // Two buffers, alternated per exchange, so one rendezvous per call suffices.
  std::vector<std::vector<Bytes>> slots_[2];
  std::vector<FetchHandler> handlers_;
};

class LocalTransport final : public Transport {
 public:
  LocalTransport(std::shared_ptr<LocalHub> hub, RankId rank);

  RankId rank() const override { return rank_; }
  std::uint32_t size() const override { return hub_->size(); }
  void set_fetch_handler(FetchHandler handler) override;

 protected:
  std::vector<Bytes> do_all_to_all(std::vector<Bytes> payloads) override;
  std::optional<FetchRecord> do_remote_fetch(RankId owner, std::uint64_t node_id) override;
  void do_barrier() override;
  std::vector<Bytes> do_gather_to_root(Bytes payload) override;

 private:
  std::vector<Bytes> exchange(std::vector<Bytes> payloads);

  std::shared_ptr<LocalHub> hub_;
  RankId rank_;
  std::uint64_t calls_ = 0;
};

/// Runs `body` once per rank on its own thread over a fresh hub and rethrows
/// the first failure after all threads have stopped.
void run_local_ranks(std::uint32_t ranks, const std::function<void(Transport&)>& body,
                     std::chrono::milliseconds timeout = std::chrono::minutes(5));

}  // namespace plasti::transport
