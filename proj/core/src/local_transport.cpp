// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/local_transport.hpp"

#include <exception>
#include <thread>

namespace plasti::transport {

LocalHub::LocalHub(std::uint32_t size, std::chrono::milliseconds timeout)
    : size_(size), timeout_(timeout), handlers_(size) {
  if (size == 0) throw ConfigError("rank count must be >= 1");
  for (auto& buffer : slots_) buffer.assign(size, std::vector<Bytes>(size));
}

void LocalHub::abort(const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (aborted_) return;
    aborted_ = true;
    abort_reason_ = reason;
  }
  cv_.notify_all();
}

bool LocalHub::aborted() const {
  std::lock_guard lock(mutex_);
  return aborted_;
}

void LocalHub::rendezvous(RankId me) {
  std::unique_lock lock(mutex_);
  if (aborted_) throw TransportError(me, "group aborted: " + abort_reason_);
  const auto generation = generation_;
  if (++arrived_ == size_) {
    arrived_ = 0;
    ++generation_;
    lock.unlock();
    cv_.notify_all();
    return;
  }
  const bool done = cv_.wait_for(lock, timeout_, [&] { return generation_ != generation || aborted_; });
  if (generation_ != generation) return;
  if (!done) {
    aborted_ = true;
    abort_reason_ = "rendezvous timed out on rank " + std::to_string(me);
    lock.unlock();
    cv_.notify_all();
    throw TransportError(me, "rendezvous timed out");
  }
  throw TransportError(me, "group aborted: " + abort_reason_);
}

LocalTransport::LocalTransport(std::shared_ptr<LocalHub> hub, RankId rank) : hub_(std::move(hub)), rank_(rank) {
  if (rank_ >= hub_->size()) throw ConfigError("rank " + std::to_string(rank_) + " outside the group");
}

void LocalTransport::set_fetch_handler(FetchHandler handler) {
  // Installed before the first collective; the rendezvous publishes it.
  std::lock_guard lock(hub_->mutex_);
  hub_->handlers_[rank_] = std::move(handler);
}

std::vector<Bytes> LocalTransport::exchange(std::vector<Bytes> payloads) {
  auto& slots = hub_->slots_[calls_++ % 2];
  for (RankId j = 0; j < size(); ++j) slots[rank_][j] = std::move(payloads[j]);
  hub_->rendezvous(rank_);
  std::vector<Bytes> received(size());
  for (RankId i = 0; i < size(); ++i) received[i] = std::move(slots[i][rank_]);
  return received;
}

std::vector<Bytes> LocalTransport::do_all_to_all(std::vector<Bytes> payloads) { return exchange(std::move(payloads)); }

std::optional<FetchRecord> LocalTransport::do_remote_fetch(RankId owner, std::uint64_t node_id) {
  FetchHandler* handler = nullptr;
  {
    std::lock_guard lock(hub_->mutex_);
    if (hub_->aborted_) throw TransportError(rank_, "group aborted: " + hub_->abort_reason_);
    handler = &hub_->handlers_[owner];
  }
  if (!*handler) throw TransportError(rank_, "rank " + std::to_string(owner) + " serves no fetches");
  return (*handler)(node_id);
}

void LocalTransport::do_barrier() { hub_->rendezvous(rank_); }

std::vector<Bytes> LocalTransport::do_gather_to_root(Bytes payload) {
  std::vector<Bytes> out(size());
  out[0] = std::move(payload);
  auto received = exchange(std::move(out));
  if (rank_ != 0) received.clear();
  return received;
}

void run_local_ranks(std::uint32_t ranks, const std::function<void(Transport&)>& body,
                     std::chrono::milliseconds timeout) {
  auto hub = std::make_shared<LocalHub>(ranks, timeout);
  std::vector<std::exception_ptr> errors(ranks);
  auto run_one = [&](RankId r) {
    try {
      LocalTransport transport(hub, r);
      body(transport);
    } catch (const std::exception& e) {
      errors[r] = std::current_exception();
      hub->abort(e.what());
    } catch (...) {
      errors[r] = std::current_exception();
      hub->abort("unknown error");
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(ranks);
  for (RankId r = 1; r < ranks; ++r) threads.emplace_back(run_one, r);
  run_one(0);
  for (auto& t : threads) t.join();
  rethrow_first_failure(errors);
}

}  // namespace plasti::transport
