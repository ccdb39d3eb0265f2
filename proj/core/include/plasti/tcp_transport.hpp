// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "plasti/transport.hpp"

namespace plasti::transport {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port,host:port,..." in rank order.
std::vector<Endpoint> parse_endpoints(const std::string& text);

/// A bound, listening IPv4 socket. Port 0 picks a free port.
class Listener {
 public:
  explicit Listener(const Endpoint& at);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }
  int release();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Full mesh of TCP connections. Collectives travel over one data connection
/// per rank pair as length-prefixed frames; one-sided fetches use a separate
/// connection per ordered pair served by a responder thread on the owner.
class TcpTransport final : public Transport {
 public:
  TcpTransport(RankId rank, std::vector<Endpoint> peers, std::chrono::milliseconds timeout = std::chrono::minutes(5));
  /// Uses an already listening socket (for loopback groups on ephemeral ports).
  TcpTransport(RankId rank, std::vector<Endpoint> peers, Listener& listener,
               std::chrono::milliseconds timeout = std::chrono::minutes(5));
  ~TcpTransport() override;

  RankId rank() const override { return rank_; }
  std::uint32_t size() const override { return static_cast<std::uint32_t>(peers_.size()); }
  void set_fetch_handler(FetchHandler handler) override;

 protected:
  std::vector<Bytes> do_all_to_all(std::vector<Bytes> payloads) override;
  std::optional<FetchRecord> do_remote_fetch(RankId owner, std::uint64_t node_id) override;
  void do_barrier() override;
  std::vector<Bytes> do_gather_to_root(Bytes payload) override;

 private:
  void connect_mesh(int listen_fd);
  std::vector<Bytes> exchange(std::vector<Bytes> payloads);
  void serve_fetches();

  RankId rank_;
  std::vector<Endpoint> peers_;
  std::chrono::milliseconds timeout_;
  std::vector<int> data_fds_;
  std::vector<int> fetch_out_fds_;   // our requests to rank j
  std::vector<int> fetch_in_fds_;    // requests from rank j
  std::vector<std::unique_ptr<std::mutex>> fetch_locks_;
  std::mutex handler_mutex_;
  FetchHandler handler_;
  int wake_pipe_[2] = {-1, -1};
  std::thread responder_;
  std::uint8_t round_ = 0;
};

/// Runs `body` on `ranks` threads connected over 127.0.0.1 TCP and rethrows
/// the first failure.
void run_tcp_loopback(std::uint32_t ranks, const std::function<void(Transport&)>& body,
                      std::chrono::milliseconds timeout = std::chrono::minutes(5));

}  // namespace plasti::transport
