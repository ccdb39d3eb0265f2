// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/tcp_transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <exception>
#include <sstream>

namespace plasti::transport {
namespace {

constexpr std::uint8_t kHelloData = 0;
constexpr std::uint8_t kHelloFetch = 1;
constexpr std::size_t kFrameHeader = 5;  // u32 length + u8 round tag
constexpr std::uint32_t kMaxFrame = 1u << 31;

using Clock = std::chrono::steady_clock;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

void set_nonblocking(int fd, bool on) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

sockaddr_in resolve(const Endpoint& at) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(at.port);
  if (::inet_pton(AF_INET, at.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (::getaddrinfo(at.host.c_str(), nullptr, &hints, &found) != 0 || !found) {
    throw ConfigError("cannot resolve host '" + at.host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(found->ai_addr)->sin_addr;
  ::freeaddrinfo(found);
  return addr;
}

// Blocking full write/read with a deadline, on a blocking or non-blocking fd.
void write_all(RankId me, int fd, const void* data, std::size_t n, std::chrono::milliseconds timeout) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w > 0) {
      p += w;
      n -= static_cast<std::size_t>(w);
      continue;
    }
    if (w < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) {
      pollfd pfd{fd, POLLOUT, 0};
      if (::poll(&pfd, 1, static_cast<int>(timeout.count())) == 0) throw TransportError(me, "send timed out");
      continue;
    }
    throw TransportError(me, errno_text("send"));
  }
}

void read_all(RankId me, int fd, void* data, std::size_t n, std::chrono::milliseconds timeout) {
  auto* p = static_cast<std::uint8_t*>(data);
  while (n > 0) {
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready == 0) throw TransportError(me, "receive timed out");
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError(me, errno_text("poll"));
    }
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) throw TransportError(me, "peer closed the connection");
    if (r < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      throw TransportError(me, errno_text("recv"));
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
}

int connect_with_retry(RankId me, const Endpoint& at, std::chrono::milliseconds timeout) {
  const auto addr = resolve(at);
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(me, errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      set_nodelay(fd);
      return fd;
    }
    ::close(fd);
    if (Clock::now() >= deadline) {
      throw TransportError(me, "cannot connect to " + at.host + ":" + std::to_string(at.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

void put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<Endpoint> parse_endpoints(const std::string& text) {
  std::vector<Endpoint> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("peer '" + item + "' is not host:port");
    Endpoint e;
    e.host = item.substr(0, colon);
    unsigned port = 0;
    const auto* begin = item.data() + colon + 1;
    const auto* end = item.data() + item.size();
    auto [ptr, ec] = std::from_chars(begin, end, port);
    if (ec != std::errc{} || ptr != end || port > 65535) throw ConfigError("bad port in peer '" + item + "'");
    e.port = static_cast<std::uint16_t>(port);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ConfigError("peer list is empty");
  return out;
}

Listener::Listener(const Endpoint& at) {
  const auto addr = resolve(at);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(0, errno_text("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const auto msg = errno_text("bind");
    close_fd(fd_);
    throw TransportError(0, msg);
  }
  if (::listen(fd_, 256) != 0) {
    const auto msg = errno_text("listen");
    close_fd(fd_);
    throw TransportError(0, msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

Listener::~Listener() { close_fd(fd_); }

int Listener::release() {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

TcpTransport::TcpTransport(RankId rank, std::vector<Endpoint> peers, std::chrono::milliseconds timeout)
    : rank_(rank), peers_(std::move(peers)), timeout_(timeout) {
  if (rank_ >= peers_.size()) throw ConfigError("rank outside the peer list");
  Listener listener(peers_[rank_]);
  connect_mesh(listener.release());
}

TcpTransport::TcpTransport(RankId rank, std::vector<Endpoint> peers, Listener& listener,
                           std::chrono::milliseconds timeout)
    : rank_(rank), peers_(std::move(peers)), timeout_(timeout) {
  if (rank_ >= peers_.size()) throw ConfigError("rank outside the peer list");
  connect_mesh(listener.release());
}

void TcpTransport::connect_mesh(int listen_fd) {
  const auto k = size();
  data_fds_.assign(k, -1);
  fetch_out_fds_.assign(k, -1);
  fetch_in_fds_.assign(k, -1);
  for (RankId j = 0; j < k; ++j) fetch_locks_.push_back(std::make_unique<std::mutex>());

  try {
    // Outgoing connections first; the listen backlog absorbs peers that have
    // not reached accept yet.
    auto hello = [&](int fd, std::uint8_t type) {
      std::uint8_t msg[5];
      msg[0] = type;
      put_u32(msg + 1, rank_);
      write_all(rank_, fd, msg, sizeof msg, timeout_);
    };
    for (RankId j = 0; j < k; ++j) {
      if (j == rank_) continue;
      if (j < rank_) {
        data_fds_[j] = connect_with_retry(rank_, peers_[j], timeout_);
        hello(data_fds_[j], kHelloData);
      }
      fetch_out_fds_[j] = connect_with_retry(rank_, peers_[j], timeout_);
      hello(fetch_out_fds_[j], kHelloFetch);
    }
    std::uint32_t expected = (k - 1 - rank_) + (k - 1);
    while (expected > 0) {
      pollfd pfd{listen_fd, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
      if (ready == 0) throw TransportError(rank_, "timed out waiting for peers to connect");
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw TransportError(rank_, errno_text("poll"));
      }
      int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw TransportError(rank_, errno_text("accept"));
      }
      set_nodelay(fd);
      std::uint8_t msg[5];
      try {
        read_all(rank_, fd, msg, sizeof msg, timeout_);
      } catch (...) {
        ::close(fd);
        throw;
      }
      const RankId from = get_u32(msg + 1);
      auto& slot = msg[0] == kHelloData ? data_fds_ : fetch_in_fds_;
      if (from >= k || from == rank_ || (msg[0] != kHelloData && msg[0] != kHelloFetch) ||
          (msg[0] == kHelloData && from < rank_) || slot[from] >= 0) {
        ::close(fd);
        throw TransportError(rank_, "unexpected hello from a peer");
      }
      slot[from] = fd;
      --expected;
    }
  } catch (...) {
    ::close(listen_fd);
    for (auto* fds : {&data_fds_, &fetch_out_fds_, &fetch_in_fds_}) {
      for (auto& fd : *fds) close_fd(fd);
    }
    throw;
  }
  ::close(listen_fd);
  for (auto fd : data_fds_) {
    if (fd >= 0) set_nonblocking(fd, true);
  }
  if (::pipe(wake_pipe_) != 0) throw TransportError(rank_, errno_text("pipe"));
  responder_ = std::thread([this] { serve_fetches(); });
}

TcpTransport::~TcpTransport() {
  if (responder_.joinable()) {
    const std::uint8_t stop = 1;
    [[maybe_unused]] auto n = ::write(wake_pipe_[1], &stop, 1);
    responder_.join();
  }
  close_fd(wake_pipe_[0]);
  close_fd(wake_pipe_[1]);
  for (auto* fds : {&data_fds_, &fetch_out_fds_, &fetch_in_fds_}) {
    for (auto& fd : *fds) close_fd(fd);
  }
}

void TcpTransport::set_fetch_handler(FetchHandler handler) {
  std::lock_guard lock(handler_mutex_);
  handler_ = std::move(handler);
}

void TcpTransport::serve_fetches() {
  std::vector<pollfd> fds;
  fds.push_back({wake_pipe_[0], POLLIN, 0});
  for (auto fd : fetch_in_fds_) {
    if (fd >= 0) fds.push_back({fd, POLLIN, 0});
  }
  for (;;) {
    const int ready = ::poll(fds.data(), fds.size(), -1);
    if (ready < 0) {
      if (errno == EINTR) continue;
      return;
    }
    if (fds[0].revents) return;
    for (std::size_t i = 1; i < fds.size(); ++i) {
      if (fds[i].fd < 0 || !fds[i].revents) continue;
      try {
        std::uint8_t request[8];
        read_all(rank_, fds[i].fd, request, sizeof request, timeout_);
        std::uint64_t id = 0;
        for (int b = 0; b < 8; ++b) id |= static_cast<std::uint64_t>(request[b]) << (8 * b);
        std::optional<FetchRecord> record;
        {
          std::lock_guard lock(handler_mutex_);
          if (handler_) record = handler_(id);
        }
        std::uint8_t reply[1 + kFetchRecordBytes] = {};
        if (record) {
          reply[0] = 1;
          std::memcpy(reply + 1, record->data(), kFetchRecordBytes);
        }
        write_all(rank_, fds[i].fd, reply, sizeof reply, timeout_);
      } catch (const std::exception&) {
        // The requester went away; stop serving that connection.
        fds[i].fd = -1;
      }
    }
  }
}

std::optional<FetchRecord> TcpTransport::do_remote_fetch(RankId owner, std::uint64_t node_id) {
  if (owner == rank_) {
    std::lock_guard lock(handler_mutex_);
    if (!handler_) throw TransportError(rank_, "no fetch handler installed");
    return handler_(node_id);
  }
  std::lock_guard lock(*fetch_locks_[owner]);
  std::uint8_t request[8];
  for (int b = 0; b < 8; ++b) request[b] = static_cast<std::uint8_t>(node_id >> (8 * b));
  write_all(rank_, fetch_out_fds_[owner], request, sizeof request, timeout_);
  std::uint8_t reply[1 + kFetchRecordBytes];
  read_all(rank_, fetch_out_fds_[owner], reply, sizeof reply, timeout_);
  if (reply[0] == 0) return std::nullopt;
  FetchRecord record;
  std::memcpy(record.data(), reply + 1, kFetchRecordBytes);
  return record;
}

std::vector<Bytes> TcpTransport::exchange(std::vector<Bytes> payloads) {
  const auto k = size();
  const std::uint8_t tag = round_++;
  struct Channel {
    std::array<std::uint8_t, kFrameHeader> out_header{};
    std::size_t sent = 0;  // over header + payload
    std::array<std::uint8_t, kFrameHeader> in_header{};
    std::size_t received = 0;
    bool header_done = false;
  };
  std::vector<Channel> ch(k);
  std::vector<Bytes> in(k);
  std::size_t pending = 0;
  for (RankId j = 0; j < k; ++j) {
    if (j == rank_) continue;
    if (payloads[j].size() >= kMaxFrame) throw TransportError(rank_, "payload too large");
    put_u32(ch[j].out_header.data(), static_cast<std::uint32_t>(payloads[j].size()));
    ch[j].out_header[4] = tag;
    pending += 2;
  }
  in[rank_] = std::move(payloads[rank_]);

  std::vector<pollfd> fds;
  std::vector<RankId> who;
  while (pending > 0) {
    fds.clear();
    who.clear();
    for (RankId j = 0; j < k; ++j) {
      if (j == rank_) continue;
      short events = 0;
      if (ch[j].sent < kFrameHeader + payloads[j].size()) events |= POLLOUT;
      if (!ch[j].header_done || ch[j].received < in[j].size()) events |= POLLIN;
      if (events) {
        fds.push_back({data_fds_[j], events, 0});
        who.push_back(j);
      }
    }
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(timeout_.count()));
    if (ready == 0) throw TransportError(rank_, "collective timed out");
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError(rank_, errno_text("poll"));
    }
    for (std::size_t i = 0; i < fds.size(); ++i) {
      const RankId j = who[i];
      auto& c = ch[j];
      const int fd = fds[i].fd;
      if (fds[i].revents & (POLLERR | POLLNVAL)) throw TransportError(rank_, "connection to rank " + std::to_string(j) + " failed");
      if ((fds[i].revents & POLLOUT) && c.sent < kFrameHeader + payloads[j].size()) {
        const void* src = c.sent < kFrameHeader
                              ? static_cast<const void*>(c.out_header.data() + c.sent)
                              : static_cast<const void*>(payloads[j].data() + (c.sent - kFrameHeader));
        const std::size_t len = c.sent < kFrameHeader ? kFrameHeader - c.sent
                                                      : payloads[j].size() - (c.sent - kFrameHeader);
        const ssize_t w = ::send(fd, src, len, MSG_NOSIGNAL);
        if (w < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
          throw TransportError(rank_, errno_text("send"));
        }
        if (w > 0) {
          c.sent += static_cast<std::size_t>(w);
          if (c.sent == kFrameHeader + payloads[j].size()) --pending;
        }
      }
      if (fds[i].revents & (POLLIN | POLLHUP)) {
        void* dst;
        std::size_t len;
        if (!c.header_done) {
          dst = c.in_header.data() + c.received;
          len = kFrameHeader - c.received;
        } else {
          dst = in[j].data() + c.received;
          len = in[j].size() - c.received;
        }
        if (len == 0) continue;
        const ssize_t r = ::recv(fd, dst, len, 0);
        if (r == 0) throw TransportError(rank_, "rank " + std::to_string(j) + " closed the connection");
        if (r < 0) {
          if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
          throw TransportError(rank_, errno_text("recv"));
        }
        c.received += static_cast<std::size_t>(r);
        if (!c.header_done && c.received == kFrameHeader) {
          if (c.in_header[4] != tag) throw ProtocolError("collective frames out of step with rank " + std::to_string(j));
          c.header_done = true;
          c.received = 0;
          in[j].resize(get_u32(c.in_header.data()));
          if (in[j].empty()) --pending;
        } else if (c.header_done && c.received == in[j].size()) {
          --pending;
        }
      }
    }
  }
  return in;
}

std::vector<Bytes> TcpTransport::do_all_to_all(std::vector<Bytes> payloads) { return exchange(std::move(payloads)); }

void TcpTransport::do_barrier() { exchange(std::vector<Bytes>(size())); }

std::vector<Bytes> TcpTransport::do_gather_to_root(Bytes payload) {
  std::vector<Bytes> out(size());
  out[0] = std::move(payload);
  auto received = exchange(std::move(out));
  if (rank_ != 0) received.clear();
  return received;
}

void run_tcp_loopback(std::uint32_t ranks, const std::function<void(Transport&)>& body,
                      std::chrono::milliseconds timeout) {
  if (ranks == 0) throw ConfigError("rank count must be >= 1");
  std::vector<std::unique_ptr<Listener>> listeners;
  std::vector<Endpoint> peers;
  for (RankId r = 0; r < ranks; ++r) {
    listeners.push_back(std::make_unique<Listener>(Endpoint{"127.0.0.1", 0}));
    peers.push_back({"127.0.0.1", listeners.back()->port()});
  }
  std::vector<std::exception_ptr> errors(ranks);
  auto run_one = [&](RankId r) {
    try {
      TcpTransport transport(r, peers, *listeners[r], timeout);
      body(transport);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (RankId r = 1; r < ranks; ++r) threads.emplace_back(run_one, r);
  run_one(0);
  for (auto& t : threads) t.join();
  rethrow_first_failure(errors);
}

}  // namespace plasti::transport
