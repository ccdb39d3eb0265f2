// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "plasti/local_transport.hpp"
#include "plasti/tcp_transport.hpp"

namespace plasti::transport {
namespace {

using Runner = std::function<void(std::uint32_t, const std::function<void(Transport&)>&)>;

struct Backend {
  const char* name;
  Runner run;
};

void PrintTo(const Backend& b, std::ostream* os) { *os << b.name; }

class TransportTest : public ::testing::TestWithParam<Backend> {
 protected:
  void run(std::uint32_t k, const std::function<void(Transport&)>& body) { GetParam().run(k, body); }
};

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::byte>(rng());
  return b;
}

TEST_P(TransportTest, SingleRankDeliversToItselfUncounted) {
  run(1, [](Transport& t) {
    const Bytes p{std::byte{1}, std::byte{2}, std::byte{3}};
    auto in = t.all_to_all({p});
    ASSERT_EQ(in.size(), 1u);
    EXPECT_EQ(in[0], p);
    EXPECT_EQ(t.stats().bytes_sent, 0u);
    EXPECT_EQ(t.stats().bytes_received, 0u);
    EXPECT_EQ(t.stats().sync_points, 1u);
  });
}

TEST_P(TransportTest, SeventeenByteMessageIsCounted) {
  std::mutex m;
  std::vector<CommStats> stats(2);
  run(2, [&](Transport& t) {
    std::vector<Bytes> out(2);
    if (t.rank() == 0) out[1] = Bytes(17, std::byte{0xab});
    auto in = t.all_to_all(out);
    if (t.rank() == 1) {
      EXPECT_EQ(in[0], Bytes(17, std::byte{0xab}));
    }
    std::lock_guard lock(m);
    stats[t.rank()] = t.stats();
  });
  EXPECT_EQ(stats[0].bytes_sent, 17u);
  EXPECT_EQ(stats[0].messages_sent, 1u);
  EXPECT_EQ(stats[1].bytes_received, 17u);
  EXPECT_EQ(stats[1].bytes_sent, 0u);
  EXPECT_EQ(stats[1].messages_sent, 0u);
}

TEST_P(TransportTest, ReceivedMatrixIsTransposeOfSent) {
  const std::uint32_t k = 4;
  std::mt19937_64 rng(21);
  std::vector<std::vector<Bytes>> sent(k, std::vector<Bytes>(k));
  for (auto& row : sent) {
    for (auto& p : row) p = random_bytes(rng, rng() % 3 == 0 ? 0 : rng() % 5000);
  }
  std::mutex m;
  std::vector<std::vector<Bytes>> received(k);
  std::vector<CommStats> stats(k);
  run(k, [&](Transport& t) {
    for (int round = 0; round < 3; ++round) {
      auto in = t.all_to_all(sent[t.rank()]);
      if (round == 2) {
        std::lock_guard lock(m);
        received[t.rank()] = in;
        stats[t.rank()] = t.stats();
      }
    }
  });
  std::uint64_t total_sent = 0;
  std::uint64_t total_received = 0;
  for (std::uint32_t i = 0; i < k; ++i) {
    total_sent += stats[i].bytes_sent;
    total_received += stats[i].bytes_received;
    for (std::uint32_t j = 0; j < k; ++j) EXPECT_EQ(received[j][i], sent[i][j]) << i << "->" << j;
  }
  EXPECT_EQ(total_sent, total_received);
}

TEST_P(TransportTest, FetchesAreCountedPerCall) {
  std::mutex m;
  std::vector<CommStats> stats(2);
  run(2, [&](Transport& t) {
    const auto me = t.rank();
    t.set_fetch_handler([me](std::uint64_t id) -> std::optional<FetchRecord> {
      if (id >= 100) return std::nullopt;
      FetchRecord r{};
      r[0] = static_cast<std::byte>(id);
      r[1] = static_cast<std::byte>(me);
      return r;
    });
    t.barrier();
    if (me == 0) {
      auto a = t.remote_fetch(1, 42);
      auto b = t.remote_fetch(1, 42);
      EXPECT_EQ(a, b);
      EXPECT_EQ(a[0], std::byte{42});
      EXPECT_EQ(a[1], std::byte{1});
      EXPECT_THROW(t.remote_fetch(1, 500), TransportError);
      t.remote_fetch(0, 3);  // own data is not remote
    }
    t.barrier();
    std::lock_guard lock(m);
    stats[me] = t.stats();
  });
  EXPECT_EQ(stats[0].bytes_remotely_accessed, 128u);
  EXPECT_EQ(stats[0].remote_fetches, 2u);
  EXPECT_EQ(stats[1].bytes_remotely_accessed, 0u);
}

TEST_P(TransportTest, BarrierReleasesOnlyAfterLastArrival) {
  const std::uint32_t k = 4;
  std::atomic<int> arrived{0};
  std::atomic<bool> early{false};
  run(k, [&](Transport& t) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20 * t.rank()));
    arrived.fetch_add(1);
    t.barrier();
    if (arrived.load() != int(k)) early = true;
  });
  EXPECT_FALSE(early.load());
}

TEST_P(TransportTest, SyncPointsFollowTheSchedule) {
  std::mutex m;
  std::vector<CommStats> stats(4);
  run(4, [&](Transport& t) {
    // Scripted rounds: 7 exchanges, 3 barriers, and gathers which are not counted.
    for (int i = 0; i < 7; ++i) t.all_to_all(std::vector<Bytes>(4));
    for (int i = 0; i < 3; ++i) t.barrier();
    auto g = t.gather_to_root(Bytes(10, std::byte{1}));
    if (t.rank() == 0) {
      EXPECT_EQ(g.size(), 4u);
      for (const auto& p : g) EXPECT_EQ(p.size(), 10u);
    } else {
      EXPECT_TRUE(g.empty());
    }
    std::lock_guard lock(m);
    stats[t.rank()] = t.stats();
  });
  for (const auto& s : stats) {
    EXPECT_EQ(s.sync_points, 10u);
    EXPECT_EQ(s.bytes_sent, 0u);
    EXPECT_EQ(s.messages_sent, 0u);
  }
}

TEST_P(TransportTest, FailingRankAbortsTheGroup) {
  try {
    run(4, [](Transport& t) {
      if (t.rank() == 2) throw std::runtime_error("boom");
      t.barrier();
    });
    FAIL() << "expected a failure";
  } catch (const RankFailure& e) {
    EXPECT_EQ(e.rank(), 2u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST_P(TransportTest, WrongPayloadCountIsRejected) {
  EXPECT_THROW(run(2, [](Transport& t) { t.all_to_all(std::vector<Bytes>(3)); }), RankFailure);
}

INSTANTIATE_TEST_SUITE_P(
    Backends, TransportTest,
    ::testing::Values(Backend{"local",
                              [](std::uint32_t k, const std::function<void(Transport&)>& body) {
                                run_local_ranks(k, body, std::chrono::seconds(20));
                              }},
                      Backend{"tcp",
                              [](std::uint32_t k, const std::function<void(Transport&)>& body) {
                                run_tcp_loopback(k, body, std::chrono::seconds(20));
                              }}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(LocalHub, TimeoutInsteadOfDeadlock) {
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(run_local_ranks(
                   2,
                   [](Transport& t) {
                     if (t.rank() == 0) t.barrier();
                   },
                   std::chrono::milliseconds(200)),
               RankFailure);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(Endpoints, Parse) {
  const auto e = parse_endpoints("127.0.0.1:5000,localhost:6001");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].host, "127.0.0.1");
  EXPECT_EQ(e[0].port, 5000);
  EXPECT_EQ(e[1].host, "localhost");
  EXPECT_EQ(e[1].port, 6001);
  EXPECT_THROW(parse_endpoints("nohost"), ConfigError);
  EXPECT_THROW(parse_endpoints("a:99999"), ConfigError);
}

}  // namespace
}  // namespace plasti::transport
