// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "plasti/local_transport.hpp"
#include "plasti/plasticity.hpp"

namespace plasti::plasticity {
namespace {

using octree::DistributedOctree;
using octree::Domain;
using octree::NodeId;
using octree::NodeKind;
using octree::PlacedNeuron;

struct Fixture {
  Domain domain;
  std::vector<PlacedNeuron> neurons;
  std::vector<std::array<std::uint32_t, 2>> vacant;  // dendritic, per neuron
};

Fixture random_fixture(std::size_t n, std::uint64_t seed, std::uint32_t max_vacant = 3) {
  Fixture f;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  for (std::size_t i = 0; i < n; ++i) {
    f.neurons.push_back({i, {u(rng), u(rng), u(rng)}});
    f.vacant.push_back({static_cast<std::uint32_t>(rng() % (max_vacant + 1)), 0});
  }
  return f;
}

// Builds the distributed tree of `f` on every rank of a local group, serves
// fetches, and runs `body` on each rank. Ranks stay alive until all are done.
void with_trees(std::uint32_t k, const Fixture& f,
                const std::function<void(DistributedOctree&, transport::Transport&)>& body) {
  const auto a = octree::assign_subdomains(k);
  transport::run_local_ranks(
      k,
      [&](transport::Transport& t) {
        std::vector<PlacedNeuron> mine;
        std::vector<std::array<std::uint32_t, 2>> vac;
        for (std::size_t i = 0; i < f.neurons.size(); ++i) {
          const auto sub = octree::cell_of(f.domain, a.branch_depth, f.neurons[i].position);
          if (a.owner_of_subdomain(sub) != t.rank()) continue;
          mine.push_back(f.neurons[i]);
          vac.push_back(f.vacant[i]);
        }
        DistributedOctree tree(f.domain, a, t.rank());
        tree.build(mine);
        tree.aggregate(vac);
        tree.exchange_branch_nodes(t);
        t.set_fetch_handler([&tree](std::uint64_t raw) -> std::optional<transport::FetchRecord> {
          auto rec = tree.fetch_local(NodeId::from_raw(raw));
          if (!rec) return std::nullopt;
          return octree::encode_record(*rec);
        });
        t.barrier();
        body(tree, t);
        t.barrier();
      },
      std::chrono::seconds(60));
}

DistributedOctree single_rank_tree(const Fixture& f) {
  DistributedOctree tree(f.domain, octree::assign_subdomains(1), 0);
  tree.build(f.neurons);
  tree.aggregate(f.vacant);
  tree.rebuild_upper();
  return tree;
}

NodeRecord node_at_distance(unsigned depth, double distance, std::uint32_t vacant = 1) {
  NodeRecord n;
  n.id = NodeId::at(depth, 0);
  n.kind = NodeKind::inner;
  n.vacant = {vacant, 0};
  n.centroid[0] = {distance, 0.0, 0.0};
  return n;
}

class NoChildren : public NodeSource {
 public:
  std::optional<std::span<const NodeRecord, 8>> children(const NodeRecord&) override { return std::nullopt; }
};

TEST(Acceptance, Examples) {
  Domain d;
  d.extent = {1600.0, 1600.0, 1600.0};
  const Vec3 origin{};
  // Depth 4 cells are 100 um wide.
  EXPECT_TRUE(accepts(node_at_distance(4, 1000.0), ElementKind::excitatory, origin, 0.2, d));
  EXPECT_FALSE(accepts(node_at_distance(4, 400.0), ElementKind::excitatory, origin, 0.2, d));
  NodeRecord root = node_at_distance(0, 1e9);
  root.id = NodeId::root();
  EXPECT_FALSE(accepts(root, ElementKind::excitatory, origin, 1e9, d));
  for (unsigned depth = 1; depth < 10; ++depth) {
    EXPECT_FALSE(accepts(node_at_distance(depth, 1e6), ElementKind::excitatory, origin, 0.0, d));
  }
  EXPECT_FALSE(accepts(node_at_distance(3, 0.0), ElementKind::excitatory, origin, 1e9, d));
}

TEST(Candidates, LeafStartIsASingleton) {
  NodeRecord leaf;
  leaf.id = NodeId::at(2, 9);
  leaf.kind = NodeKind::leaf_with_neuron;
  leaf.neuron = 5;
  leaf.vacant = {1, 0};
  NoChildren none;
  const SearchSource src{1, {}, ElementKind::excitatory};
  const auto c = expand_candidates(leaf, src, SearchConfig{}, Domain{}, none);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].neuron, 5u);
  const SearchSource self{5, {}, ElementKind::excitatory};
  EXPECT_TRUE(expand_candidates(leaf, self, SearchConfig{}, Domain{}, none).empty());
}

TEST(Candidates, ThetaZeroListsEveryViableLeaf) {
  const auto f = random_fixture(60, 3);
  const auto tree = single_rank_tree(f);
  TreeView view(tree, Algorithm::classic, nullptr);
  SearchConfig cfg;
  cfg.theta = 0.0;
  const SearchSource src{7, f.neurons[7].position, ElementKind::excitatory};
  const auto c = expand_candidates(tree.root(), src, cfg, f.domain, view);
  std::set<NeuronId> got;
  for (const auto& n : c) {
    EXPECT_EQ(n.kind, NodeKind::leaf_with_neuron);
    got.insert(n.neuron);
  }
  std::set<NeuronId> expect;
  for (std::size_t i = 0; i < f.neurons.size(); ++i) {
    if (f.vacant[i][0] > 0 && i != 7) expect.insert(i);
  }
  EXPECT_EQ(got, expect);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end(), [](auto& a, auto& b) { return a.id < b.id; }));
}

TEST(Candidates, VacancyIsConservedExceptTheSource) {
  for (double theta : {0.0, 0.3, 0.8, 2.0}) {
    const auto f = random_fixture(80, 4);
    const auto tree = single_rank_tree(f);
    TreeView view(tree, Algorithm::classic, nullptr);
    SearchConfig cfg;
    cfg.theta = theta;
    for (std::size_t s = 0; s < f.neurons.size(); s += 7) {
      const SearchSource src{s, f.neurons[s].position, ElementKind::excitatory};
      const auto c = expand_candidates(tree.root(), src, cfg, f.domain, view);
      std::uint64_t total = 0;
      bool source_inside_aggregate = false;
      const auto source_cell = [&](unsigned depth) {
        return NodeId::at(depth, octree::cell_of(f.domain, depth, src.position));
      };
      for (const auto& n : c) {
        total += n.vacant[0];
        if (!n.is_leaf() && source_cell(n.id.depth()) == n.id) source_inside_aggregate = true;
      }
      const std::uint64_t own = source_inside_aggregate ? 0 : f.vacant[s][0];
      EXPECT_EQ(total, tree.root().vacant[0] - own) << "theta " << theta << " source " << s;
    }
  }
}

TEST(Selection, SingleCandidateIsCertain) {
  const std::vector<NodeRecord> c{node_at_distance(3, 500.0)};
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_target(c, {}, ElementKind::excitatory, 750.0, rng), 0u);
  EXPECT_FALSE(select_target({}, {}, ElementKind::excitatory, 750.0, rng).has_value());
}

TEST(Selection, EquidistantPairIsFair) {
  auto a = node_at_distance(3, 300.0);
  auto b = a;
  b.id = NodeId::at(3, 1);
  b.centroid[0] = {0.0, 300.0, 0.0};
  const std::vector<NodeRecord> c{a, b};
  Rng rng(2);
  const int n = 10000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += *select_target(c, {}, ElementKind::excitatory, 750.0, rng) == 0;
  EXPECT_LE(std::abs(first / double(n) - 0.5), 3 * std::sqrt(0.25 / n));
}

TEST(Selection, FrequenciesFollowKernelWeights) {
  const std::array<double, 3> dist{100.0, 200.0, 400.0};
  std::vector<NodeRecord> c;
  std::array<double, 3> w{};
  double total = 0;
  for (int i = 0; i < 3; ++i) {
    auto n = node_at_distance(3, dist[i]);
    n.id = NodeId::at(3, i);
    c.push_back(n);
    w[i] = std::exp(-dist[i] * dist[i] / (750.0 * 750.0));
    total += w[i];
  }
  Rng rng(3);
  const int n = 100000;
  std::array<int, 3> hits{};
  for (int i = 0; i < n; ++i) ++hits[*select_target(c, {}, ElementKind::excitatory, 750.0, rng)];
  for (int i = 0; i < 3; ++i) {
    const double p = w[i] / total;
    EXPECT_LE(std::abs(hits[i] / double(n) - p), 3 * std::sqrt(p * (1 - p) / n)) << i;
  }
}

TEST(Selection, ZeroWeightMeansNoPartner) {
  const std::vector<NodeRecord> c{node_at_distance(3, 1e6)};
  Rng rng(4);
  EXPECT_FALSE(select_target(c, {}, ElementKind::excitatory, 1.0, rng).has_value());
}

TEST(DirectSolution, ThetaZeroMatchesGaussianKernel) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = random_fixture(32, seed);
    const auto tree = single_rank_tree(f);
    SearchConfig cfg;
    cfg.theta = 0.0;
    for (std::size_t s = 0; s < f.neurons.size(); ++s) {
      const SearchSource src{s, f.neurons[s].position, ElementKind::excitatory};
      const auto dist = partner_distribution(tree, src, cfg);
      std::vector<double> w(f.neurons.size(), 0.0);
      double total = 0;
      for (std::size_t i = 0; i < f.neurons.size(); ++i) {
        if (i == s) continue;
        const double d2 = (f.neurons[i].position - src.position).squared_norm();
        w[i] = f.vacant[i][0] * std::exp(-d2 / (cfg.sigma * cfg.sigma));
        total += w[i];
      }
      for (std::size_t i = 0; i < f.neurons.size(); ++i) {
        const auto it = dist.find(i);
        const double p = it == dist.end() ? 0.0 : it->second;
        EXPECT_NEAR(p, w[i] / total, 1e-12);
      }
    }
  }
}

TEST(DirectSolution, BarnesHutMassSumsToOne) {
  const auto f = random_fixture(200, 8);
  const auto tree = single_rank_tree(f);
  SearchConfig cfg;
  cfg.theta = 0.5;
  const SearchSource src{0, f.neurons[0].position, ElementKind::excitatory};
  double mass = 0;
  for (const auto& [id, p] : partner_distribution(tree, src, cfg)) {
    EXPECT_NE(id, 0u);
    mass += p;
  }
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(Classic, SingleRankNeedsNoFetches) {
  const auto f = random_fixture(100, 5);
  const auto tree = single_rank_tree(f);
  TreeView view(tree, Algorithm::classic, nullptr);
  Rng rng(5);
  for (std::size_t s = 0; s < 100; ++s) {
    const auto r = find_target_classic({s, f.neurons[s].position, ElementKind::excitatory}, SearchConfig{}, view, rng);
    ASSERT_TRUE(r.request.has_value());
    EXPECT_NE(r.request->target, s);
    EXPECT_LT(r.request->target, 100u);
    EXPECT_EQ(r.trace.fetches, 0u);
    EXPECT_FALSE(r.trace.entered_remote);
    EXPECT_LE(r.trace.rounds, r.trace.chosen_depth);
  }
}

// Source on rank 0 without vacancies; every vacant leaf lives on rank 1.
Fixture split_fixture() {
  Fixture f;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> low(0.0, 500.0);
  std::uniform_real_distribution<double> high(500.0, 1000.0);
  f.neurons.push_back({0, {100.0, 100.0, 100.0}});
  f.vacant.push_back({0, 0});
  for (NeuronId i = 1; i <= 16; ++i) {
    // Octants 4..7 (z >= 500) belong to rank 1 of 2. Pairs share a small cell to deepen the tree.
    const Vec3 base{low(rng), low(rng), high(rng)};
    f.neurons.push_back({i, base});
    f.vacant.push_back({1, 0});
    ++i;
    f.neurons.push_back({i, {base.x + 0.05 * i, base.y, base.z}});
    f.vacant.push_back({1, 0});
  }
  return f;
}

TEST(Classic, FetchesTrackThePathDepthBelowTheBranch) {
  const auto f = split_fixture();
  std::mutex m;
  std::vector<SearchTrace> traces;
  with_trees(2, f, [&](DistributedOctree& tree, transport::Transport& t) {
    if (t.rank() != 0) return;
    SearchConfig cfg;
    cfg.theta = 1e6;  // accept every aggregate: one expansion per level
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
      TreeView view(tree, Algorithm::classic, &t, false);
      const auto r = find_target_classic({0, f.neurons[0].position, ElementKind::excitatory}, cfg, view, rng);
      ASSERT_TRUE(r.request.has_value());
      std::lock_guard lock(m);
      traces.push_back(r.trace);
    }
  });
  std::set<unsigned> depths;
  for (const auto& tr : traces) {
    EXPECT_TRUE(tr.entered_remote);
    EXPECT_GT(tr.fetches, 0u);
    EXPECT_EQ(tr.fetches, 8 * (tr.chosen_depth - 1));
    depths.insert(tr.chosen_depth);
  }
  EXPECT_GT(depths.size(), 1u);
  EXPECT_GT(*depths.rbegin(), 6u);
}

TEST(Classic, CacheAvoidsRefetching) {
  const auto f = split_fixture();
  with_trees(2, f, [&](DistributedOctree& tree, transport::Transport& t) {
    if (t.rank() != 0) return;
    const NodeRecord* branch = nullptr;
    for (std::uint64_t m = 4; m < 8 && !branch; ++m) {
      const auto* n = tree.find(NodeId::at(1, m));
      if (n->kind == NodeKind::inner) branch = n;
    }
    ASSERT_NE(branch, nullptr);
    const auto before = t.stats().bytes_remotely_accessed;
    TreeView uncached(tree, Algorithm::classic, &t, false);
    uncached.children(*branch);
    uncached.children(*branch);
    EXPECT_EQ(t.stats().bytes_remotely_accessed - before, 2 * 8 * 64u);
    TreeView cached(tree, Algorithm::classic, &t, true);
    cached.children(*branch);
    cached.children(*branch);
    EXPECT_EQ(t.stats().bytes_remotely_accessed - before, 3 * 8 * 64u);
    EXPECT_EQ(cached.fetches(), 8u);
    EXPECT_EQ(cached.remote_expansions(), 2u);
  });
}

TEST(Aware, SingleRankChoosesALocalTarget) {
  const auto f = random_fixture(100, 9);
  const auto tree = single_rank_tree(f);
  TreeView view(tree, Algorithm::location_aware, nullptr);
  TreeView local(tree, Algorithm::classic, nullptr);
  Rng rng(9);
  for (std::size_t s = 0; s < 100; ++s) {
    const auto r =
        find_target_location_aware({s, f.neurons[s].position, ElementKind::excitatory}, SearchConfig{}, view, rng);
    ASSERT_TRUE(r.request.has_value());
    EXPECT_EQ(r.destination, 0u);
    EXPECT_FALSE(r.trace.entered_remote);
    EXPECT_EQ(r.trace.fetches, 0u);
    const auto v1 = handle_forwarded_request(*r.request, SearchConfig{}, local, rng);
    ASSERT_TRUE(v1.has_value());
    EXPECT_NE(v1->target, s);
  }
}

TEST(Aware, RemoteNodesBecomeV2RequestsWithoutFetches) {
  const auto f = split_fixture();
  std::mutex m;
  int inner = 0;
  int leaves = 0;
  with_trees(2, f, [&](DistributedOctree& tree, transport::Transport& t) {
    if (t.rank() != 0) return;
    Rng rng(10);
    for (double theta : {0.0, 0.3, 1e6}) {
      SearchConfig cfg;
      cfg.theta = theta;
      TreeView view(tree, Algorithm::location_aware, &t);
      for (int i = 0; i < 200; ++i) {
        const auto r = find_target_location_aware({0, f.neurons[0].position, ElementKind::excitatory}, cfg, view, rng);
        ASSERT_TRUE(r.request.has_value());
        EXPECT_EQ(r.destination, 1u);
        EXPECT_TRUE(r.trace.entered_remote);
        const auto node = NodeId::from_raw(r.request->target_node);
        EXPECT_EQ(node.depth(), 1u);
        const auto* rec = tree.find(node);
        EXPECT_EQ(r.request->target_is_leaf, rec->is_leaf());
        std::lock_guard lock(m);
        (rec->is_leaf() ? leaves : inner) += 1;
      }
      EXPECT_EQ(view.fetches(), 0u);
    }
    EXPECT_EQ(t.stats().remote_fetches, 0u);
  });
  EXPECT_GT(inner, 0);
}

TEST(Forwarded, LeafTargetNeedsNoSearch) {
  const auto f = random_fixture(40, 11);
  const auto tree = single_rank_tree(f);
  TreeView view(tree, Algorithm::classic, nullptr);
  Rng rng(11);
  const auto leaf_cell = octree::cell_of(f.domain, 1, f.neurons[3].position);
  // Find the leaf holding neuron 3 by walking down its cells.
  for (unsigned depth = 1; depth <= octree::kMaxDepth; ++depth) {
    const auto id = NodeId::at(depth, octree::cell_of(f.domain, depth, f.neurons[3].position));
    const auto* rec = tree.find(id);
    ASSERT_NE(rec, nullptr);
    if (rec->is_leaf()) {
      messages::FormationRequestV2 req{99, {}, id.raw(), true, ElementKind::excitatory};
      const auto v1 = handle_forwarded_request(req, SearchConfig{}, view, rng);
      ASSERT_TRUE(v1.has_value());
      EXPECT_EQ(v1->target, 3u);
      EXPECT_EQ(v1->source, 99u);
      break;
    }
  }
  (void)leaf_cell;
  messages::FormationRequestV2 bogus{1, {}, 12345, false, ElementKind::excitatory};
  EXPECT_FALSE(handle_forwarded_request(bogus, SearchConfig{}, view, rng).has_value());
}

TEST(Forwarded, SingleNeuronBelowIsCertainAndFetchFree) {
  Fixture f;
  // Two neurons in octant 0; the subtree below branch node 0 is inner with
  // one vacant neuron.
  f.neurons = {{0, {10.0, 10.0, 10.0}}, {1, {20.0, 10.0, 10.0}}, {2, {900.0, 900.0, 900.0}}};
  f.vacant = {{0, 0}, {1, 0}, {0, 0}};
  with_trees(2, f, [&](DistributedOctree& tree, transport::Transport& t) {
    if (t.rank() != 0) return;
    TreeView view(tree, Algorithm::classic, &t);
    Rng rng(12);
    const auto branch = NodeId::at(1, 0);
    ASSERT_EQ(tree.find(branch)->kind, NodeKind::inner);
    for (int i = 0; i < 100; ++i) {
      messages::FormationRequestV2 req{2, {900.0, 900.0, 900.0}, branch.raw(), false, ElementKind::excitatory};
      const auto v1 = handle_forwarded_request(req, SearchConfig{}, view, rng);
      ASSERT_TRUE(v1.has_value());
      EXPECT_EQ(v1->target, 1u);
    }
    EXPECT_EQ(view.fetches(), 0u);
    EXPECT_EQ(t.stats().remote_fetches, 0u);
    // Not owned here: rejected.
    messages::FormationRequestV2 foreign{2, {}, NodeId::at(1, 7).raw(), false, ElementKind::excitatory};
    EXPECT_FALSE(handle_forwarded_request(foreign, SearchConfig{}, view, rng).has_value());
  });
}

std::function<Rng(NeuronId, ElementKind)> streams(std::uint64_t seed) {
  return [seed](NeuronId id, ElementKind k) { return make_stream(seed, id, kind_index(k), 0, StreamPurpose::resolution); };
}

TEST(Resolution, Examples) {
  using messages::FormationRequestV1;
  const std::vector<FormationRequestV1> three{{1, 9, ElementKind::excitatory},
                                              {2, 9, ElementKind::excitatory},
                                              {3, 9, ElementKind::excitatory}};
  const auto one = resolve_requests(three, [](NeuronId, ElementKind) { return 1u; }, streams(1));
  EXPECT_EQ(std::count(one.begin(), one.end(), true), 1);
  const std::vector<FormationRequestV1> two(three.begin(), three.begin() + 2);
  const auto both = resolve_requests(two, [](NeuronId, ElementKind) { return 5u; }, streams(1));
  EXPECT_EQ(std::count(both.begin(), both.end(), true), 2);
}

TEST(Resolution, RandomStormsRespectCapacity) {
  std::mt19937_64 rng(13);
  for (int storm = 0; storm < 500; ++storm) {
    const int targets = 1 + rng() % 20;
    std::map<std::pair<NeuronId, ElementKind>, std::uint32_t> capacity;
    std::vector<messages::FormationRequestV1> reqs;
    const int n = rng() % 200;
    for (int i = 0; i < n; ++i) {
      const auto kind = (rng() & 1) ? ElementKind::inhibitory : ElementKind::excitatory;
      reqs.push_back({rng() % 1000, rng() % targets, kind});
    }
    for (int t = 0; t < targets; ++t) {
      for (auto k : {ElementKind::excitatory, ElementKind::inhibitory}) capacity[{t, k}] = rng() % 6;
    }
    const auto acc = resolve_requests(
        reqs, [&](NeuronId t, ElementKind k) { return capacity.at({t, k}); }, streams(storm));
    ASSERT_EQ(acc.size(), reqs.size());
    std::map<std::pair<NeuronId, ElementKind>, std::pair<std::uint32_t, std::uint32_t>> tally;
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      auto& [accepted, declined] = tally[{reqs[i].target, reqs[i].kind}];
      (acc[i] ? accepted : declined) += 1;
    }
    for (const auto& [key, ad] : tally) {
      const auto requests = ad.first + ad.second;
      const auto cap = capacity.at(key);
      EXPECT_LE(ad.first, cap);
      EXPECT_EQ(ad.second, requests > cap ? requests - cap : 0u);
    }
  }
}

TEST(Resolution, WinnersAreUniform) {
  std::vector<messages::FormationRequestV1> reqs;
  for (NeuronId s = 0; s < 4; ++s) reqs.push_back({s, 50, ElementKind::excitatory});
  std::array<int, 4> wins{};
  const int n = 10000;
  for (int trial = 0; trial < n; ++trial) {
    const auto acc = resolve_requests(reqs, [](NeuronId, ElementKind) { return 1u; }, streams(trial + 100));
    for (int i = 0; i < 4; ++i) wins[i] += acc[i];
  }
  double chi2 = 0;
  for (int w : wins) chi2 += (w - n / 4.0) * (w - n / 4.0) / (n / 4.0);
  EXPECT_LT(chi2, 16.27);  // 3 dof, p = 0.001
}

TEST(Deletion, Examples) {
  Rng rng(14);
  EXPECT_TRUE(delete_elements(1, 2, 4, rng).empty());
  EXPECT_TRUE(delete_elements(0, 0, 4, rng).empty());
  EXPECT_EQ(delete_elements(3, 1, 4, rng).size(), 2u);
  EXPECT_EQ(delete_elements(9, 0, 4, rng).size(), 4u);
}

TEST(Deletion, UniformOverBoundSynapses) {
  Rng rng(15);
  std::array<int, 4> hits{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto d = delete_elements(1, 0, 4, rng);
    ASSERT_EQ(d.size(), 1u);
    ++hits[d[0]];
  }
  double chi2 = 0;
  for (int h : hits) chi2 += (h - n / 4.0) * (h - n / 4.0) / (n / 4.0);
  EXPECT_LT(chi2, 16.27);
}

}  // namespace
}  // namespace plasti::plasticity
