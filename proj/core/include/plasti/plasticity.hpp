// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "plasti/messages.hpp"
#include "plasti/octree.hpp"
#include "plasti/random.hpp"
#include "plasti/transport.hpp"
#include "plasti/types.hpp"

namespace plasti::plasticity {

using octree::NodeRecord;

enum class Algorithm { classic, location_aware };

struct SearchConfig {
  double theta = 0.3;
  double sigma = 750.0;  // Gaussian kernel width in micrometres
  Algorithm algorithm = Algorithm::location_aware;
  bool allow_autapses = false;
  void validate() const;
};

/// The neuron looking for a partner with one vacant axonal element.
struct SearchSource {
  NeuronId id = 0;
  Vec3 position;
  ElementKind kind = ElementKind::excitatory;
};

/// Barnes-Hut acceptance: max cell edge / distance to the centroid of `kind`
/// below theta. The root and zero distances are always rejected.
bool accepts(const NodeRecord& node, ElementKind kind, const Vec3& source, double theta,
             const octree::Domain& domain);

/// Supplies the children of inner nodes during a search. Returning nullopt
/// marks the node as terminal: it is offered as a candidate as-is.
class NodeSource {
 public:
  virtual ~NodeSource() = default;
  virtual std::optional<std::span<const NodeRecord, 8>> children(const NodeRecord& node) = 0;
};

/// Candidate nodes below `start` for `source`, sorted by node id. `start`
/// itself is always expanded unless it is a leaf.
std::vector<NodeRecord> expand_candidates(const NodeRecord& start, const SearchSource& source,
                                          const SearchConfig& config, const octree::Domain& domain,
                                          NodeSource& nodes);

/// Kernel weight vacant * exp(-d^2 / sigma^2) of a candidate.
double kernel_weight(const NodeRecord& node, ElementKind kind, const Vec3& source, double sigma);

/// Inverse-CDF draw over the candidates in the given order. nullopt when all
/// weights vanish (no viable partner).
std::optional<std::size_t> select_target(std::span<const NodeRecord> candidates, const Vec3& source,
                                         ElementKind kind, double sigma, Rng& rng);

/// Resolves children from the local octree and, for the classic algorithm,
/// through one-sided fetches of remote nodes. The location-aware view treats
/// every branch node as terminal. Fetched children are cached for
/// the lifetime of the view (one connectivity update) unless caching is off.
class TreeView : public NodeSource {
 public:
  TreeView(const octree::DistributedOctree& tree, Algorithm algorithm, transport::Transport* transport,
           bool cache_fetches = true);

  std::optional<std::span<const NodeRecord, 8>> children(const NodeRecord& node) override;

  const octree::DistributedOctree& tree() const { return tree_; }
  Algorithm algorithm() const { return algorithm_; }

  /// Counters since construction.
  std::uint64_t fetches() const { return fetches_; }
  std::uint64_t remote_expansions() const { return remote_expansions_; }
  std::uint64_t fetches_below_branch() const { return fetches_below_branch_; }

 private:
  const octree::DistributedOctree& tree_;
  Algorithm algorithm_;
  transport::Transport* transport_;
  bool cache_;
  std::unordered_map<std::uint64_t, std::array<NodeRecord, 8>> cache_map_;
  std::array<NodeRecord, 8> scratch_{};
  std::uint64_t fetches_ = 0;
  std::uint64_t remote_expansions_ = 0;
  std::uint64_t fetches_below_branch_ = 0;
};

struct SearchTrace {
  std::uint32_t rounds = 0;              // expand/select iterations
  std::uint32_t fetches = 0;             // one-sided fetches issued
  std::uint32_t remote_expansions = 0;   // remote nodes whose children were read
  bool entered_remote = false;           // expanded a remote node (classic) or forwarded to another rank (aware)
  unsigned chosen_depth = 0;             // depth of the final node chosen locally
};

struct ClassicResult {
  std::optional<messages::FormationRequestV1> request;
  SearchTrace trace;
};

/// Repeats expand/select from the root until a leaf is chosen, fetching
/// remote nodes as needed.
ClassicResult find_target_classic(const SearchSource& source, const SearchConfig& config, TreeView& view,
                                  Rng& rng);

struct AwareResult {
  std::optional<messages::FormationRequestV2> request;
  RankId destination = 0;  // owner of the target node
  SearchTrace trace;
};

/// Searches the replicated upper tree only: branch nodes are never expanded
/// here, and the first chosen node at or below the branch depth is handed to
/// its owner as a V2 request (self-addressed when the owner is this rank).
AwareResult find_target_location_aware(const SearchSource& source, const SearchConfig& config, TreeView& view,
                                       Rng& rng);

/// Continues a forwarded search inside the locally owned subtree named by the
/// request; `view` must expand local nodes (a classic view). nullopt when the
/// node is not owned here or no viable leaf exists.
std::optional<messages::FormationRequestV1> handle_forwarded_request(const messages::FormationRequestV2& request,
                                                                     const SearchConfig& config, TreeView& view,
                                                                     Rng& rng);

/// Each (target, kind) accepts a uniformly random subset of its requests of
/// size min(#requests, vacant). Returns accept flags aligned with `requests`.
std::vector<bool> resolve_requests(
    std::span<const messages::FormationRequestV1> requests,
    const std::function<std::uint32_t(NeuronId, ElementKind)>& vacant,
    const std::function<Rng(NeuronId, ElementKind)>& stream_for_target);

/// Indices into `bound` (sorted ascending before sampling) of the synapses to
/// break when `retraction` elements are lost and `vacant` of them were unbound.
std::vector<std::size_t> delete_elements(std::uint32_t retraction, std::uint32_t vacant,
                                         std::size_t bound_count, Rng& rng);

/// Exact probability with which the classic search from `source` ends at each
/// neuron, enumerating every restart chain. Needs a tree holding all nodes
/// (single rank). Missing mass is the no-partner probability.
std::map<NeuronId, double> partner_distribution(const octree::DistributedOctree& tree, const SearchSource& source,
                                                const SearchConfig& config);

}  // namespace plasti::plasticity
