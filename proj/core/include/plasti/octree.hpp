// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "plasti/transport.hpp"
#include "plasti/types.hpp"
#include "plasti/wire.hpp"

namespace plasti::octree {

/// Simulation region [0, lx) x [0, ly) x [0, lz) in micrometres.
struct Domain {
  Vec3 extent{1000.0, 1000.0, 1000.0};
  void validate() const;
};

/// Deepest depth below the root a node may have (3 path bits per depth in 56 bits).
inline constexpr unsigned kMaxDepth = 18;

/// Octree node identifier: 8 bits of level (root = level 1) above 56 bits of
/// Morton path, three bits per depth with the first octant choice highest.
class NodeId {
 public:
  constexpr NodeId() = default;
  static constexpr NodeId root() { return NodeId(std::uint64_t{1} << 56); }
  static NodeId from_raw(std::uint64_t raw);
  static NodeId at(unsigned depth, std::uint64_t morton);

  constexpr std::uint64_t raw() const { return raw_; }
  constexpr unsigned level() const { return static_cast<unsigned>(raw_ >> 56); }
  constexpr unsigned depth() const { return level() - 1; }
  /// Morton index of this cell among the 8^depth cells of its depth.
  constexpr std::uint64_t morton() const { return raw_ & ((std::uint64_t{1} << 56) - 1); }
  NodeId child(unsigned octant) const;
  NodeId parent() const;
  /// Ancestor at `depth` (which must not exceed this node's depth).
  NodeId ancestor(unsigned depth) const;

  friend constexpr bool operator==(NodeId, NodeId) = default;
  friend constexpr auto operator<=>(NodeId a, NodeId b) { return a.raw_ <=> b.raw_; }

 private:
  explicit constexpr NodeId(std::uint64_t raw) : raw_(raw) {}
  std::uint64_t raw_ = std::uint64_t{1} << 56;
};

/// Smallest b with 8^(b-1) <= k < 8^b. k must be a power of two.
unsigned branch_level(std::uint64_t rank_count);

/// Bit-interleaved index of grid cell (x, y, z) at `level` (root = level 1,
/// grid 2^(level-1) per axis). x takes the lowest bit of each bit-plane.
std::uint64_t morton_index(std::uint32_t x, std::uint32_t y, std::uint32_t z, unsigned level);

struct MortonRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  std::uint64_t size() const { return end - begin; }
  bool contains(std::uint64_t m) const { return m >= begin && m < end; }
};

struct DomainAssignment {
  std::uint64_t rank_count = 1;
  unsigned branch_depth = 1;  // depth of branch nodes below the root
  std::uint64_t subdomains_per_rank = 8;

  std::uint64_t subdomain_count() const { return rank_count * subdomains_per_rank; }
  MortonRange range_of(RankId rank) const;
  RankId owner_of_subdomain(std::uint64_t morton) const;
};

/// Splits the 8^b subdomains into equal consecutive Morton ranges, b being the
/// smallest depth >= 1 with 8^b >= k. Throws ConfigError unless k is a power of two.
DomainAssignment assign_subdomains(std::uint64_t rank_count);

struct Box {
  Vec3 lo;
  Vec3 hi;
  double max_edge() const;
};

Box cell_box(const Domain& domain, NodeId id);

/// Morton index of the depth-`depth` cell containing `position` (half-open
/// cells). Throws std::out_of_range when the position is outside the domain.
std::uint64_t cell_of(const Domain& domain, unsigned depth, const Vec3& position);

enum class NodeKind : std::uint8_t { inner, leaf_with_neuron, leaf_empty };

struct NodeRecord {
  NodeId id;
  NodeKind kind = NodeKind::leaf_empty;
  std::array<std::uint32_t, 2> vacant{};  // dendritic, indexed by kind_index()
  std::array<Vec3, 2> centroid{};        // meaningful only where vacant > 0
  NeuronId neuron = 0;                   // leaf_with_neuron only

  std::uint32_t vacant_of(ElementKind kind) const { return vacant[kind_index(kind)]; }
  const Vec3& centroid_of(ElementKind kind) const { return centroid[kind_index(kind)]; }
  bool is_leaf() const { return kind != NodeKind::inner; }
};

/// Exchange/fetch record layout (64 B, little-endian):
///   key u64 | vacant_ex u32 | vacant_in u32 | centroid_ex 3xf64 | centroid_in 3xf64
/// The key is the node id for inner nodes, the node id with bit 62 set for
/// empty leaves, and bit 63 over the neuron id for leaves holding a neuron.
inline constexpr std::size_t kNodeRecordBytes = 64;
inline constexpr std::uint64_t kLeafNeuronTag = std::uint64_t{1} << 63;
inline constexpr std::uint64_t kLeafEmptyTag = std::uint64_t{1} << 62;
inline constexpr NeuronId kMaxNeuronId = (std::uint64_t{1} << 56) - 1;

transport::FetchRecord encode_record(const NodeRecord& node);
/// Decodes a record the caller knows to describe node `expected`.
NodeRecord decode_record(std::span<const std::byte> bytes, NodeId expected);

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlacedNeuron {
  NeuronId id = 0;
  Vec3 position;
};

/// One rank's share of the distributed spatial octree: a replicated upper part
/// (depth 0 .. branch depth) and the locally owned subtrees below the branch nodes.
class DistributedOctree {
 public:
  DistributedOctree(Domain domain, DomainAssignment assignment, RankId me);

  /// Subdivides every owned subdomain until each leaf holds at most one neuron.
  /// Neurons are addressed by their index in `neurons` from here on.
  void build(std::span<const PlacedNeuron> neurons);

  /// Sets leaf vacancies (indexed like the `build` input) and sums them up to
  /// the owned branch nodes.
  void aggregate(std::span<const std::array<std::uint32_t, 2>> vacant_dendritic);

  /// All-to-all exchange of branch records, then recomputes the replicated
  /// levels above the branch depth. Without it only the local part is valid.
  void exchange_branch_nodes(transport::Transport& transport);

  /// Recomputes the upper levels from the current branch records (used
  /// directly when there is a single rank).
  void rebuild_upper();

  const Domain& domain() const { return domain_; }
  const DomainAssignment& assignment() const { return assignment_; }
  unsigned branch_depth() const { return assignment_.branch_depth; }
  RankId rank() const { return me_; }

  const NodeRecord& root() const { return upper_[0][0]; }

  /// Owner of the subtree containing `id`; nodes above branch depth are
  /// replicated and reported as owned by the caller.
  RankId owner_of(NodeId id) const;
  /// True when this rank holds the record and children of `id`.
  bool holds(NodeId id) const;

  /// Record of a replicated or locally owned node, nullptr otherwise.
  const NodeRecord* find(NodeId id) const;
  /// Children of a held inner node (8 consecutive records).
  std::span<const NodeRecord, 8> children(NodeId id) const;

  /// Local neuron index of a locally owned leaf.
  std::optional<std::size_t> neuron_index(NodeId leaf) const;
  /// Record of an owned node for a one-sided fetch.
  std::optional<NodeRecord> fetch_local(NodeId id) const;

  /// Concatenated records of all replicated nodes, for agreement checks.
  Bytes serialize_upper() const;

  std::size_t local_node_count() const { return nodes_.size(); }
  unsigned max_local_depth() const;
  const Vec3& neuron_position(std::size_t local_index) const { return positions_[local_index]; }

 private:
  std::uint32_t build_node(std::uint32_t slot, NodeId id, std::vector<std::uint32_t>& members,
                           const std::vector<std::array<std::uint64_t, 3>>& grid);
  const NodeRecord* find_local(NodeId id) const;

  Domain domain_;
  DomainAssignment assignment_;
  RankId me_;
  MortonRange owned_;

  std::vector<std::vector<NodeRecord>> upper_;  // [depth][morton], depth 0 .. branch_depth

  std::vector<NodeRecord> nodes_;
  std::vector<std::int32_t> first_child_;   // -1 for leaves
  std::vector<std::int32_t> neuron_slot_;   // local neuron index or -1
  std::vector<std::uint32_t> branch_roots_;  // per owned subdomain, in Morton order
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  std::vector<Vec3> positions_;
  std::vector<NeuronId> neuron_ids_;
};

/// Sums vacancies and forms vacancy-weighted centroids of `children`.
NodeRecord combine(NodeId id, std::span<const NodeRecord> children);

}  // namespace plasti::octree
