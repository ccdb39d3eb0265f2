// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/octree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <string>

namespace plasti::octree {

namespace {

constexpr std::uint64_t kPathMask = (std::uint64_t{1} << 56) - 1;

bool is_power_of_two(std::uint64_t k) { return k != 0 && (k & (k - 1)) == 0; }

std::uint64_t pow8(unsigned e) { return std::uint64_t{1} << (3 * e); }

std::array<std::uint32_t, 3> deinterleave(std::uint64_t morton, unsigned depth) {
  std::array<std::uint32_t, 3> c{};
  for (unsigned i = 0; i < depth; ++i) {
    for (unsigned axis = 0; axis < 3; ++axis) {
      c[axis] |= static_cast<std::uint32_t>((morton >> (3 * i + axis)) & 1u) << i;
    }
  }
  return c;
}

// Integer cell coordinates at kMaxDepth. Coarser cells are right shifts of
// these, so every depth agrees on which half-open cell holds a position.
std::array<std::uint64_t, 3> fine_grid(const Domain& domain, const Vec3& p) {
  std::array<std::uint64_t, 3> g{};
  constexpr double scale = static_cast<double>(std::uint64_t{1} << kMaxDepth);
  for (int axis = 0; axis < 3; ++axis) {
    const double q = p[axis] / domain.extent[axis];
    if (!(q >= 0.0 && q < 1.0)) {
      std::ostringstream os;
      os << "position (" << p.x << ", " << p.y << ", " << p.z << ") outside the domain";
      throw std::out_of_range(os.str());
    }
    g[axis] = std::min(static_cast<std::uint64_t>(q * scale), (std::uint64_t{1} << kMaxDepth) - 1);
  }
  return g;
}

std::uint64_t morton_of_grid(const std::array<std::uint64_t, 3>& g, unsigned depth) {
  const unsigned shift = kMaxDepth - depth;
  return morton_index(static_cast<std::uint32_t>(g[0] >> shift), static_cast<std::uint32_t>(g[1] >> shift),
                      static_cast<std::uint32_t>(g[2] >> shift), depth + 1);
}

}  // namespace

void Domain::validate() const {
  for (int axis = 0; axis < 3; ++axis) {
    if (!(extent[axis] > 0.0) || !std::isfinite(extent[axis])) {
      throw ConfigError("domain extents must be positive and finite");
    }
  }
}

NodeId NodeId::from_raw(std::uint64_t raw) {
  const auto level = static_cast<unsigned>(raw >> 56);
  if (level < 1 || level > kMaxDepth + 1) throw ProtocolError("invalid node id level " + std::to_string(level));
  const unsigned depth = level - 1;
  if (depth < 18 && (raw & kPathMask) >= pow8(depth)) throw ProtocolError("invalid node id path");
  return NodeId(raw);
}

NodeId NodeId::at(unsigned depth, std::uint64_t morton) {
  if (depth > kMaxDepth) throw std::out_of_range("node depth exceeds the maximum");
  if (depth < 18 && morton >= pow8(depth)) throw std::out_of_range("Morton index out of range for depth");
  return NodeId((static_cast<std::uint64_t>(depth + 1) << 56) | morton);
}

NodeId NodeId::child(unsigned octant) const {
  if (depth() >= kMaxDepth) throw std::out_of_range("octree depth limit reached");
  return NodeId((static_cast<std::uint64_t>(level() + 1) << 56) | (morton() << 3) | (octant & 7u));
}

NodeId NodeId::parent() const {
  if (depth() == 0) throw std::out_of_range("the root has no parent");
  return NodeId((static_cast<std::uint64_t>(level() - 1) << 56) | (morton() >> 3));
}

NodeId NodeId::ancestor(unsigned d) const {
  if (d > depth()) throw std::out_of_range("ancestor depth below node");
  return NodeId((static_cast<std::uint64_t>(d + 1) << 56) | (morton() >> (3 * (depth() - d))));
}

unsigned branch_level(std::uint64_t rank_count) {
  if (!is_power_of_two(rank_count)) {
    throw ConfigError("rank count must be a power of two, got " + std::to_string(rank_count));
  }
  unsigned b = 1;
  while (!(pow8(b - 1) <= rank_count && rank_count < pow8(b))) ++b;
  return b;
}

std::uint64_t morton_index(std::uint32_t x, std::uint32_t y, std::uint32_t z, unsigned level) {
  if (level < 1 || level > kMaxDepth + 1) throw std::out_of_range("level out of range");
  const unsigned bits = level - 1;
  const std::uint64_t limit = std::uint64_t{1} << bits;
  if (x >= limit || y >= limit || z >= limit) {
    throw std::out_of_range("cell (" + std::to_string(x) + ", " + std::to_string(y) + ", " +
                            std::to_string(z) + ") outside level " + std::to_string(level));
  }
  std::uint64_t m = 0;
  for (unsigned i = 0; i < bits; ++i) {
    m |= static_cast<std::uint64_t>((x >> i) & 1u) << (3 * i);
    m |= static_cast<std::uint64_t>((y >> i) & 1u) << (3 * i + 1);
    m |= static_cast<std::uint64_t>((z >> i) & 1u) << (3 * i + 2);
  }
  return m;
}

MortonRange DomainAssignment::range_of(RankId rank) const {
  return {rank * subdomains_per_rank, (rank + 1) * subdomains_per_rank};
}

RankId DomainAssignment::owner_of_subdomain(std::uint64_t morton) const {
  return static_cast<RankId>(morton / subdomains_per_rank);
}

DomainAssignment assign_subdomains(std::uint64_t rank_count) {
  if (!is_power_of_two(rank_count)) {
    throw ConfigError("rank count must be a power of two, got " + std::to_string(rank_count));
  }
  unsigned b = 1;
  while (pow8(b) < rank_count) ++b;
  if (b > kMaxDepth) throw ConfigError("rank count too large");
  DomainAssignment a;
  a.rank_count = rank_count;
  a.branch_depth = b;
  a.subdomains_per_rank = pow8(b) / rank_count;
  return a;
}

double Box::max_edge() const {
  return std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
}

Box cell_box(const Domain& domain, NodeId id) {
  const unsigned d = id.depth();
  const auto c = deinterleave(id.morton(), d);
  const double cells = std::ldexp(1.0, static_cast<int>(d));
  Box box;
  box.lo = {c[0] * domain.extent.x / cells, c[1] * domain.extent.y / cells, c[2] * domain.extent.z / cells};
  box.hi = {(c[0] + 1) * domain.extent.x / cells, (c[1] + 1) * domain.extent.y / cells,
            (c[2] + 1) * domain.extent.z / cells};
  return box;
}

std::uint64_t cell_of(const Domain& domain, unsigned depth, const Vec3& position) {
  if (depth > kMaxDepth) throw std::out_of_range("depth exceeds the maximum");
  return morton_of_grid(fine_grid(domain, position), depth);
}

transport::FetchRecord encode_record(const NodeRecord& node) {
  Bytes buf;
  buf.reserve(kNodeRecordBytes);
  ByteWriter w(buf);
  std::uint64_t key = node.id.raw();
  if (node.kind == NodeKind::leaf_empty) key |= kLeafEmptyTag;
  if (node.kind == NodeKind::leaf_with_neuron) {
    if (node.neuron > kMaxNeuronId) throw std::out_of_range("neuron id exceeds 56 bits");
    key = kLeafNeuronTag | node.neuron;
  }
  w.u64(key);
  w.u32(node.vacant[0]);
  w.u32(node.vacant[1]);
  for (std::size_t k = 0; k < 2; ++k) w.vec3(node.vacant[k] > 0 ? node.centroid[k] : Vec3{});
  transport::FetchRecord out;
  std::copy(buf.begin(), buf.end(), out.begin());
  return out;
}

NodeRecord decode_record(std::span<const std::byte> bytes, NodeId expected) {
  if (bytes.size() != kNodeRecordBytes) throw ProtocolError("node record must be 64 bytes");
  ByteReader r(bytes);
  NodeRecord n;
  n.id = expected;
  const std::uint64_t key = r.u64();
  if (key & kLeafNeuronTag) {
    n.kind = NodeKind::leaf_with_neuron;
    n.neuron = key & ~kLeafNeuronTag;
  } else if (key & kLeafEmptyTag) {
    n.kind = NodeKind::leaf_empty;
    if ((key & ~kLeafEmptyTag) != expected.raw()) throw ProtocolError("node record for unexpected node");
  } else {
    n.kind = NodeKind::inner;
    if (key != expected.raw()) throw ProtocolError("node record for unexpected node");
  }
  n.vacant[0] = r.u32();
  n.vacant[1] = r.u32();
  n.centroid[0] = r.vec3();
  n.centroid[1] = r.vec3();
  return n;
}

NodeRecord combine(NodeId id, std::span<const NodeRecord> children) {
  NodeRecord n;
  n.id = id;
  n.kind = NodeKind::inner;
  for (std::size_t k = 0; k < 2; ++k) {
    std::uint64_t total = 0;
    Vec3 acc;
    for (const auto& c : children) {
      if (c.vacant[k] == 0) continue;
      total += c.vacant[k];
      acc = acc + static_cast<double>(c.vacant[k]) * c.centroid[k];
    }
    n.vacant[k] = static_cast<std::uint32_t>(total);
    if (total > 0) {
      const double t = static_cast<double>(total);
      n.centroid[k] = {acc.x / t, acc.y / t, acc.z / t};
    }
  }
  return n;
}

DistributedOctree::DistributedOctree(Domain domain, DomainAssignment assignment, RankId me)
    : domain_(domain), assignment_(assignment), me_(me), owned_(assignment.range_of(me)) {
  domain_.validate();
  if (me >= assignment_.rank_count) throw ConfigError("rank id outside the rank group");
  upper_.resize(assignment_.branch_depth + 1);
  for (unsigned d = 0; d <= assignment_.branch_depth; ++d) {
    upper_[d].resize(pow8(d));
    for (std::uint64_t m = 0; m < upper_[d].size(); ++m) {
      upper_[d][m].id = NodeId::at(d, m);
      upper_[d][m].kind = d < assignment_.branch_depth ? NodeKind::inner : NodeKind::leaf_empty;
    }
  }
}

void DistributedOctree::build(std::span<const PlacedNeuron> neurons) {
  const unsigned b = assignment_.branch_depth;
  positions_.clear();
  neuron_ids_.clear();
  std::vector<std::array<std::uint64_t, 3>> grid;
  std::vector<std::vector<std::uint32_t>> buckets(owned_.size());
  for (std::uint32_t i = 0; i < neurons.size(); ++i) {
    const auto& n = neurons[i];
    std::array<std::uint64_t, 3> g{};
    try {
      g = fine_grid(domain_, n.position);
    } catch (const std::out_of_range& e) {
      throw PlacementError("neuron " + std::to_string(n.id) + " on rank " + std::to_string(me_) + ": " + e.what());
    }
    const std::uint64_t sub = morton_of_grid(g, b);
    if (!owned_.contains(sub)) {
      throw PlacementError("neuron " + std::to_string(n.id) + " lies in subdomain " + std::to_string(sub) +
                           ", outside the subdomains of rank " + std::to_string(me_));
    }
    grid.push_back(g);
    positions_.push_back(n.position);
    neuron_ids_.push_back(n.id);
    buckets[sub - owned_.begin].push_back(i);
  }

  nodes_.clear();
  first_child_.clear();
  neuron_slot_.clear();
  branch_roots_.clear();
  index_.clear();
  for (std::uint64_t s = 0; s < owned_.size(); ++s) {
    const auto slot = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    first_child_.push_back(-1);
    neuron_slot_.push_back(-1);
    build_node(slot, NodeId::at(b, owned_.begin + s), buckets[s], grid);
    branch_roots_.push_back(slot);
  }
  for (std::uint64_t s = 0; s < owned_.size(); ++s) upper_[b][owned_.begin + s] = nodes_[branch_roots_[s]];
}

std::uint32_t DistributedOctree::build_node(std::uint32_t slot, NodeId id, std::vector<std::uint32_t>& members,
                                            const std::vector<std::array<std::uint64_t, 3>>& grid) {
  index_[id.raw()] = slot;
  NodeRecord& rec = nodes_[slot];
  rec = NodeRecord{};
  rec.id = id;
  if (members.empty()) {
    rec.kind = NodeKind::leaf_empty;
    return slot;
  }
  if (members.size() == 1) {
    rec.kind = NodeKind::leaf_with_neuron;
    rec.neuron = neuron_ids_[members[0]];
    neuron_slot_[slot] = static_cast<std::int32_t>(members[0]);
    return slot;
  }
  const unsigned d = id.depth();
  if (d >= kMaxDepth) {
    throw PlacementError("neurons " + std::to_string(neuron_ids_[members[0]]) + " and " +
                         std::to_string(neuron_ids_[members[1]]) + " on rank " + std::to_string(me_) +
                         " are too close to be separated by the octree");
  }
  rec.kind = NodeKind::inner;
  const auto first = static_cast<std::uint32_t>(nodes_.size());
  first_child_[slot] = static_cast<std::int32_t>(first);
  nodes_.resize(nodes_.size() + 8);
  first_child_.resize(nodes_.size(), -1);
  neuron_slot_.resize(nodes_.size(), -1);

  std::array<std::vector<std::uint32_t>, 8> parts;
  const unsigned shift = kMaxDepth - d - 1;
  for (auto m : members) {
    const auto& g = grid[m];
    const unsigned octant = static_cast<unsigned>(((g[0] >> shift) & 1u) | (((g[1] >> shift) & 1u) << 1) |
                                                  (((g[2] >> shift) & 1u) << 2));
    parts[octant].push_back(m);
  }
  for (unsigned o = 0; o < 8; ++o) build_node(first + o, id.child(o), parts[o], grid);
  return slot;
}

void DistributedOctree::aggregate(std::span<const std::array<std::uint32_t, 2>> vacant_dendritic) {
  if (vacant_dendritic.size() != positions_.size()) {
    throw std::invalid_argument("vacancy count does not match the number of local neurons");
  }
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    NodeRecord& rec = nodes_[i];
    switch (rec.kind) {
      case NodeKind::leaf_empty:
        rec.vacant = {0, 0};
        rec.centroid = {};
        break;
      case NodeKind::leaf_with_neuron: {
        const auto slot = static_cast<std::size_t>(neuron_slot_[i]);
        rec.vacant = vacant_dendritic[slot];
        for (std::size_t k = 0; k < 2; ++k) rec.centroid[k] = rec.vacant[k] > 0 ? positions_[slot] : Vec3{};
        break;
      }
      case NodeKind::inner: {
        const auto first = static_cast<std::size_t>(first_child_[i]);
        rec = combine(rec.id, std::span<const NodeRecord>(nodes_.data() + first, 8));
        break;
      }
    }
  }
  const unsigned b = assignment_.branch_depth;
  for (std::uint64_t s = 0; s < owned_.size(); ++s) upper_[b][owned_.begin + s] = nodes_[branch_roots_[s]];
}

void DistributedOctree::exchange_branch_nodes(transport::Transport& transport) {
  const unsigned b = assignment_.branch_depth;
  const std::uint32_t k = transport.size();
  if (k != assignment_.rank_count) throw ConfigError("transport size differs from the domain assignment");
  if (k > 1) {
    Bytes mine;
    mine.reserve(owned_.size() * kNodeRecordBytes);
    for (std::uint64_t s = 0; s < owned_.size(); ++s) {
      const auto rec = encode_record(nodes_[branch_roots_[s]]);
      mine.insert(mine.end(), rec.begin(), rec.end());
    }
    std::vector<Bytes> out(k);
    for (RankId r = 0; r < k; ++r) {
      if (r != me_) out[r] = mine;
    }
    auto in = transport.all_to_all(std::move(out));
    for (RankId r = 0; r < k; ++r) {
      if (r == me_) continue;
      const auto range = assignment_.range_of(r);
      if (in[r].size() != range.size() * kNodeRecordBytes) {
        throw ProtocolError("branch payload from rank " + std::to_string(r) + " has " +
                            std::to_string(in[r].size()) + " bytes");
      }
      for (std::uint64_t s = 0; s < range.size(); ++s) {
        std::span<const std::byte> rec(in[r].data() + s * kNodeRecordBytes, kNodeRecordBytes);
        upper_[b][range.begin + s] = decode_record(rec, NodeId::at(b, range.begin + s));
      }
    }
  }
  rebuild_upper();
}

void DistributedOctree::rebuild_upper() {
  const unsigned b = assignment_.branch_depth;
  for (unsigned d = b; d-- > 0;) {
    for (std::uint64_t m = 0; m < upper_[d].size(); ++m) {
      upper_[d][m] = combine(NodeId::at(d, m), std::span<const NodeRecord>(upper_[d + 1].data() + 8 * m, 8));
    }
  }
}

RankId DistributedOctree::owner_of(NodeId id) const {
  const unsigned b = assignment_.branch_depth;
  if (id.depth() < b) return me_;
  return assignment_.owner_of_subdomain(id.ancestor(b).morton());
}

bool DistributedOctree::holds(NodeId id) const {
  return id.depth() < assignment_.branch_depth || owner_of(id) == me_;
}

const NodeRecord* DistributedOctree::find_local(NodeId id) const {
  auto it = index_.find(id.raw());
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const NodeRecord* DistributedOctree::find(NodeId id) const {
  const unsigned b = assignment_.branch_depth;
  if (id.depth() < b) return &upper_[id.depth()][id.morton()];
  if (owner_of(id) == me_) return find_local(id);
  if (id.depth() == b) return &upper_[b][id.morton()];
  return nullptr;
}

std::span<const NodeRecord, 8> DistributedOctree::children(NodeId id) const {
  const unsigned b = assignment_.branch_depth;
  if (id.depth() < b) {
    return std::span<const NodeRecord, 8>(upper_[id.depth() + 1].data() + 8 * id.morton(), 8);
  }
  auto it = owner_of(id) == me_ ? index_.find(id.raw()) : index_.end();
  if (it == index_.end() || first_child_[it->second] < 0) {
    throw std::logic_error("children of node " + std::to_string(id.raw()) + " are not held by rank " +
                           std::to_string(me_));
  }
  return std::span<const NodeRecord, 8>(nodes_.data() + first_child_[it->second], 8);
}

std::optional<std::size_t> DistributedOctree::neuron_index(NodeId leaf) const {
  if (owner_of(leaf) != me_ || leaf.depth() < assignment_.branch_depth) return std::nullopt;
  auto it = index_.find(leaf.raw());
  if (it == index_.end() || neuron_slot_[it->second] < 0) return std::nullopt;
  return static_cast<std::size_t>(neuron_slot_[it->second]);
}

std::optional<NodeRecord> DistributedOctree::fetch_local(NodeId id) const {
  if (id.depth() < assignment_.branch_depth || owner_of(id) != me_) return std::nullopt;
  const auto* rec = find_local(id);
  if (!rec) return std::nullopt;
  return *rec;
}

Bytes DistributedOctree::serialize_upper() const {
  Bytes out;
  for (const auto& level : upper_) {
    for (const auto& rec : level) {
      const auto bytes = encode_record(rec);
      out.insert(out.end(), bytes.begin(), bytes.end());
    }
  }
  return out;
}

unsigned DistributedOctree::max_local_depth() const {
  unsigned d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.id.depth());
  return d;
}

}  // namespace plasti::octree
