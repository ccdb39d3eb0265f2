// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/plasticity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace plasti::plasticity {

using octree::DistributedOctree;
using octree::NodeId;
using octree::NodeKind;

void SearchConfig::validate() const {
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ConfigError("theta must be >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("kernel sigma must be > 0");
}

bool accepts(const NodeRecord& node, ElementKind kind, const Vec3& source, double theta,
             const octree::Domain& domain) {
  if (node.id.depth() == 0) return false;
  const double distance = (source - node.centroid_of(kind)).norm();
  if (distance == 0.0) return false;
  const double edge = std::ldexp(std::max({domain.extent.x, domain.extent.y, domain.extent.z}),
                                 -static_cast<int>(node.id.depth()));
  return edge / distance < theta;
}

std::vector<NodeRecord> expand_candidates(const NodeRecord& start, const SearchSource& source,
                                          const SearchConfig& config, const octree::Domain& domain,
                                          NodeSource& nodes) {
  std::vector<NodeRecord> out;
  auto viable_leaf = [&](const NodeRecord& n) {
    return n.kind == NodeKind::leaf_with_neuron && n.vacant_of(source.kind) > 0 &&
           (config.allow_autapses || n.neuron != source.id);
  };
  if (start.is_leaf()) {
    if (viable_leaf(start)) out.push_back(start);
    return out;
  }
  auto kids = nodes.children(start);
  if (!kids) throw std::logic_error("search start node cannot be expanded");
  std::vector<NodeRecord> stack(kids->begin(), kids->end());
  while (!stack.empty()) {
    const NodeRecord n = stack.back();
    stack.pop_back();
    if (n.vacant_of(source.kind) == 0) continue;
    if (n.is_leaf()) {
      if (viable_leaf(n)) out.push_back(n);
      continue;
    }
    if (accepts(n, source.kind, source.position, config.theta, domain)) {
      out.push_back(n);
      continue;
    }
    auto sub = nodes.children(n);
    if (!sub) {
      out.push_back(n);
      continue;
    }
    stack.insert(stack.end(), sub->begin(), sub->end());
  }
  std::sort(out.begin(), out.end(), [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
  return out;
}

double kernel_weight(const NodeRecord& node, ElementKind kind, const Vec3& source, double sigma) {
  const double d2 = (source - node.centroid_of(kind)).squared_norm();
  return static_cast<double>(node.vacant_of(kind)) * std::exp(-d2 / (sigma * sigma));
}

std::optional<std::size_t> select_target(std::span<const NodeRecord> candidates, const Vec3& source,
                                         ElementKind kind, double sigma, Rng& rng) {
  if (candidates.empty()) return std::nullopt;
  std::vector<double> cumulative(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += kernel_weight(candidates[i], kind, source, sigma);
    cumulative[i] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) return std::nullopt;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (u < cumulative[i]) return i;
  }
  // u rounded up to total: fall back to the last candidate with positive weight.
  for (std::size_t i = candidates.size(); i-- > 0;) {
    if (i == 0 || cumulative[i] > cumulative[i - 1]) return i;
  }
  return std::nullopt;
}

TreeView::TreeView(const DistributedOctree& tree, Algorithm algorithm, transport::Transport* transport,
                   bool cache_fetches)
    : tree_(tree), algorithm_(algorithm), transport_(transport), cache_(cache_fetches) {}

std::optional<std::span<const NodeRecord, 8>> TreeView::children(const NodeRecord& node) {
  if (node.kind != NodeKind::inner) return std::nullopt;
  if (algorithm_ == Algorithm::location_aware && node.id.depth() >= tree_.branch_depth()) return std::nullopt;
  if (tree_.holds(node.id)) return tree_.children(node.id);

  ++remote_expansions_;
  if (cache_) {
    auto it = cache_map_.find(node.id.raw());
    if (it != cache_map_.end()) return std::span<const NodeRecord, 8>(it->second);
  }
  if (!transport_) throw std::logic_error("remote node reached without a transport");
  const RankId owner = tree_.owner_of(node.id);
  std::array<NodeRecord, 8> kids;
  for (unsigned o = 0; o < 8; ++o) {
    const NodeId child = node.id.child(o);
    const auto bytes = transport_->remote_fetch(owner, child.raw());
    kids[o] = octree::decode_record(bytes, child);
    ++fetches_;
    if (child.depth() >= tree_.branch_depth()) ++fetches_below_branch_;
  }
  if (cache_) {
    auto [it, inserted] = cache_map_.emplace(node.id.raw(), kids);
    return std::span<const NodeRecord, 8>(it->second);
  }
  scratch_ = kids;
  return std::span<const NodeRecord, 8>(scratch_);
}

namespace {

void finish_trace(SearchTrace& trace, const TreeView& view, std::uint64_t fetches0, std::uint64_t expansions0) {
  trace.fetches = static_cast<std::uint32_t>(view.fetches() - fetches0);
  trace.remote_expansions = static_cast<std::uint32_t>(view.remote_expansions() - expansions0);
  trace.entered_remote = trace.entered_remote || trace.remote_expansions > 0;
}

// Expand/select from `start` until a leaf is chosen, staying within what the
// view can resolve.
std::optional<NodeRecord> descend_to_leaf(NodeRecord start, const SearchSource& source, const SearchConfig& config,
                                          TreeView& view, Rng& rng, SearchTrace& trace) {
  const auto& domain = view.tree().domain();
  for (;;) {
    ++trace.rounds;
    const auto candidates = expand_candidates(start, source, config, domain, view);
    const auto idx = select_target(candidates, source.position, source.kind, config.sigma, rng);
    if (!idx) return std::nullopt;
    const NodeRecord& chosen = candidates[*idx];
    trace.chosen_depth = chosen.id.depth();
    if (chosen.kind == NodeKind::leaf_with_neuron) return chosen;
    start = chosen;
  }
}

}  // namespace

ClassicResult find_target_classic(const SearchSource& source, const SearchConfig& config, TreeView& view,
                                  Rng& rng) {
  ClassicResult result;
  const auto f0 = view.fetches();
  const auto e0 = view.remote_expansions();
  if (auto leaf = descend_to_leaf(view.tree().root(), source, config, view, rng, result.trace)) {
    result.request = messages::FormationRequestV1{source.id, leaf->neuron, source.kind};
  }
  finish_trace(result.trace, view, f0, e0);
  return result;
}

AwareResult find_target_location_aware(const SearchSource& source, const SearchConfig& config, TreeView& view,
                                       Rng& rng) {
  AwareResult result;
  const auto& tree = view.tree();
  const auto f0 = view.fetches();
  const auto e0 = view.remote_expansions();
  NodeRecord start = tree.root();
  for (;;) {
    ++result.trace.rounds;
    const auto candidates = expand_candidates(start, source, config, tree.domain(), view);
    const auto idx = select_target(candidates, source.position, source.kind, config.sigma, rng);
    if (!idx) break;
    const NodeRecord& chosen = candidates[*idx];
    result.trace.chosen_depth = chosen.id.depth();
    if (chosen.id.depth() >= tree.branch_depth()) {
      messages::FormationRequestV2 req;
      req.source = source.id;
      req.source_position = source.position;
      req.target_node = chosen.id.raw();
      req.target_is_leaf = chosen.is_leaf();
      req.kind = source.kind;
      result.request = req;
      result.destination = tree.owner_of(chosen.id);
      result.trace.entered_remote = result.destination != tree.rank();
      break;
    }
    start = chosen;
  }
  finish_trace(result.trace, view, f0, e0);
  return result;
}

std::optional<messages::FormationRequestV1> handle_forwarded_request(const messages::FormationRequestV2& request,
                                                                     const SearchConfig& config, TreeView& view,
                                                                     Rng& rng) {
  const auto& tree = view.tree();
  NodeId id;
  try {
    id = NodeId::from_raw(request.target_node);
  } catch (const ProtocolError&) {
    return std::nullopt;
  }
  if (id.depth() < tree.branch_depth() || tree.owner_of(id) != tree.rank()) return std::nullopt;
  const NodeRecord* node = tree.find(id);
  if (!node) return std::nullopt;
  if (node->kind == NodeKind::leaf_with_neuron) {
    return messages::FormationRequestV1{request.source, node->neuron, request.kind};
  }
  if (request.target_is_leaf) return std::nullopt;

  const SearchSource source{request.source, request.source_position, request.kind};
  SearchTrace trace;
  if (auto leaf = descend_to_leaf(*node, source, config, view, rng, trace)) {
    return messages::FormationRequestV1{request.source, leaf->neuron, request.kind};
  }
  return std::nullopt;
}

std::vector<bool> resolve_requests(std::span<const messages::FormationRequestV1> requests,
                                   const std::function<std::uint32_t(NeuronId, ElementKind)>& vacant,
                                   const std::function<Rng(NeuronId, ElementKind)>& stream_for_target) {
  std::map<std::pair<NeuronId, ElementKind>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    groups[{requests[i].target, requests[i].kind}].push_back(i);
  }
  std::vector<bool> accepted(requests.size(), false);
  for (auto& [key, members] : groups) {
    const std::uint32_t capacity = vacant(key.first, key.second);
    if (members.size() <= capacity) {
      for (auto i : members) accepted[i] = true;
      continue;
    }
    Rng rng = stream_for_target(key.first, key.second);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::uint32_t j = 0; j < capacity; ++j) accepted[members[j]] = true;
  }
  return accepted;
}

std::vector<std::size_t> delete_elements(std::uint32_t retraction, std::uint32_t vacant, std::size_t bound_count,
                                         Rng& rng) {
  const std::size_t lost_bound =
      std::min<std::size_t>(retraction > vacant ? retraction - vacant : 0, bound_count);
  std::vector<std::size_t> all(bound_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(lost_bound);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), lost_bound, rng);
  return chosen;
}

namespace {

void enumerate_from(const NodeRecord& start, double mass, const SearchSource& source, const SearchConfig& config,
                    TreeView& view, std::map<NeuronId, double>& out) {
  const auto candidates = expand_candidates(start, source, config, view.tree().domain(), view);
  std::vector<double> weights;
  double total = 0.0;
  for (const auto& c : candidates) {
    weights.push_back(kernel_weight(c, source.kind, source.position, config.sigma));
    total += weights.back();
  }
  if (!(total > 0.0)) return;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double p = mass * weights[i] / total;
    if (p == 0.0) continue;
    if (candidates[i].kind == NodeKind::leaf_with_neuron) {
      out[candidates[i].neuron] += p;
    } else {
      enumerate_from(candidates[i], p, source, config, view, out);
    }
  }
}

}  // namespace

std::map<NeuronId, double> partner_distribution(const DistributedOctree& tree, const SearchSource& source,
                                                const SearchConfig& config) {
  TreeView view(tree, Algorithm::classic, nullptr);
  std::map<NeuronId, double> out;
  enumerate_from(tree.root(), 1.0, source, config, view, out);
  return out;
}

}  // namespace plasti::plasticity
