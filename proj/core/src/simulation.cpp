// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <unordered_map>

#include "plasti/connectome.hpp"
#include "plasti/local_transport.hpp"
#include "plasti/messages.hpp"
#include "plasti/neuron_model.hpp"
#include "plasti/octree.hpp"
#include "plasti/plasticity.hpp"
#include "plasti/random.hpp"
#include "plasti/spike_exchange.hpp"
#include "plasti/tcp_transport.hpp"

namespace plasti {

using messages::DeletionNotice;
using messages::FormationRequestV1;
using messages::FormationRequestV2;
using messages::FormationResponseV1;
using messages::FormationResponseV2;
using transport::CommStats;
using transport::Transport;

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::activity: return "activity";
    case Phase::electrical: return "electrical";
    case Phase::deletion: return "deletion";
    case Phase::tree: return "tree";
    case Phase::search: return "search";
    case Phase::resolution: return "resolution";
  }
  return "?";
}

std::uint64_t RunResult::connectivity_updates() const { return ranks.empty() ? 0 : ranks[0].connectivity_updates; }
std::uint64_t RunResult::activity_exchanges() const { return ranks.empty() ? 0 : ranks[0].activity_exchanges; }

CommStats RunResult::total_comm() const {
  CommStats total;
  for (const auto& r : ranks) total += r.comm;
  return total;
}

Vec3 initial_position(const SimConfig& config, NeuronId id, unsigned branch_depth) {
  const std::uint64_t subdomains = std::uint64_t{1} << (3 * branch_depth);
  // floor(id * 8^b / N) without overflow: N = npr * k and 8^b = spr * k.
  const std::uint64_t per_rank = subdomains / config.ranks;
  const std::uint64_t sub = id * per_rank / config.neurons_per_rank;
  const auto box = octree::cell_box(config.domain, octree::NodeId::at(branch_depth, sub));
  Rng rng = make_stream(config.seed, id, 0, 0, StreamPurpose::position);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    Vec3 p;
    for (int axis = 0; axis < 3; ++axis) {
      p[axis] = box.lo[axis] + unit(rng) * (box.hi[axis] - box.lo[axis]);
    }
    // Rounding can land exactly on the upper face, which belongs to the next cell.
    if (octree::cell_of(config.domain, branch_depth, p) == sub) return p;
  }
}

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kCalciumFixedScale = 1099511627776.0;  // 2^40, exact per-neuron sums

struct LocalNeuron {
  NeuronId id = 0;
  Vec3 position;
  ElementKind kind = ElementKind::excitatory;
  neuron::NeuronState state;
  neuron::SynapticElements elements;
  Rng electrical;
};

struct RankMetricsRow {
  std::uint64_t step = 0;
  std::uint64_t spikes = 0;
  std::uint64_t synapses = 0;
  std::int64_t calcium_fixed = 0;
  CommStats comm;
};

class ScopedPhase {
 public:
  explicit ScopedPhase(PhaseTiming& slot) : slot_(slot), start_(Clock::now()) {}
  ~ScopedPhase() {
    slot_.seconds += std::chrono::duration<double>(Clock::now() - start_).count();
    slot_.calls += 1;
  }
  ScopedPhase(const ScopedPhase&) = delete;
  ScopedPhase& operator=(const ScopedPhase&) = delete;

 private:
  PhaseTiming& slot_;
  Clock::time_point start_;
};

void write_comm(ByteWriter& w, const CommStats& s) {
  w.u64(s.bytes_sent);
  w.u64(s.bytes_received);
  w.u64(s.bytes_remotely_accessed);
  w.u64(s.messages_sent);
  w.u64(s.remote_fetches);
  w.u64(s.sync_points);
}

CommStats read_comm(ByteReader& r) {
  CommStats s;
  s.bytes_sent = r.u64();
  s.bytes_received = r.u64();
  s.bytes_remotely_accessed = r.u64();
  s.messages_sent = r.u64();
  s.remote_fetches = r.u64();
  s.sync_points = r.u64();
  return s;
}

ElementKind read_kind(ByteReader& r) {
  const auto k = r.u8();
  if (k > 1) throw ProtocolError("invalid element kind in report");
  return static_cast<ElementKind>(k);
}

class RankSim {
 public:
  RankSim(const SimConfig& config, Transport& transport, const RunOptions& options)
      : cfg_(config),
        options_(options),
        transport_(transport),
        me_(transport.rank()),
        assignment_(octree::assign_subdomains(config.ranks)),
        layout_{config.neurons_per_rank, config.ranks},
        connectome_(layout_, me_),
        tree_(config.domain, assignment_, me_),
        remote_(config.spike_mode, config.sampling, config.seed, layout_, me_) {
    if (transport.size() != config.ranks) {
      throw ConfigError("transport has " + std::to_string(transport.size()) + " ranks, config asks for " +
                        std::to_string(config.ranks));
    }
    report_.rank = me_;
    init_network();
  }

  std::optional<RunResult> run() {
    for (std::uint64_t t = 0; t < cfg_.total_steps; ++t) {
      exchange_activity(t);
      step_neurons(t);
      if (cfg_.plasticity_interval > 0 && (t + 1) % cfg_.plasticity_interval == 0) {
        connectivity_round((t + 1) / cfg_.plasticity_interval - 1);
      }
      sample(t);
    }
    return finish();
  }

 private:
  void init_network() {
    const auto b = assignment_.branch_depth;
    const auto n = layout_.neurons_per_rank;
    neurons_.resize(n);
    std::vector<octree::PlacedNeuron> placed(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& nr = neurons_[i];
      nr.id = connectome_.global_id(i);
      nr.position = initial_position(cfg_, nr.id, b);
      Rng kind_rng = make_stream(cfg_.seed, nr.id, 0, 0, StreamPurpose::neuron_kind);
      nr.kind = unit(kind_rng) < cfg_.inhibitory_fraction ? ElementKind::inhibitory : ElementKind::excitatory;
      nr.state = neuron::initial_state(cfg_.neuron);
      Rng el_rng = make_stream(cfg_.seed, nr.id, 0, 0, StreamPurpose::elements);
      std::uniform_real_distribution<double> grown(cfg_.initial_elements_min, cfg_.initial_elements_max);
      nr.elements.kind = nr.kind;
      nr.elements.axonal.grown = grown(el_rng);
      for (auto& pool : nr.elements.dendritic) pool.grown = grown(el_rng);
      nr.electrical = make_stream(cfg_.seed, nr.id, 0, 0, StreamPurpose::electrical);
      placed[i] = {nr.id, nr.position};
    }
    tree_.build(placed);
    fired_.assign(n, 0);
    window_counts_.assign(n, 0);
    transport_.set_fetch_handler([this](std::uint64_t raw) -> std::optional<transport::FetchRecord> {
      try {
        auto rec = tree_.fetch_local(octree::NodeId::from_raw(raw));
        if (!rec) return std::nullopt;
        return octree::encode_record(*rec);
      } catch (const ProtocolError&) {
        return std::nullopt;
      }
    });
  }

  // Activity -----------------------------------------------------------------

  void exchange_activity(std::uint64_t t) {
    ScopedPhase timer(phase(Phase::activity));
    const auto k = cfg_.ranks;
    std::vector<Bytes> out(k);
    if (cfg_.spike_mode == spikes::Mode::exact) {
      auto batches = spikes::gather_spike_batches(connectome_, fired_);
      for (RankId r = 0; r < k; ++r) {
        if (!batches[r].empty()) out[r] = spikes::encode_spike_batch(batches[r]);
      }
    } else {
      if (t % cfg_.epoch != 0) return;
      auto batches = spikes::gather_frequency_batches(connectome_, window_counts_, cfg_.epoch);
      for (RankId r = 0; r < k; ++r) {
        if (!batches[r].empty()) out[r] = spikes::encode_frequency_batch(batches[r]);
      }
      std::fill(window_counts_.begin(), window_counts_.end(), 0);
    }
    remote_.receive(transport_.all_to_all(std::move(out)));
    ++report_.activity_exchanges;
  }

  void step_neurons(std::uint64_t t) {
    ScopedPhase timer(phase(Phase::electrical));
    std::vector<std::uint8_t> fired_now(neurons_.size(), 0);
    step_spikes_ = 0;
    for (std::size_t i = 0; i < neurons_.size(); ++i) {
      auto& nr = neurons_[i];
      const auto net = spikes::net_input_count(connectome_, i, fired_, remote_, t);
      const double synaptic = cfg_.synaptic_strength * static_cast<double>(net);
      const double background = neuron::draw_background(cfg_.neuron, nr.electrical);
      nr.state = neuron::step_electrical(nr.state, cfg_.neuron, synaptic, background, nr.electrical);
      nr.state = neuron::update_calcium(nr.state, cfg_.neuron);
      nr.elements = neuron::update_synaptic_elements(nr.elements, nr.state.calcium, cfg_.neuron);
      if (nr.state.fired) {
        fired_now[i] = 1;
        ++window_counts_[i];
        ++step_spikes_;
        if (cfg_.write_raster) raster_.push_back({t, nr.id});
      }
    }
    fired_ = std::move(fired_now);
  }

  // Connectivity -------------------------------------------------------------

  void connectivity_round(std::uint64_t round) {
    {
      ScopedPhase timer(phase(Phase::deletion));
      delete_axonal(round);
      delete_dendritic(round);
    }
    {
      ScopedPhase timer(phase(Phase::tree));
      std::vector<std::array<std::uint32_t, 2>> vacant(neurons_.size());
      for (std::size_t i = 0; i < neurons_.size(); ++i) {
        const auto& d = neurons_[i].elements.dendritic;
        vacant[i] = {neuron::vacant(d[0]), neuron::vacant(d[1])};
      }
      tree_.aggregate(vacant);
      tree_.exchange_branch_nodes(transport_);
    }
    form_synapses(round);
    ++report_.connectivity_updates;
  }

  std::vector<Bytes> encode_notices(const std::vector<std::vector<DeletionNotice>>& notices) {
    std::vector<Bytes> out(cfg_.ranks);
    for (RankId r = 0; r < cfg_.ranks; ++r) {
      for (const auto& n : notices[r]) messages::encode(n, out[r]);
    }
    return out;
  }

  std::vector<DeletionNotice> receive_notices(const std::vector<Bytes>& in) {
    std::vector<DeletionNotice> all;
    for (const auto& payload : in) {
      auto part = messages::decode_all<DeletionNotice>(payload, messages::decode_deletion);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }

  std::size_t local_of(NeuronId id, const char* what) const {
    if (!connectome_.is_local(id)) {
      throw ProtocolError(std::string(what) + " names neuron " + std::to_string(id) + ", not hosted on rank " +
                          std::to_string(me_));
    }
    return layout_.local_index(id);
  }

  // Axons that lost usable elements break synapses; targets are told.
  void delete_axonal(std::uint64_t round) {
    std::vector<std::vector<DeletionNotice>> notices(cfg_.ranks);
    for (std::size_t i = 0; i < neurons_.size(); ++i) {
      auto& nr = neurons_[i];
      auto& pool = nr.elements.axonal;
      const auto keep = neuron::usable(pool);
      if (pool.connected <= keep) continue;
      std::vector<NeuronId> bound = connectome_.out_targets(i);
      std::sort(bound.begin(), bound.end());
      Rng rng = make_stream(cfg_.seed, nr.id, round, 0, StreamPurpose::deletion);
      for (auto idx : plasticity::delete_elements(pool.connected - keep, 0, bound.size(), rng)) {
        const NeuronId target = bound[idx];
        connectome_.remove_out(i, target);
        --pool.connected;
        notices[layout_.rank_of(target)].push_back({nr.id, target, nr.kind});
      }
    }
    for (const auto& n : receive_notices(transport_.all_to_all(encode_notices(notices)))) {
      const auto t = local_of(n.target, "deletion notice");
      if (!connectome_.remove_in(t, {n.source, n.kind})) {
        throw ProtocolError("deletion notice for unknown synapse " + std::to_string(n.source) + " -> " +
                            std::to_string(n.target));
      }
      --neurons_[t].elements.dendritic[kind_index(n.kind)].connected;
    }
  }

  // Dendrites that lost usable elements break synapses; sources are told.
  void delete_dendritic(std::uint64_t round) {
    std::vector<std::vector<DeletionNotice>> notices(cfg_.ranks);
    for (std::size_t i = 0; i < neurons_.size(); ++i) {
      auto& nr = neurons_[i];
      for (ElementKind kind : {ElementKind::excitatory, ElementKind::inhibitory}) {
        auto& pool = nr.elements.dendritic[kind_index(kind)];
        const auto keep = neuron::usable(pool);
        if (pool.connected <= keep) continue;
        std::vector<NeuronId> bound;
        for (const auto& syn : connectome_.in_sources(i)) {
          if (syn.kind == kind) bound.push_back(syn.source);
        }
        std::sort(bound.begin(), bound.end());
        Rng rng = make_stream(cfg_.seed, nr.id, round, 1 + kind_index(kind), StreamPurpose::deletion);
        for (auto idx : plasticity::delete_elements(pool.connected - keep, 0, bound.size(), rng)) {
          const NeuronId source = bound[idx];
          connectome_.remove_in(i, {source, kind});
          --pool.connected;
          notices[layout_.rank_of(source)].push_back({source, nr.id, kind});
        }
      }
    }
    for (const auto& n : receive_notices(transport_.all_to_all(encode_notices(notices)))) {
      const auto s = local_of(n.source, "deletion notice");
      if (!connectome_.remove_out(s, n.target)) {
        throw ProtocolError("deletion notice for unknown synapse " + std::to_string(n.source) + " -> " +
                            std::to_string(n.target));
      }
      --neurons_[s].elements.axonal.connected;
    }
  }

  struct Pending {
    std::size_t local = 0;
    NeuronId target = 0;  // classic only; V2 responses name the target
  };

  struct Incoming {
    RankId origin = 0;
    NeuronId source = 0;
    std::uint32_t occurrence = 0;
    std::optional<FormationRequestV1> request;
    bool accepted = false;
  };

  void form_synapses(std::uint64_t round) {
    const auto k = cfg_.ranks;
    const bool aware = cfg_.search.algorithm == plasticity::Algorithm::location_aware;
    std::vector<std::vector<Pending>> pending(k);
    std::vector<Bytes> requests(k);
    {
      ScopedPhase timer(phase(Phase::search));
      plasticity::TreeView view(tree_, cfg_.search.algorithm, &transport_, cfg_.fetch_cache);
      for (std::size_t i = 0; i < neurons_.size(); ++i) {
        const auto& nr = neurons_[i];
        const auto searches = neuron::vacant(nr.elements.axonal);
        if (searches == 0) continue;
        const plasticity::SearchSource source{nr.id, nr.position, nr.kind};
        std::uint64_t v2_this_round = 0;
        for (std::uint32_t j = 0; j < searches; ++j) {
          Rng rng = make_stream(cfg_.seed, nr.id, round, j, StreamPurpose::search);
          const auto below0 = view.fetches_below_branch();
          SearchRecord rec;
          rec.source = nr.id;
          rec.round = round;
          if (aware) {
            auto res = plasticity::find_target_location_aware(source, cfg_.search, view, rng);
            if (res.request) {
              messages::encode(*res.request, requests[res.destination]);
              pending[res.destination].push_back({i});
              rec.v2_requests = 1;
              rec.found = true;
              rec.target_remote = res.destination != me_;
            }
            fill_trace(rec, res.trace);
          } else {
            auto res = plasticity::find_target_classic(source, cfg_.search, view, rng);
            if (res.request) {
              const RankId dest = layout_.rank_of(res.request->target);
              messages::encode(*res.request, requests[dest]);
              pending[dest].push_back({i, res.request->target});
              rec.found = true;
              rec.target_remote = dest != me_;
            }
            fill_trace(rec, res.trace);
          }
          rec.fetches_below_branch = static_cast<std::uint32_t>(view.fetches_below_branch() - below0);
          report_.searches += 1;
          report_.v2_requests += rec.v2_requests;
          v2_this_round += rec.v2_requests;
          if (options_.trace_searches) report_.search_records.push_back(rec);
        }
        report_.max_v2_per_neuron_round = std::max(report_.max_v2_per_neuron_round, v2_this_round);
        report_.max_searches_per_neuron_round =
            std::max<std::uint64_t>(report_.max_searches_per_neuron_round, searches);
      }
      report_.fetches_below_branch += view.fetches_below_branch();
    }

    ScopedPhase timer(phase(Phase::resolution));
    auto received = transport_.all_to_all(std::move(requests));

    // Target side: decode (and for V2 finish the search locally), then resolve
    // in a canonical order that does not depend on the rank layout.
    std::vector<std::vector<Incoming>> incoming(k);
    std::unordered_map<NeuronId, std::uint32_t> occurrences;
    std::map<std::pair<NeuronId, std::uint64_t>, std::uint64_t> node_occurrences;
    plasticity::TreeView local_view(tree_, plasticity::Algorithm::classic, nullptr);
    for (RankId r = 0; r < k; ++r) {
      if (aware) {
        for (const auto& req : messages::decode_all<FormationRequestV2>(received[r], messages::decode_request_v2)) {
          // Requests of one source for one node all reach this owner, so the
          // (source, node, occurrence) key does not depend on the rank count.
          const auto nth = node_occurrences[{req.source, req.target_node}]++;
          Incoming in{r, req.source, occurrences[req.source]++, std::nullopt, false};
          Rng rng = make_stream(cfg_.seed, req.source, round, mix64(req.target_node) ^ nth,
                                StreamPurpose::forwarded_search);
          in.request = plasticity::handle_forwarded_request(req, cfg_.search, local_view, rng);
          incoming[r].push_back(in);
        }
      } else {
        for (const auto& req : messages::decode_all<FormationRequestV1>(received[r], messages::decode_request_v1)) {
          incoming[r].push_back({r, req.source, occurrences[req.source]++, req, false});
        }
      }
    }
    std::vector<Incoming*> order;
    for (auto& list : incoming) {
      for (auto& in : list) {
        if (in.request) {
          local_of(in.request->target, "formation request");
          order.push_back(&in);
        }
      }
    }
    std::sort(order.begin(), order.end(), [](const Incoming* a, const Incoming* b) {
      return std::tie(a->source, a->occurrence) < std::tie(b->source, b->occurrence);
    });
    std::vector<FormationRequestV1> canonical;
    canonical.reserve(order.size());
    for (const auto* in : order) canonical.push_back(*in->request);
    const auto accepted = plasticity::resolve_requests(
        canonical,
        [this](NeuronId target, ElementKind kind) {
          return neuron::vacant(neurons_[layout_.local_index(target)].elements.dendritic[kind_index(kind)]);
        },
        [this, round](NeuronId target, ElementKind kind) {
          return make_stream(cfg_.seed, target, round, kind_index(kind), StreamPurpose::resolution);
        });
    for (std::size_t m = 0; m < order.size(); ++m) {
      if (!accepted[m]) continue;
      order[m]->accepted = true;
      const auto& req = *order[m]->request;
      const auto t = layout_.local_index(req.target);
      connectome_.add_in(t, {req.source, req.kind});
      ++neurons_[t].elements.dendritic[kind_index(req.kind)].connected;
    }

    std::vector<Bytes> responses(k);
    for (RankId r = 0; r < k; ++r) {
      for (const auto& in : incoming[r]) {
        if (aware) {
          FormationResponseV2 resp;
          resp.accepted = in.accepted;
          resp.found = in.accepted ? in.request->target : 0;
          messages::encode(resp, responses[r]);
        } else {
          messages::encode(FormationResponseV1{in.accepted}, responses[r]);
        }
      }
    }
    auto answers = transport_.all_to_all(std::move(responses));

    // Source side: responses come back in request order.
    for (RankId r = 0; r < k; ++r) {
      std::vector<std::pair<bool, NeuronId>> results;
      if (aware) {
        for (const auto& a : messages::decode_all<FormationResponseV2>(answers[r], messages::decode_response_v2)) {
          results.emplace_back(a.accepted, a.found);
        }
      } else {
        for (const auto& a : messages::decode_all<FormationResponseV1>(answers[r], messages::decode_response_v1)) {
          results.emplace_back(a.accepted, pending[r][results.size()].target);
        }
      }
      if (results.size() != pending[r].size()) {
        throw ProtocolError("rank " + std::to_string(r) + " answered " + std::to_string(results.size()) + " of " +
                            std::to_string(pending[r].size()) + " requests");
      }
      for (std::size_t m = 0; m < results.size(); ++m) {
        if (!results[m].first) continue;
        const auto s = pending[r][m].local;
        connectome_.add_out(s, results[m].second);
        ++neurons_[s].elements.axonal.connected;
      }
    }
  }

  void fill_trace(SearchRecord& rec, const plasticity::SearchTrace& trace) {
    rec.fetches = trace.fetches;
    rec.remote_expansions = trace.remote_expansions;
    rec.entered_remote = trace.entered_remote;
    rec.chosen_depth = trace.chosen_depth;
  }

  // Sampling and results -----------------------------------------------------

  void sample(std::uint64_t t) {
    const bool last = t + 1 == cfg_.total_steps;
    if (t % cfg_.metrics_interval == 0 || last) {
      RankMetricsRow row;
      row.step = t;
      row.spikes = step_spikes_;
      row.synapses = connectome_.out_synapse_count();
      for (const auto& nr : neurons_) row.calcium_fixed += std::llround(nr.state.calcium * kCalciumFixedScale);
      row.comm = transport_.stats();
      metrics_.push_back(row);
    }
    if (t % cfg_.calcium_interval == 0 || last) {
      for (const auto& nr : neurons_) {
        if (cfg_.calcium_neurons != 0 && nr.id >= cfg_.calcium_neurons) break;
        calcium_.push_back({t, nr.id, nr.state.calcium});
      }
    }
  }

  PhaseTiming& phase(Phase p) { return report_.timings[static_cast<std::size_t>(p)]; }

  Bytes serialize_report() {
    report_.comm = transport_.stats();
    Bytes out;
    ByteWriter w(out);
    w.u32(report_.rank);
    write_comm(w, report_.comm);
    for (const auto& t : report_.timings) {
      w.f64(t.seconds);
      w.u64(t.calls);
    }
    w.u64(report_.activity_exchanges);
    w.u64(report_.connectivity_updates);
    w.u64(report_.searches);
    w.u64(report_.v2_requests);
    w.u64(report_.max_v2_per_neuron_round);
    w.u64(report_.max_searches_per_neuron_round);
    w.u64(report_.fetches_below_branch);
    w.u64(report_.search_records.size());
    for (const auto& s : report_.search_records) {
      w.u64(s.source);
      w.u64(s.round);
      w.u32(s.fetches);
      w.u32(s.fetches_below_branch);
      w.u32(s.remote_expansions);
      w.u8(s.entered_remote);
      w.u32(s.chosen_depth);
      w.u32(s.v2_requests);
      w.u8(s.found);
      w.u8(s.target_remote);
    }
    w.u64(metrics_.size());
    for (const auto& m : metrics_) {
      w.u64(m.step);
      w.u64(m.spikes);
      w.u64(m.synapses);
      w.u64(static_cast<std::uint64_t>(m.calcium_fixed));
      write_comm(w, m.comm);
    }
    w.u64(calcium_.size());
    for (const auto& c : calcium_) {
      w.u64(c.step);
      w.u64(c.neuron);
      w.f64(c.calcium);
    }
    w.u64(raster_.size());
    for (const auto& s : raster_) {
      w.u64(s.step);
      w.u64(s.neuron);
    }
    w.u64(connectome_.out_synapse_count());
    for (std::size_t i = 0; i < neurons_.size(); ++i) {
      for (auto target : connectome_.out_targets(i)) {
        w.u64(neurons_[i].id);
        w.u64(target);
        w.u8(static_cast<std::uint8_t>(neurons_[i].kind));
      }
    }
    w.u64(neurons_.size());
    for (const auto& nr : neurons_) {
      w.u64(nr.id);
      w.vec3(nr.position);
      w.u8(static_cast<std::uint8_t>(nr.kind));
      w.f64(nr.state.calcium);
      w.f64(nr.elements.axonal.grown);
      w.u32(nr.elements.axonal.connected);
      w.u32(nr.elements.dendritic[0].connected);
      w.u32(nr.elements.dendritic[1].connected);
    }
    return out;
  }

  std::optional<RunResult> finish() {
    auto gathered = transport_.gather_to_root(serialize_report());
    if (me_ != 0) return std::nullopt;

    RunResult result;
    result.config = cfg_;
    result.branch_depth = assignment_.branch_depth;
    std::vector<std::vector<RankMetricsRow>> rows(cfg_.ranks);
    for (RankId r = 0; r < cfg_.ranks; ++r) {
      ByteReader in(gathered[r]);
      RankReport rep;
      rep.rank = in.u32();
      if (rep.rank != r) throw ProtocolError("report from rank " + std::to_string(r) + " is mislabelled");
      rep.comm = read_comm(in);
      for (auto& t : rep.timings) {
        t.seconds = in.f64();
        t.calls = in.u64();
      }
      rep.activity_exchanges = in.u64();
      rep.connectivity_updates = in.u64();
      rep.searches = in.u64();
      rep.v2_requests = in.u64();
      rep.max_v2_per_neuron_round = in.u64();
      rep.max_searches_per_neuron_round = in.u64();
      rep.fetches_below_branch = in.u64();
      rep.search_records.resize(in.u64());
      for (auto& s : rep.search_records) {
        s.source = in.u64();
        s.round = in.u64();
        s.fetches = in.u32();
        s.fetches_below_branch = in.u32();
        s.remote_expansions = in.u32();
        s.entered_remote = in.u8() != 0;
        s.chosen_depth = in.u32();
        s.v2_requests = in.u32();
        s.found = in.u8() != 0;
        s.target_remote = in.u8() != 0;
      }
      rows[r].resize(in.u64());
      for (auto& m : rows[r]) {
        m.step = in.u64();
        m.spikes = in.u64();
        m.synapses = in.u64();
        m.calcium_fixed = static_cast<std::int64_t>(in.u64());
        m.comm = read_comm(in);
      }
      const auto n_calcium = in.u64();
      for (std::uint64_t m = 0; m < n_calcium; ++m) {
        CalciumSample c;
        c.step = in.u64();
        c.neuron = in.u64();
        c.calcium = in.f64();
        result.calcium.push_back(c);
      }
      const auto n_raster = in.u64();
      for (std::uint64_t m = 0; m < n_raster; ++m) {
        SpikeEvent s;
        s.step = in.u64();
        s.neuron = in.u64();
        result.raster.push_back(s);
      }
      const auto n_syn = in.u64();
      for (std::uint64_t m = 0; m < n_syn; ++m) {
        Synapse s;
        s.source = in.u64();
        s.target = in.u64();
        s.kind = read_kind(in);
        result.connectome.push_back(s);
      }
      const auto n_neurons = in.u64();
      for (std::uint64_t m = 0; m < n_neurons; ++m) {
        NeuronSummary n;
        n.id = in.u64();
        n.position = in.vec3();
        n.kind = read_kind(in);
        n.calcium = in.f64();
        n.axonal_grown = in.f64();
        n.axonal_connected = in.u32();
        n.dendritic_connected[0] = in.u32();
        n.dendritic_connected[1] = in.u32();
        result.neurons.push_back(n);
      }
      if (!in.done()) throw ProtocolError("trailing bytes in report from rank " + std::to_string(r));
      result.ranks.push_back(std::move(rep));
    }

    for (std::size_t m = 0; m < rows[0].size(); ++m) {
      MetricsRow row;
      row.step = rows[0][m].step;
      std::int64_t calcium_fixed = 0;
      for (const auto& per_rank : rows) {
        if (per_rank.size() != rows[0].size() || per_rank[m].step != row.step) {
          throw ProtocolError("ranks disagree on sampled steps");
        }
        row.spikes += per_rank[m].spikes;
        row.synapses += per_rank[m].synapses;
        calcium_fixed += per_rank[m].calcium_fixed;
        row.comm += per_rank[m].comm;
      }
      row.mean_calcium = static_cast<double>(calcium_fixed) / kCalciumFixedScale /
                         static_cast<double>(cfg_.total_neurons());
      result.metrics.push_back(row);
    }
    auto by_step = [](const auto& a, const auto& b) { return std::tie(a.step, a.neuron) < std::tie(b.step, b.neuron); };
    std::sort(result.calcium.begin(), result.calcium.end(), by_step);
    std::sort(result.raster.begin(), result.raster.end(), by_step);
    std::sort(result.connectome.begin(), result.connectome.end());
    std::sort(result.neurons.begin(), result.neurons.end(),
              [](const NeuronSummary& a, const NeuronSummary& b) { return a.id < b.id; });
    return result;
  }

  const SimConfig& cfg_;
  const RunOptions& options_;
  Transport& transport_;
  RankId me_;
  octree::DomainAssignment assignment_;
  NeuronLayout layout_;
  Connectome connectome_;
  octree::DistributedOctree tree_;
  spikes::RemoteActivity remote_;

  std::vector<LocalNeuron> neurons_;
  std::vector<std::uint8_t> fired_;
  std::vector<std::uint32_t> window_counts_;
  std::uint64_t step_spikes_ = 0;

  RankReport report_;
  std::vector<RankMetricsRow> metrics_;
  std::vector<CalciumSample> calcium_;
  std::vector<SpikeEvent> raster_;
};

}  // namespace

std::optional<RunResult> run_rank(const SimConfig& config, Transport& transport, const RunOptions& options) {
  config.validate();
  RankSim sim(config, transport, options);
  return sim.run();
}

RunResult run_simulation(const SimConfig& config, const RunOptions& options) {
  config.validate();
  std::optional<RunResult> result;
  auto body = [&](Transport& t) {
    auto r = run_rank(config, t, options);
    if (r) result = std::move(r);
  };
  if (config.backend == Backend::tcp) {
    transport::run_tcp_loopback(config.ranks, body, config.timeout);
  } else {
    transport::run_local_ranks(config.ranks, body, config.timeout);
  }
  return std::move(*result);
}

}  // namespace plasti
