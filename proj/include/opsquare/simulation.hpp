#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "opsquare/controlplane.hpp"
#include "opsquare/errors.hpp"
#include "opsquare/fabric.hpp"
#include "opsquare/metrics.hpp"
#include "opsquare/ofproto/agent.hpp"
#include "opsquare/ofproto/session.hpp"
#include "opsquare/topology.hpp"
#include "opsquare/traffic.hpp"

namespace opsquare {

struct ReconfigureAction {
  SliceId slice = 0;
  std::vector<VnfPlacement> add;
  SimTime at{0};  // relative to traffic start
};

struct DestinationSet {
  std::vector<int> racks;
  std::vector<double> weights;  // empty: uniform
};

// Traffic of one slice. Every listed source server runs `profile`; an empty
// source list means every placement of the slice, and an empty destination
// list means every other rack of the slice. Sources in a rack listed in
// `by_rack` use that destination set instead.
struct SliceTraffic {
  TrafficProfile profile;
  std::vector<VnfPlacement> sources;
  std::map<int, DestinationSet> by_rack;
};

struct SimulationConfig {
  TopologyConfig topology;
  DataPlaneParams dataplane;
  ControlPlaneParams control;
  SimTime channel_latency{0};
  SimTime flowmod_delay = from_ms(1.0);
  std::vector<SliceSpec> slices;
  std::map<SliceId, SliceTraffic> traffic;
  SimTime duration = from_ms(10.0);  // traffic generation window after warm-up
  SimTime warmup{0};
  std::uint64_t min_measured_frames = 0;  // extends `duration` to reach this expected count
  std::uint64_t seed = 1;
  std::optional<ReconfigureAction> reconfigure;
  bool stats_polling = false;
  std::uint64_t conservation_check_slots = 1024;
  std::size_t reservoir_capacity = 1'000'000;
  SimTime drain_limit = from_ms(50.0);
};

// Per-slot arbitration audit across every switch.
struct ArbitrationAudit {
  std::uint64_t labels = 0;
  std::uint64_t verdicts = 0;
  std::uint64_t acks = 0;
  std::uint64_t nacks_contention = 0;
  std::uint64_t nacks_no_route = 0;
  // A permitted label NACKed while a numerically larger priority won its output.
  std::uint64_t priority_inversions = 0;
  std::uint64_t multiple_grants = 0;
};

// Outcomes of one (slice, destination ToR) flow over time.
struct FlowTrace {
  std::uint64_t no_route_frames = 0;
  std::optional<SimTime> first_no_route;
  std::optional<SimTime> last_no_route;
  std::uint64_t delivered_frames = 0;
  std::optional<SimTime> first_delivery;
  std::optional<SimTime> last_delivery;
};

struct SimulationResult {
  SimTime traffic_start{0};
  SimTime measure_start{0};
  SimTime traffic_stop{0};
  SimTime end{0};
  std::uint64_t slots_executed = 0;
  std::uint64_t conservation_checks = 0;
  bool conserved = true;
  FabricTotals totals;
  ArbitrationAudit audit;
  std::map<std::pair<SliceId, int>, FlowTrace> flows;
  std::vector<ControlEvent> events;
  std::vector<SliceMetrics> timeseries;
  std::map<SliceId, SliceTally> tallies;
  std::map<SliceId, std::vector<double>> samples;
  // Cumulative per-slice ToR counters at the end of the run.
  std::map<SliceId, TorSliceCounters> tor_counters;
  std::map<SliceId, SwitchSliceCounters> switch_counters;
  std::uint64_t flowmods_sent = 0;
};

// One full run: discovery, provisioning, traffic, optional reconfiguration and
// stats polling, then drain. Deterministic for a given config.
class Simulation {
 public:
  explicit Simulation(SimulationConfig cfg)
      : cfg_(std::move(cfg)),
        topo_(cfg_.topology),
        fabric_(topo_, cfg_.dataplane),
        metrics_(cfg_.reservoir_capacity, cfg_.seed) {
    std::map<SliceId, bool> seen;
    for (const auto& s : cfg_.slices) {
      s.validate(topo_);
      if (seen[s.id]) throw ConfigError("duplicate slice id " + std::to_string(s.id));
      seen[s.id] = true;
      metrics_.register_slice(s.id);
    }
    for (const auto& [id, tr] : cfg_.traffic) {
      if (!seen.contains(id)) throw ConfigError("traffic defined for unknown slice " + std::to_string(id));
      tr.profile.validate();
      for (const auto& p : tr.sources)
        if (p.rack < 1 || p.rack > topo_.tor_count()) throw ConfigError("traffic source rack out of range");
      for (int d : tr.profile.destinations)
        if (d < 1 || d > topo_.tor_count()) throw ConfigError("traffic destination rack out of range");
      for (const auto& [rack, ds] : tr.by_rack) {
        if (rack < 1 || rack > topo_.tor_count()) throw ConfigError("traffic source rack out of range");
        TrafficProfile p = tr.profile;
        p.destinations = ds.racks;
        p.destination_weights = ds.weights;
        p.validate();
        for (int d : ds.racks)
          if (d < 1 || d > topo_.tor_count()) throw ConfigError("traffic destination rack out of range");
      }
    }
    for (const auto& d : topo_.devices())
      sessions_.emplace(d, std::make_unique<ofproto::Session>(topo_.name(d), cfg_.channel_latency));
    for (auto& t : fabric_.tors())
      hosts_.emplace_back(ofproto::DeviceAgent(topo_, t), *sessions_.at(t.id()), cfg_.flowmod_delay);
    for (auto& s : fabric_.switches())
      hosts_.emplace_back(ofproto::DeviceAgent(topo_, s), *sessions_.at(s.id()), cfg_.flowmod_delay);
    std::map<NodeId, ofproto::Session*> raw;
    for (auto& [id, s] : sessions_) raw.emplace(id, s.get());
    ControlPlaneParams cp = cfg_.control;
    cp.seed ^= cfg_.seed;
    controller_ = std::make_unique<Controller>(topo_, cp, std::move(raw));
    install_observer();
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const TopologyGraph& topology() const { return topo_; }
  Fabric& fabric() { return fabric_; }
  Controller& controller() { return *controller_; }
  const MetricsRecord& metrics() const { return metrics_; }

  SimulationResult run() {
    const SimTime slot = fabric_.slot_duration();
    SimTime now{0};
    controller_->discover_topology(now);
    now = settle(now);
    for (const auto& s : cfg_.slices) controller_->provision_slice(s, now);
    now = settle(now);
    for (const auto& s : cfg_.slices)
      if (!controller_->slices().contains(s.id) || controller_->slice(s.id).status != SliceStatus::Active)
        throw ConfigError("slice " + std::to_string(s.id) + " failed to provision");

    result_.traffic_start = ceil_slot(now);
    result_.measure_start = result_.traffic_start + cfg_.warmup;
    result_.traffic_stop = result_.measure_start + effective_duration();
    fabric_.set_measurement_start(result_.measure_start);
    attach_sources();
    if (cfg_.stats_polling) {
      controller_->start_stats_polling(result_.traffic_start);
      next_control_ = std::min(next_control_, controller_->next_wakeup());
    }
    std::optional<SimTime> reconfig_at;
    if (cfg_.reconfigure) reconfig_at = result_.traffic_start + cfg_.reconfigure->at;

    std::uint64_t k = static_cast<std::uint64_t>(result_.traffic_start / slot);
    std::uint64_t since_check = 0;
    const SimTime hard_stop = result_.traffic_stop + cfg_.drain_limit;
    for (;;) {
      const SimTime t = slot * static_cast<std::int64_t>(k);
      fabric_.advance_to(t);
      if (reconfig_at && *reconfig_at <= t) {
        controller_->reconfigure_slice(cfg_.reconfigure->slice, cfg_.reconfigure->add, *reconfig_at);
        reconfig_at.reset();
        next_control_ = SimTime{0};
      }
      if (next_control_ <= t) control_step(t);
      fabric_.run_slot(k);
      ++result_.slots_executed;
      if (++since_check >= cfg_.conservation_check_slots) {
        since_check = 0;
        check_conservation();
      }
      if (t >= result_.traffic_stop) {
        const bool drained = fabric_.quiescent() && !fabric_.has_pending_events();
        if (drained && cfg_.stats_polling && !final_poll_done_) {
          // Closing window so windowed counters sum to the cumulative ones.
          controller_->stop_stats_polling();
          controller_->poll_now(t);
          final_poll_done_ = true;
          control_step(t);
        }
        const bool control_done = !controller_->busy() && all_hosts_idle();
        if (drained && control_done && !reconfig_at) {
          result_.end = t;
          break;
        }
        if (!drained && t > hard_stop) throw AccountingError("fabric did not drain within the drain limit");
      }
      k = next_slot(k, reconfig_at);
    }
    check_conservation();
    finish();
    return std::move(result_);
  }

 private:
  void install_observer() {
    FabricObserver obs;
    obs.generated = [this](SliceId s, const Frame& f) {
      if (f.measured) metrics_.record_generated(s);
    };
    obs.delivered = [this](SliceId s, const Frame& f, SimTime at, int dst) {
      if (f.measured) metrics_.record_delivery(s, to_ns(at - f.created));
      auto& tr = result_.flows[{s, dst}];
      ++tr.delivered_frames;
      if (!tr.first_delivery) tr.first_delivery = at;
      tr.last_delivery = at;
    };
    obs.lost = [this](SliceId s, const Frame& f, LossCause c, int dst) {
      if (f.measured) metrics_.record_loss(s, c);
      if (c == LossCause::NoRoute) {
        auto& tr = result_.flows[{s, dst}];
        const SimTime at = fabric_now_;
        ++tr.no_route_frames;
        if (!tr.first_no_route) tr.first_no_route = at;
        tr.last_no_route = at;
      }
    };
    obs.arbitration = [this](SimTime at, const OpticalSwitch&, std::span<const Label> labels,
                             std::span<const FlowControlSignal> sig) {
      fabric_now_ = at;
      audit(labels, sig);
    };
    fabric_.set_observer(std::move(obs));
  }

  void audit(std::span<const Label> labels, std::span<const FlowControlSignal> sig) {
    auto& a = result_.audit;
    a.labels += labels.size();
    a.verdicts += sig.size();
    // Winning priority per output port of this switch.
    std::map<int, int> winner_prio;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (sig[i].packet_id != labels[i].packet_id) throw ProtocolViolation("verdict order differs from label order");
      switch (sig[i].verdict) {
        case Verdict::Ack:
          ++a.acks;
          if (!winner_prio.emplace(sig[i].output_port, labels[i].priority).second) ++a.multiple_grants;
          break;
        case Verdict::NackContention: ++a.nacks_contention; break;
        case Verdict::NackNoRoute: ++a.nacks_no_route; break;
      }
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (sig[i].verdict != Verdict::NackContention) continue;
      auto it = winner_prio.find(labels[i].requested_output_port);
      if (it == winner_prio.end() || it->second > labels[i].priority) ++a.priority_inversions;
    }
  }

  SimTime ceil_slot(SimTime t) const {
    const SimTime slot = fabric_.slot_duration();
    return slot * ((t.count() + slot.count() - 1) / slot.count());
  }

  SimTime effective_duration() const {
    SimTime d = cfg_.duration;
    if (cfg_.min_measured_frames == 0) return d;
    double rate = 0.0;  // frames per second at the profile load
    for (const auto& s : cfg_.slices) {
      auto it = cfg_.traffic.find(s.id);
      if (it == cfg_.traffic.end()) continue;
      const auto& prof = it->second.profile;
      rate += static_cast<double>(sources_of(s).size()) * prof.load * topo_.config().link_rate_bps /
              (8.0 * prof.mean_frame_bytes());
    }
    if (rate <= 0.0) return d;
    const SimTime needed = from_ns(1e9 * static_cast<double>(cfg_.min_measured_frames) / rate);
    return std::max(d, ceil_slot(needed));
  }

  std::vector<VnfPlacement> sources_of(const SliceSpec& s) const {
    auto it = cfg_.traffic.find(s.id);
    if (it == cfg_.traffic.end()) return {};
    return it->second.sources.empty() ? s.placements : it->second.sources;
  }

  void attach_sources() {
    for (const auto& s : cfg_.slices) {
      if (!cfg_.traffic.contains(s.id)) continue;
      const auto& tr = cfg_.traffic.at(s.id);
      for (const auto& p : sources_of(s)) {
        TrafficProfile prof = tr.profile;
        if (auto it = tr.by_rack.find(p.rack); it != tr.by_rack.end()) {
          prof.destinations = it->second.racks;
          prof.destination_weights = it->second.weights;
        }
        if (prof.destinations.empty()) prof.destinations = s.racks();
        const std::uint64_t stream = (static_cast<std::uint64_t>(s.id) << 32) |
                                     (static_cast<std::uint64_t>(p.rack) << 8) | static_cast<std::uint64_t>(p.server);
        fabric_.attach_source(s.id,
                              TrafficSource(p.rack, prof, topo_.config().link_rate_bps, cfg_.seed, stream,
                                            result_.traffic_start),
                              result_.traffic_stop);
      }
    }
  }

  bool all_hosts_idle() const {
    for (const auto& h : hosts_)
      if (!h.idle()) return false;
    for (const auto& [id, s] : sessions_)
      if (!s->idle()) return false;
    return true;
  }

  // Runs controller and agents to a fixed point at time t.
  void control_step(SimTime t) {
    for (bool progress = true; progress;) {
      progress = controller_->step(t);
      for (auto& h : hosts_) progress |= h.step(t);
    }
    next_control_ = controller_->next_wakeup();
    for (const auto& h : hosts_) next_control_ = std::min(next_control_, h.next_completion());
  }

  // Control-only time advance before traffic starts.
  SimTime settle(SimTime now) {
    control_step(now);
    while (controller_->busy() || !all_hosts_idle()) {
      if (next_control_ == SimTime::max()) break;
      now = std::max(now, next_control_);
      control_step(now);
    }
    return now;
  }

  std::uint64_t next_slot(std::uint64_t k, const std::optional<SimTime>& reconfig_at) const {
    if (!fabric_.quiescent()) return k + 1;
    SimTime wake = next_control_;
    if (fabric_.has_pending_events()) wake = std::min(wake, fabric_.next_event_time());
    if (reconfig_at) wake = std::min(wake, *reconfig_at);
    const SimTime slot = fabric_.slot_duration();
    if (wake == SimTime::max()) return k + 1;
    const auto target = static_cast<std::uint64_t>((wake.count() + slot.count() - 1) / slot.count());
    return std::max(k + 1, target);
  }

  void check_conservation() {
    ++result_.conservation_checks;
    const auto t = fabric_.totals();
    if (!t.conserved()) {
      result_.conserved = false;
      throw AccountingError("frame conservation violated");
    }
  }

  void finish() {
    result_.totals = fabric_.totals();
    result_.events = controller_->events();
    result_.timeseries = controller_->timeseries();
    result_.flowmods_sent = controller_->flowmods_sent();
    for (SliceId s : metrics_.slices()) {
      result_.tallies[s] = metrics_.tally(s);
      result_.samples[s] = metrics_.samples(s);
    }
    for (const auto& t : fabric_.tors())
      for (const auto& [s, c] : t.cumulative()) result_.tor_counters[s] += c;
    for (const auto& sw : fabric_.switches())
      for (const auto& [s, c] : sw.cumulative()) result_.switch_counters[s] += c;
  }

  SimulationConfig cfg_;
  TopologyGraph topo_;
  Fabric fabric_;
  MetricsRecord metrics_;
  std::map<NodeId, std::unique_ptr<ofproto::Session>> sessions_;
  std::vector<ofproto::AgentHost> hosts_;
  std::unique_ptr<Controller> controller_;
  SimulationResult result_;
  SimTime next_control_{0};
  SimTime fabric_now_{0};
  bool final_poll_done_ = false;
};

}  // namespace opsquare
