#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/ofproto/codec.hpp"
#include "opsquare/ofproto/device.hpp"
#include "opsquare/ofproto/session.hpp"
#include "opsquare/packet.hpp"
#include "opsquare/time.hpp"
#include "opsquare/topology.hpp"

namespace opsquare {

class DiscoveryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QosSpec {
  double loss_threshold = 1e-5;
  double latency_target_ns = 0.0;  // 0: unspecified
};

struct VnfPlacement {
  int rack = 0;    // flat ToR index
  int server = 1;  // 1..servers_per_rack
  bool operator==(const VnfPlacement&) const = default;
};

struct SliceSpec {
  SliceId id = 0;
  std::string name;
  std::vector<VnfPlacement> placements;
  int priority = kLowestPriority;
  QosSpec qos;
  std::uint16_t wavelength = 0;

  std::vector<int> racks() const {
    std::vector<int> r;
    for (const auto& p : placements) r.push_back(p.rack);
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
  }

  void validate(const TopologyGraph& topo) const {
    if (!valid_priority(priority)) throw ConfigError("slice " + name + ": priority out of range 1..4");
    if (placements.size() < 2) throw ConfigError("slice " + name + ": needs at least 2 VNF placements");
    for (const auto& p : placements) {
      if (p.rack < 1 || p.rack > topo.tor_count())
        throw ConfigError("slice " + name + ": rack " + std::to_string(p.rack) + " does not exist");
      if (p.server < 1 || p.server > topo.config().servers_per_rack)
        throw ConfigError("slice " + name + ": server " + std::to_string(p.server) + " out of range");
    }
    if (!(qos.loss_threshold >= 0.0 && qos.loss_threshold <= 1.0))
      throw ConfigError("slice " + name + ": loss_threshold must be in [0,1]");
  }
};

enum class SliceStatus : std::uint8_t { Provisioning, Active, Reconfiguring };

inline const char* to_string(SliceStatus s) {
  switch (s) {
    case SliceStatus::Provisioning: return "provisioning";
    case SliceStatus::Active: return "active";
    case SliceStatus::Reconfiguring: return "reconfiguring";
  }
  return "?";
}

struct WeightedPath {
  Path path;
  double weight = 1.0;
};

// Identity of one installed LUT entry. For ToRs `match_port` is the
// destination ToR and `output` the uplink; for switches they are ports.
struct FlowEntry {
  NodeId device;
  SliceId slice = 0;
  std::uint16_t match_port = 0;
  std::uint16_t output = 0;
  std::uint16_t wavelength = 0;
  auto operator<=>(const FlowEntry&) const = default;
};

using PairKey = std::pair<int, int>;  // ordered (src ToR, dst ToR)

struct SliceState {
  SliceSpec spec;
  std::map<PairKey, std::vector<WeightedPath>> active_paths;
  std::map<FlowEntry, std::uint16_t> installed;  // entry -> weight permille (ToR entries)
  SliceStatus status = SliceStatus::Provisioning;
  std::optional<SimTime> last_rebalance;
};

struct SliceMetrics {
  SliceId slice_id = 0;
  SimTime window_start{0};
  SimTime window_end{0};
  std::uint64_t lost = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  double loss_ratio = 0.0;
  double mean_latency_ns = 0.0;
  bool complete = true;
  // Per-ToR losses, for locating the worst rack pair.
  std::map<int, std::uint64_t> lost_by_tor;
};

struct ControlEvent {
  SimTime time{0};
  std::string kind;
  SliceId slice = 0;
  std::string detail;
  double value = 0.0;
};

struct DeviceInfo {
  NodeId id;
  std::uint64_t datapath_id = 0;
  ofproto::DeviceKind kind = ofproto::DeviceKind::ToR;
  int n_ports = 0;
  std::uint32_t capabilities = 0;
};

using TopologyView = std::map<NodeId, DeviceInfo>;

// Load per ToR<->switch link in [0,1]; absent links are idle.
using LinkLoads = std::map<Link, double>;

inline std::vector<Link> path_links(const Path& p) {
  std::vector<Link> out;
  for (std::size_t i = 0; i + 1 < p.hops.size(); ++i) {
    const NodeId a = p.hops[i], b = p.hops[i + 1];
    out.push_back(a.is_tor() ? Link{a, b} : Link{b, a});
  }
  return out;
}

// Candidate minimising the most loaded link; ties keep enumeration order (ES-first).
inline Path compute_path(const TopologyGraph& topo, NodeId src, NodeId dst, const LinkLoads& loads = {}) {
  const auto candidates = topo.enumerate_paths(src, dst);
  const Path* best = nullptr;
  double best_load = std::numeric_limits<double>::infinity();
  for (const auto& p : candidates) {
    double worst = 0.0;
    for (const auto& l : path_links(p)) {
      auto it = loads.find(l);
      if (it != loads.end()) worst = std::max(worst, it->second);
    }
    if (worst < best_load) {
      best_load = worst;
      best = &p;
    }
  }
  return *best;
}

inline std::uint16_t to_permille(double w) {
  return static_cast<std::uint16_t>(std::clamp<long>(std::lround(w * 1000.0), 1, 1000));
}

// LUT entries needed along one directed path. ToR entries carry the route weight
// at the source ToR; relay ToRs always forward with full weight.
inline std::vector<std::pair<FlowEntry, std::uint16_t>> path_entries(const TopologyGraph& topo, const Path& p,
                                                                     SliceId slice, std::uint16_t wavelength,
                                                                     double weight) {
  std::vector<std::pair<FlowEntry, std::uint16_t>> out;
  const int dst = topo.flat_tor_index(p.dst());
  for (std::size_t i = 0; i + 2 < p.hops.size(); i += 2) {
    const NodeId tor = p.hops[i], sw = p.hops[i + 1], next = p.hops[i + 2];
    const auto uplink = static_cast<std::uint16_t>(sw.kind == NodeKind::IS ? Uplink::IS : Uplink::ES);
    out.push_back({FlowEntry{tor, slice, static_cast<std::uint16_t>(dst), uplink, wavelength},
                   i == 0 ? to_permille(weight) : std::uint16_t{1000}});
    out.push_back({FlowEntry{sw, slice, static_cast<std::uint16_t>(topo.switch_port_of(sw, tor)),
                             static_cast<std::uint16_t>(topo.switch_port_of(sw, next)), wavelength},
                   std::uint16_t{1000}});
  }
  return out;
}

inline ofproto::FlowMod make_flowmod(FlowCommand cmd, const FlowEntry& e, int priority,
                                     std::optional<std::uint16_t> weight) {
  ofproto::FlowMod fm;
  fm.command = cmd;
  fm.match = {e.match_port, e.slice, e.wavelength};
  fm.instructions.emplace_back(ofproto::Output{e.output});
  if (cmd != FlowCommand::Delete && e.device.is_tor()) {
    fm.instructions.emplace_back(ofproto::SetPriority{static_cast<std::uint8_t>(priority)});
    if (weight) fm.instructions.emplace_back(ofproto::SetWeight{*weight});
  }
  return fm;
}

struct ControlPlaneParams {
  SimTime orchestration_delay = from_ms(120.0);
  SimTime orchestration_jitter{0};  // uniform in [-jitter, +jitter]
  SimTime stats_period = from_ms(100.0);
  int cooldown_periods = 10;
  double split_ratio = 0.5;  // share moved to the alternative path
  bool load_balancing = true;
  SimTime discovery_timeout = from_ms(10.0);
  std::uint64_t seed = 0;

  void validate() const {
    if (orchestration_delay.count() < 0) throw ConfigError("control.orchestration_delay_ms must be >= 0");
    if (orchestration_jitter.count() < 0 || orchestration_jitter > orchestration_delay)
      throw ConfigError("control.orchestration_jitter_ms must be in [0, orchestration_delay_ms]");
    if (stats_period.count() <= 0) throw ConfigError("control.stats_period_ms must be positive");
    if (cooldown_periods < 0) throw ConfigError("control.cooldown_periods must be >= 0");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("control.split_ratio must be in (0,1)");
    if (discovery_timeout.count() <= 0) throw ConfigError("control.discovery_timeout_ms must be positive");
  }
};

// SDN controller and orchestrator. Reactive: `step(now)` consumes replies and
// fires due timers; every outgoing message goes through a device session.
class Controller {
 public:
  Controller(const TopologyGraph& topo, ControlPlaneParams params, std::map<NodeId, ofproto::Session*> sessions)
      : topo_(&topo), params_(params), sessions_(std::move(sessions)), rng_(params.seed ^ 0xC0117A0Eull) {
    params_.validate();
    for (const auto& d : topo.devices())
      if (!sessions_.contains(d)) throw ConfigError("no session for device " + topo.name(d));
  }

  const ControlPlaneParams& params() const { return params_; }
  const std::vector<ControlEvent>& events() const { return events_; }
  const std::vector<SliceMetrics>& timeseries() const { return series_; }
  const std::map<SliceId, SliceState>& slices() const { return slices_; }
  const SliceState& slice(SliceId id) const { return slices_.at(id); }
  const TopologyView& topology_view() const { return view_; }
  bool discovered() const { return discovered_; }
  std::uint64_t flowmods_sent() const { return flowmods_sent_; }
  const std::vector<std::pair<NodeId, ofproto::FlowMod>>& flowmod_log() const { return flowmod_log_; }

  // ---- topology discovery ------------------------------------------------

  void discover_topology(SimTime now) {
    discovery_ = Discovery{now + params_.discovery_timeout, {}};
    for (const auto& d : topo_->devices()) {
      const auto xid = next_xid();
      discovery_->waiting.emplace(xid, d);
      send(d, now, ofproto::OFMessage{xid, ofproto::FeatureReq{}});
    }
  }

  // ---- slice lifecycle ---------------------------------------------------

  void provision_slice(const SliceSpec& spec, SimTime now) {
    spec.validate(*topo_);
    if (slices_.contains(spec.id)) throw ConfigError("slice id " + std::to_string(spec.id) + " already in use");
    for (const auto& [id, s] : slices_)
      if (!spec.name.empty() && s.spec.name == spec.name) throw ConfigError("slice name " + spec.name + " already in use");
    SliceState st;
    st.spec = spec;
    st.status = SliceStatus::Provisioning;
    slices_.emplace(spec.id, std::move(st));
    log(now, "provision_requested", spec.id, label(spec));
    schedule(make_job(JobKind::Provision, spec.id, now));
  }

  void reconfigure_slice(SliceId id, const std::vector<VnfPlacement>& add, SimTime now) {
    auto& st = slices_.at(id);
    if (st.status != SliceStatus::Active) throw std::logic_error("reconfigure_slice: slice is not active");
    st.status = SliceStatus::Reconfiguring;
    std::string racks;
    for (const auto& p : add) racks += (racks.empty() ? "" : ",") + topo_->name(topo_->tor_from_index(p.rack));
    log(now, "reconfigure_requested", id, "add " + racks);
    Job j = make_job(JobKind::Reconfigure, id, now);
    j.add = add;
    schedule(std::move(j));
  }

  void teardown_slice(SliceId id, SimTime now) {
    auto& st = slices_.at(id);
    std::vector<std::pair<NodeId, ofproto::FlowMod>> mods;
    for (const auto& [e, w] : st.installed) mods.emplace_back(e.device, make_flowmod(FlowCommand::Delete, e, 0, {}));
    for (const auto& [dev, fm] : mods) send_flowmod(dev, now, fm);
    slices_.erase(id);
    log(now, "teardown", id, std::to_string(mods.size()) + " entries removed");
  }

  void start_stats_polling(SimTime now) {
    next_poll_ = now + params_.stats_period;
    last_poll_ = now;
  }
  void stop_stats_polling() { next_poll_.reset(); }

  // Poll immediately (outside the periodic schedule); used for end-of-run closure.
  void poll_now(SimTime now) { begin_poll(now); }

  bool busy() const { return !jobs_.empty() || (discovery_ && !discovery_->waiting.empty()) || poll_.has_value(); }

  SimTime next_wakeup() const {
    SimTime t = SimTime::max();
    for (const auto& j : jobs_)
      if (!j.sent) t = std::min(t, j.due);
    if (next_poll_) t = std::min(t, *next_poll_);
    if (discovery_ && !discovery_->waiting.empty()) t = std::min(t, discovery_->deadline);
    for (const auto& [d, s] : sessions_) t = std::min(t, s->next_delivery());
    return t;
  }

  bool step(SimTime now) {
    bool progress = false;
    for (const auto& [dev, session] : sessions_) {
      for (auto& [at, msg] : session->receive_at_controller(now)) {
        on_reply(dev, at, msg);
        progress = true;
      }
    }
    if (discovery_ && !discovery_->waiting.empty() && discovery_->deadline <= now) {
      throw DiscoveryError("no FeatureRep from " + topo_->name(discovery_->waiting.begin()->second) +
                           " before the discovery timeout");
    }
    for (auto& j : jobs_) {
      if (!j.sent && j.due <= now) {
        launch(j);
        progress = true;
      }
    }
    finish_jobs();
    while (next_poll_ && *next_poll_ <= now) {
      const SimTime at = *next_poll_;
      next_poll_ = at + params_.stats_period;
      begin_poll(at);
      progress = true;
    }
    return progress;
  }

 private:
  enum class JobKind { Provision, Reconfigure, Rebalance };

  struct PlannedMod {
    NodeId device;
    ofproto::FlowMod mod;
  };

  struct Job {
    JobKind kind = JobKind::Provision;
    SliceId slice = 0;
    SimTime requested{0};
    std::vector<VnfPlacement> add;
    std::optional<PairKey> pair;  // rebalance target
    SimTime due{0};
    bool sent = false;
    bool failed = false;
    std::set<std::uint32_t> barriers;
    std::set<std::uint32_t> flowmod_xids;
    SimTime last_ack{0};
    std::vector<PlannedMod> undo;
    // State to commit on success.
    std::map<PairKey, std::vector<WeightedPath>> new_paths;
    std::map<FlowEntry, std::uint16_t> new_installed;
    std::vector<VnfPlacement> new_placements;
    std::string detail;
  };

  struct Discovery {
    SimTime deadline;
    std::map<std::uint32_t, NodeId> waiting;
  };

  struct PollRound {
    SimTime started;
    SimTime window_start;
    std::map<std::uint32_t, NodeId> waiting;
    std::map<SliceId, SliceMetrics> acc;
    std::map<SliceId, double> latency_weighted;
  };

  static Job make_job(JobKind kind, SliceId slice, SimTime requested) {
    Job j;
    j.kind = kind;
    j.slice = slice;
    j.requested = requested;
    return j;
  }

  std::uint32_t next_xid() { return ++xid_; }

  void send(NodeId dev, SimTime at, const ofproto::OFMessage& m) { sessions_.at(dev)->send_to_agent(at, m); }

  std::uint32_t send_flowmod(NodeId dev, SimTime at, const ofproto::FlowMod& fm) {
    const auto xid = next_xid();
    ++flowmods_sent_;
    flowmod_log_.emplace_back(dev, fm);
    send(dev, at, ofproto::OFMessage{xid, fm});
    return xid;
  }

  void log(SimTime t, std::string kind, SliceId slice, std::string detail, double value = 0.0) {
    events_.push_back(ControlEvent{t, std::move(kind), slice, std::move(detail), value});
  }

  std::string label(const SliceSpec& s) const {
    std::string r = s.name.empty() ? "NS" + std::to_string(s.id) : s.name;
    r += " racks";
    for (int k : s.racks()) r += " " + topo_->name(topo_->tor_from_index(k));
    r += " priority " + std::to_string(s.priority);
    return r;
  }

  void schedule(Job j) {
    SimTime delay = params_.orchestration_delay;
    if (params_.orchestration_jitter.count() > 0) {
      std::uniform_int_distribution<std::int64_t> d(-params_.orchestration_jitter.count(),
                                                    params_.orchestration_jitter.count());
      delay += SimTime{d(rng_)};
    }
    j.due = j.requested + delay;
    jobs_.push_back(std::move(j));
  }

  // Full-mesh connectivity over the given unordered rack pairs.
  void plan_pairs(Job& j, const std::vector<PairKey>& pairs) {
    for (const auto& [a, b] : pairs) {
      const NodeId ta = topo_->tor_from_index(a), tb = topo_->tor_from_index(b);
      const Path fwd = compute_path(*topo_, ta, tb, {});
      j.new_paths[{a, b}] = {WeightedPath{fwd, 1.0}};
      j.new_paths[{b, a}] = {WeightedPath{fwd.reversed(), 1.0}};
    }
  }

  void launch(Job& j) {
    auto it = slices_.find(j.slice);
    if (it == slices_.end()) {
      j.sent = true;
      j.failed = true;
      return;
    }
    SliceState& st = it->second;
    std::vector<PairKey> pairs;
    if (j.kind == JobKind::Provision) {
      const auto racks = st.spec.racks();
      for (std::size_t x = 0; x < racks.size(); ++x)
        for (std::size_t y = x + 1; y < racks.size(); ++y) pairs.emplace_back(racks[x], racks[y]);
      j.new_placements = st.spec.placements;
      plan_pairs(j, pairs);
    } else if (j.kind == JobKind::Reconfigure) {
      const auto old_racks = st.spec.racks();
      std::vector<int> racks = old_racks;
      j.new_placements = st.spec.placements;
      for (const auto& p : j.add) {
        if (std::find(j.new_placements.begin(), j.new_placements.end(), p) == j.new_placements.end())
          j.new_placements.push_back(p);
        if (std::find(racks.begin(), racks.end(), p.rack) == racks.end()) racks.push_back(p.rack);
      }
      std::sort(racks.begin(), racks.end());
      for (std::size_t x = 0; x < racks.size(); ++x)
        for (std::size_t y = x + 1; y < racks.size(); ++y) {
          const bool old_pair = std::binary_search(old_racks.begin(), old_racks.end(), racks[x]) &&
                                std::binary_search(old_racks.begin(), old_racks.end(), racks[y]);
          if (!old_pair) pairs.emplace_back(racks[x], racks[y]);
        }
      plan_pairs(j, pairs);
    }

    // Desired entries for the affected pairs, then the FlowMods to reach them.
    std::map<FlowEntry, std::uint16_t> desired;
    for (const auto& [key, paths] : j.new_paths)
      for (const auto& wp : paths)
        for (const auto& [e, w] : path_entries(*topo_, wp.path, st.spec.id, st.spec.wavelength, wp.weight))
          desired.emplace(e, w);

    std::vector<PlannedMod> mods;
    for (const auto& [e, w] : desired) {
      auto old = st.installed.find(e);
      const bool tor = e.device.is_tor();
      if (old == st.installed.end()) {
        mods.push_back({e.device, make_flowmod(FlowCommand::Add, e, st.spec.priority,
                                               tor && w != 1000 ? std::optional<std::uint16_t>(w) : std::nullopt)});
        j.undo.push_back({e.device, make_flowmod(FlowCommand::Delete, e, 0, {})});
      } else if (tor && old->second != w) {
        mods.push_back({e.device, make_flowmod(FlowCommand::Modify, e, st.spec.priority, w)});
        j.undo.push_back({e.device, make_flowmod(FlowCommand::Modify, e, st.spec.priority, old->second)});
      } else if (j.kind != JobKind::Rebalance) {
        // Re-assert shared entries on every hop of a new path; ADD is idempotent.
        mods.push_back({e.device, make_flowmod(FlowCommand::Add, e, st.spec.priority,
                                               tor && w != 1000 ? std::optional<std::uint16_t>(w) : std::nullopt)});
      }
    }
    j.new_installed = std::move(desired);

    j.sent = true;
    std::set<NodeId> touched;
    for (const auto& m : mods) {
      j.flowmod_xids.insert(send_flowmod(m.device, j.due, m.mod));
      touched.insert(m.device);
    }
    std::string devs;
    for (const auto& d : touched) devs += (devs.empty() ? "" : ",") + topo_->name(d);
    j.detail = devs;
    // A FeatureReq behind the FlowMods acknowledges that the device applied them.
    for (const auto& d : touched) {
      const auto xid = next_xid();
      j.barriers.insert(xid);
      send(d, j.due, ofproto::OFMessage{xid, ofproto::FeatureReq{}});
    }
    j.last_ack = j.due;
    if (j.flowmod_xids.empty()) log(j.due, "no_change", j.slice, "no FlowMods required");
  }

  void finish_jobs() {
    for (auto it = jobs_.begin(); it != jobs_.end();) {
      Job& j = *it;
      if (!j.sent || !j.barriers.empty()) {
        ++it;
        continue;
      }
      auto sit = slices_.find(j.slice);
      if (sit == slices_.end()) {
        it = jobs_.erase(it);
        continue;
      }
      SliceState& st = sit->second;
      const double elapsed_ms = to_ms(j.last_ack - j.requested);
      if (j.failed) {
        for (const auto& u : j.undo) send_flowmod(u.device, j.last_ack, u.mod);
        log(j.last_ack, "rollback", j.slice, std::to_string(j.undo.size()) + " FlowMods reverted");
        if (j.kind == JobKind::Provision) {
          log(j.last_ack, "provision_failed", j.slice, j.detail);
          slices_.erase(sit);
        } else {
          st.status = SliceStatus::Active;
          log(j.last_ack, j.kind == JobKind::Reconfigure ? "reconfigure_failed" : "rebalance_failed", j.slice,
              j.detail);
        }
      } else {
        for (auto& [k, v] : j.new_paths) st.active_paths[k] = std::move(v);
        for (const auto& [e, w] : j.new_installed) st.installed[e] = w;
        switch (j.kind) {
          case JobKind::Provision:
            st.spec.placements = j.new_placements;
            st.status = SliceStatus::Active;
            log(j.last_ack, "provisioned", j.slice, j.detail, elapsed_ms);
            break;
          case JobKind::Reconfigure:
            st.spec.placements = j.new_placements;
            st.status = SliceStatus::Active;
            log(j.last_ack, "reconfigured", j.slice, j.detail, elapsed_ms);
            break;
          case JobKind::Rebalance: {
            const auto& wps = st.active_paths.at(*j.pair);
            std::string paths;
            for (const auto& wp : wps)
              paths += (paths.empty() ? "" : " | ") + topo_->describe(wp.path) + " w=" + fmt_weight(wp.weight);
            log(j.last_ack, "rebalanced", j.slice, paths, elapsed_ms);
            break;
          }
        }
      }
      it = jobs_.erase(it);
    }
  }

  static std::string fmt_weight(double w) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", w);
    return buf;
  }

  void on_reply(NodeId dev, SimTime at, const ofproto::OFMessage& msg) {
    if (discovery_) {
      auto it = discovery_->waiting.find(msg.xid);
      if (it != discovery_->waiting.end()) {
        const auto* rep = std::get_if<ofproto::FeatureRep>(&msg.body);
        if (!rep) throw DiscoveryError("unexpected reply to FeatureReq from " + topo_->name(dev));
        DeviceInfo info{dev, rep->datapath_id, rep->device_kind, rep->n_ports, rep->capabilities};
        if (info.n_ports != topo_->port_count(dev) || ofproto::device_kind(dev.kind) != info.kind)
          throw DiscoveryError("FeatureRep from " + topo_->name(dev) + " disagrees with the topology");
        view_[dev] = info;
        discovery_->waiting.erase(it);
        if (discovery_->waiting.empty()) {
          discovered_ = true;
          log(at, "discovered", 0, std::to_string(view_.size()) + " devices");
        }
        return;
      }
    }
    if (poll_) {
      auto it = poll_->waiting.find(msg.xid);
      if (it != poll_->waiting.end()) {
        if (const auto* rep = std::get_if<ofproto::StatsRep>(&msg.body)) accumulate(dev, *rep);
        poll_->waiting.erase(it);
        if (poll_->waiting.empty()) complete_poll(true);
        return;
      }
    }
    for (auto& j : jobs_) {
      if (j.barriers.erase(msg.xid)) {
        j.last_ack = std::max(j.last_ack, at);
        return;
      }
      if (j.flowmod_xids.contains(msg.xid)) {
        if (const auto* err = std::get_if<ofproto::ErrorMsg>(&msg.body)) {
          j.failed = true;
          log(at, "flowmod_error", j.slice,
              topo_->name(dev) + (err->code == ofproto::ErrorCode::BadPort ? " BAD_PORT" : " BAD_REQUEST"));
        }
        return;
      }
    }
  }

  // ---- statistics ----------------------------------------------------------

  void begin_poll(SimTime at) {
    if (poll_) complete_poll(false);
    poll_ = PollRound{at, last_poll_, {}, {}, {}};
    last_poll_ = at;
    for (const auto& d : topo_->devices()) {
      const auto xid = next_xid();
      poll_->waiting.emplace(xid, d);
      send(d, at, ofproto::OFMessage{xid, ofproto::StatsReq{}});
    }
  }

  void accumulate(NodeId dev, const ofproto::StatsRep& rep) {
    for (const auto& r : rep.records) {
      auto& m = poll_->acc[r.slice_id];
      m.slice_id = r.slice_id;
      if (dev.is_tor()) {
        m.lost += r.lost_packets;
        m.sent += r.packets_sent;
        m.delivered += r.delivered;
        poll_->latency_weighted[r.slice_id] += r.mean_latency_ns * static_cast<double>(r.delivered);
        if (r.lost_packets) m.lost_by_tor[topo_->flat_tor_index(dev)] += r.lost_packets;
      } else {
        m.retransmissions += r.retransmitted_packets;
      }
    }
  }

  void complete_poll(bool complete) {
    PollRound round = std::move(*poll_);
    poll_.reset();
    std::vector<SliceMetrics> window;
    std::set<SliceId> ids;
    for (const auto& [id, st] : slices_) ids.insert(id);
    for (const auto& [id, m] : round.acc) ids.insert(id);
    for (SliceId id : ids) {
      SliceMetrics m = round.acc.contains(id) ? round.acc.at(id) : SliceMetrics{};
      m.slice_id = id;
      m.window_start = round.window_start;
      m.window_end = round.started;
      m.complete = complete;
      m.loss_ratio = m.sent ? std::min(1.0, static_cast<double>(m.lost) / static_cast<double>(m.sent))
                            : (m.lost ? 1.0 : 0.0);
      m.mean_latency_ns = m.delivered ? round.latency_weighted[id] / static_cast<double>(m.delivered) : 0.0;
      series_.push_back(m);
      window.push_back(m);
    }
    if (!complete) log(round.started, "stats_incomplete", 0, std::to_string(round.waiting.size()) + " replies missing");
    else check_thresholds_and_balance(window);
  }

  // ---- load balancing ------------------------------------------------------

  void check_thresholds_and_balance(const std::vector<SliceMetrics>& window) {
    for (const auto& m : window) {
      auto it = slices_.find(m.slice_id);
      if (it == slices_.end()) continue;
      SliceState& st = it->second;
      if (!(m.loss_ratio > st.spec.qos.loss_threshold)) continue;
      if (st.status != SliceStatus::Active) continue;
      const SimTime cooldown = params_.stats_period * params_.cooldown_periods;
      if (st.last_rebalance && m.window_end - *st.last_rebalance < cooldown) continue;
      log(m.window_end, "threshold_exceeded", m.slice_id,
          "lost " + std::to_string(m.lost) + " of " + std::to_string(m.sent), m.loss_ratio);
      if (!params_.load_balancing) {
        st.last_rebalance = m.window_end;
        continue;
      }
      st.last_rebalance = m.window_end;
      const auto target = worst_pair(st, m);
      if (!target) {
        log(m.window_end, "no_alternative", m.slice_id, "every candidate path is already in use");
        continue;
      }
      balance_pair(st, target->first, target->second, m.window_end);
    }
  }

  // Unordered pair (a < b) with an unused candidate path whose active route
  // crosses the ToR reporting the most loss.
  std::optional<std::pair<PairKey, Path>> worst_pair(const SliceState& st, const SliceMetrics& m) const {
    std::vector<std::pair<std::uint64_t, int>> tors;
    for (const auto& [t, lost] : m.lost_by_tor) tors.emplace_back(lost, t);
    std::sort(tors.begin(), tors.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    for (const auto& [lost, t] : tors) {
      const NodeId worst = topo_->tor_from_index(t);
      for (const auto& [key, wps] : st.active_paths) {
        if (key.first > key.second) continue;
        bool touches = false;
        for (const auto& wp : wps)
          for (const auto& h : wp.path.hops) touches |= h == worst;
        auto rev = st.active_paths.find({key.second, key.first});
        if (rev != st.active_paths.end())
          for (const auto& wp : rev->second)
            for (const auto& h : wp.path.hops) touches |= h == worst;
        if (!touches) continue;
        const NodeId a = topo_->tor_from_index(key.first), b = topo_->tor_from_index(key.second);
        LinkLoads loads;
        std::vector<Path> alternatives;
        for (const auto& p : topo_->enumerate_paths(a, b)) {
          const bool used = std::any_of(wps.begin(), wps.end(), [&](const WeightedPath& wp) { return wp.path == p; });
          if (used) {
            for (const auto& l : path_links(p)) loads[l] = 1.0;
          } else {
            alternatives.push_back(p);
          }
        }
        if (alternatives.empty()) continue;
        Path best = alternatives.front();
        double best_load = std::numeric_limits<double>::infinity();
        for (const auto& p : alternatives) {
          double worst_link = 0.0;
          for (const auto& l : path_links(p))
            if (auto li = loads.find(l); li != loads.end()) worst_link = std::max(worst_link, li->second);
          if (worst_link < best_load) {
            best_load = worst_link;
            best = p;
          }
        }
        return std::make_pair(key, best);
      }
    }
    return std::nullopt;
  }

  void balance_pair(SliceState& st, PairKey key, const Path& alt, SimTime now) {
    Job j = make_job(JobKind::Rebalance, st.spec.id, now);
    j.pair = key;
    const double keep = 1.0 - params_.split_ratio;
    auto fwd = st.active_paths.at(key);
    for (auto& wp : fwd) wp.weight *= keep;
    fwd.push_back(WeightedPath{alt, params_.split_ratio});
    std::vector<WeightedPath> rev;
    for (const auto& wp : fwd) rev.push_back(WeightedPath{wp.path.reversed(), wp.weight});
    j.new_paths[key] = fwd;
    j.new_paths[{key.second, key.first}] = rev;
    log(now, "rebalance_requested", st.spec.id, "alternative " + topo_->describe(alt));
    st.status = SliceStatus::Reconfiguring;
    schedule(std::move(j));
  }

  const TopologyGraph* topo_;
  ControlPlaneParams params_;
  std::map<NodeId, ofproto::Session*> sessions_;
  std::mt19937_64 rng_;
  std::uint32_t xid_ = 0;
  std::optional<Discovery> discovery_;
  TopologyView view_;
  bool discovered_ = false;
  std::map<SliceId, SliceState> slices_;
  std::vector<Job> jobs_;
  std::optional<SimTime> next_poll_;
  SimTime last_poll_{0};
  std::optional<PollRound> poll_;
  std::vector<SliceMetrics> series_;
  std::vector<ControlEvent> events_;
  std::uint64_t flowmods_sent_ = 0;
  std::vector<std::pair<NodeId, ofproto::FlowMod>> flowmod_log_;
};

}  // namespace opsquare
