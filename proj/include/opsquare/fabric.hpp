#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/event_queue.hpp"
#include "opsquare/metrics.hpp"
#include "opsquare/optical_switch.hpp"
#include "opsquare/packet.hpp"
#include "opsquare/time.hpp"
#include "opsquare/topology.hpp"
#include "opsquare/tor.hpp"
#include "opsquare/traffic.hpp"

namespace opsquare {

struct DataPlaneParams {
  SimTime slot = from_ns(1280.0);
  std::uint32_t payload_capacity_bytes = 1536;
  std::size_t buffer_capacity_packets = 64;
  int aggregation_timeout_slots = 1;

  void validate() const {
    if (slot.count() <= 0) throw ConfigError("dataplane.slot_ns must be positive");
    if (payload_capacity_bytes < kMaxFrameBytes) throw ConfigError("dataplane.payload_bytes must be >= 1518");
    if (buffer_capacity_packets < 1) throw ConfigError("dataplane.buffer_packets must be >= 1");
    if (aggregation_timeout_slots < 1) throw ConfigError("dataplane.aggregation_timeout_slots must be >= 1");
  }
};

// Frame-level conservation ledger. in_buffers + in_flight is recomputed on demand.
struct FabricTotals {
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t in_buffers = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t lost_buffer_overflow = 0;
  std::uint64_t lost_no_route = 0;

  bool conserved() const {
    return generated == delivered + in_buffers + in_flight + lost_buffer_overflow + lost_no_route;
  }
};

// Callbacks fed every frame outcome. All optional.
struct FabricObserver {
  std::function<void(SliceId, const Frame&)> generated;
  std::function<void(SliceId, const Frame&, SimTime delivered_at, int dst_tor)> delivered;
  std::function<void(SliceId, const Frame&, LossCause, int dst_tor)> lost;
  // Raw per-switch arbitration results, one call per switch per slot with labels.
  std::function<void(SimTime, const OpticalSwitch&, std::span<const Label>, std::span<const FlowControlSignal>)>
      arbitration;
};

// The slotted OPSquare data plane: traffic sources, ToRs, switches, and fiber.
// Each slot boundary runs in three phases: collect labels from every ToR,
// compute every verdict, then apply the effects.
class Fabric {
 public:
  Fabric(const TopologyGraph& topo, DataPlaneParams params) : topo_(&topo), params_(params) {
    params_.validate();
    TorParams tp;
    tp.buffer_capacity_packets = params_.buffer_capacity_packets;
    tp.payload_capacity_bytes = params_.payload_capacity_bytes;
    tp.aggregation_hold = params_.slot * (params_.aggregation_timeout_slots - 1);
    for (const auto& t : topo.tors()) tors_.emplace_back(topo, t, tp);
    for (const auto& s : topo.switches()) {
      switch_index_.emplace(s, switches_.size());
      switches_.emplace_back(s, topo.port_count(s));
    }
    hop_delay_ = from_ns(2.0 * topo.config().segment_delay_ns());
    processing_ = from_ns(topo.config().tx_rx_processing_ns);
  }

  const TopologyGraph& topology() const { return *topo_; }
  const DataPlaneParams& params() const { return params_; }
  SimTime slot_duration() const { return params_.slot; }
  SimTime hop_latency() const { return hop_delay_ + processing_; }

  TorNode& tor(int flat) { return tors_.at(static_cast<std::size_t>(flat - 1)); }
  const TorNode& tor(int flat) const { return tors_.at(static_cast<std::size_t>(flat - 1)); }
  TorNode& tor(NodeId id) { return tor(topo_->flat_tor_index(id)); }
  OpticalSwitch& optical_switch(NodeId id) { return switches_.at(switch_index_.at(id)); }
  const OpticalSwitch& optical_switch(NodeId id) const { return switches_.at(switch_index_.at(id)); }
  std::vector<OpticalSwitch>& switches() { return switches_; }
  std::vector<TorNode>& tors() { return tors_; }

  void set_observer(FabricObserver obs) { observer_ = std::move(obs); }
  void set_measurement_start(SimTime t) { measure_from_ = t; }

  // A server of `slice` attached to ToR `src.src_tor()`; emits frames until `stop`.
  void attach_source(SliceId slice, TrafficSource src, SimTime stop) {
    sources_.push_back(Source{slice, std::move(src), stop, 0});
    const std::size_t idx = sources_.size() - 1;
    schedule_next_frame(idx);
  }

  // Inject one frame directly (tests and scripted scenarios).
  TorNode::Admission inject_frame(int src_tor, SliceId slice, int dst_tor, const Frame& frame, std::uint64_t flow_hash) {
    ++totals_.generated;
    if (observer_.generated) observer_.generated(slice, frame);
    const auto adm = tor(src_tor).aggregate_frame(frame, slice, dst_tor, flow_hash);
    if (adm == TorNode::Admission::Dropped) {
      ++totals_.lost_buffer_overflow;
      if (observer_.lost) observer_.lost(slice, frame, LossCause::BufferOverflow, dst_tor);
    }
    return adm;
  }

  bool has_pending_events() const { return !events_.empty(); }
  SimTime next_event_time() const { return events_.next_time(); }

  // Processes frame and packet arrivals with time <= t.
  void advance_to(SimTime t) {
    while (!events_.empty() && events_.next_time() <= t) {
      auto e = events_.pop();
      std::visit([&](auto& ev) { handle(e.time, ev); }, e.event);
    }
    if (events_.now() < t) events_.advance_to(t);
  }

  // Slot boundary `slot` (time slot * slot_duration).
  void run_slot(std::uint64_t slot) {
    const SimTime now = params_.slot * static_cast<std::int64_t>(slot);
    if (now < events_.now()) throw std::logic_error("slot boundary lies before the fabric clock");
    // Phase 1: labels.
    std::vector<std::vector<Label>> per_switch(switches_.size());
    std::vector<std::pair<int, Label>> owners;  // (tor flat, label)
    for (auto& t : tors_) {
      if (t.idle()) continue;
      t.close_expired(now);
      for (auto& l : t.emit_labels(slot)) {
        per_switch[switch_index_.at(l.sw)].push_back(l);
        owners.emplace_back(t.flat_index(), l);
      }
    }
    if (owners.empty()) return;
    // Phase 2: verdicts.
    std::map<std::uint64_t, FlowControlSignal> verdicts;
    for (std::size_t s = 0; s < switches_.size(); ++s) {
      if (per_switch[s].empty()) continue;
      auto sig = switches_[s].resolve_contention(per_switch[s]);
      if (sig.size() != per_switch[s].size()) throw ProtocolViolation("switch returned wrong verdict count");
      if (observer_.arbitration) observer_.arbitration(now, switches_[s], per_switch[s], sig);
      for (const auto& v : sig) {
        if (!verdicts.emplace(v.packet_id, v).second) throw ProtocolViolation("duplicate verdict for a packet");
      }
    }
    // Phase 3: effects.
    for (const auto& [flat, label] : owners) {
      auto it = verdicts.find(label.packet_id);
      if (it == verdicts.end()) throw ProtocolViolation("label received no verdict");
      const FlowControlSignal sig = it->second;
      auto outcome = tor(flat).apply_flow_control(sig);
      if (outcome.released) {
        forward_packet(label, sig, std::move(*outcome.released), now);
      } else if (outcome.dropped) {
        totals_.lost_no_route += outcome.dropped->frame_count();
        if (observer_.lost)
          for (const auto& f : outcome.dropped->frames)
            observer_.lost(label.slice, f, LossCause::NoRoute, outcome.dropped->dst_tor);
      }
    }
  }

  // ACKed packet leaves its ToR; it reaches the next ToR after two fiber
  // segments plus TX/RX processing.
  void forward_packet(const Label& label, const FlowControlSignal& sig, OpticalPacket pkt, SimTime now) {
    if (sig.verdict != Verdict::Ack) throw ProtocolViolation("forwarding a packet that was not ACKed");
    if (sig.output_port != label.requested_output_port)
      throw ProtocolViolation("granted output differs from the label request");
    const NodeId next = topo_->tor_at_port(label.sw, sig.output_port);
    ++pkt.hop_count;
    if (pkt.hop_count > 2) throw ProtocolViolation("packet exceeded two switch hops");
    totals_.in_flight += pkt.frame_count();
    events_.push(now + hop_delay_ + processing_, PacketArrival{topo_->flat_tor_index(next), std::move(pkt)});
  }

  // Frames currently buffered anywhere, in flight, and cumulative outcomes.
  FabricTotals totals() const {
    FabricTotals t = totals_;
    t.in_buffers = 0;
    for (const auto& tor : tors_) t.in_buffers += tor.frames_buffered();
    return t;
  }

  // True when no ToR holds a packet (in-flight arrivals are pending events).
  bool quiescent() const {
    for (const auto& t : tors_)
      if (!t.idle()) return false;
    return true;
  }

 private:
  struct Source {
    SliceId slice;
    TrafficSource src;
    SimTime stop;
    std::uint64_t server_key;
  };
  struct FrameEvent {
    std::size_t source;
    FrameArrival arrival;
  };
  struct PacketArrival {
    int tor;
    OpticalPacket packet;
  };
  using Event = std::variant<FrameEvent, PacketArrival>;

  void schedule_next_frame(std::size_t idx) {
    auto& s = sources_[idx];
    FrameArrival a = s.src.next();
    if (a.time >= s.stop) return;
    events_.push(a.time, FrameEvent{idx, a});
  }

  void handle(SimTime now, FrameEvent& ev) {
    auto& s = sources_[ev.source];
    Frame f;
    f.size_bytes = ev.arrival.size_bytes;
    f.created = now;
    f.measured = now >= measure_from_;
    const std::uint64_t hash = (static_cast<std::uint64_t>(ev.source) << 40) ^ ev.arrival.seq;
    inject_frame(s.src.src_tor(), s.slice, ev.arrival.dst_tor, f, hash);
    schedule_next_frame(ev.source);
  }

  void handle(SimTime now, PacketArrival& ev) {
    OpticalPacket& p = ev.packet;
    totals_.in_flight -= p.frame_count();
    if (ev.tor == p.dst_tor) {
      totals_.delivered += p.frame_count();
      double sum = 0.0;
      for (const auto& f : p.frames) {
        sum += to_ns(now - f.created);
        if (observer_.delivered) observer_.delivered(p.slice, f, now, ev.tor);
      }
      tor(ev.tor).record_delivery(p.slice, p.frame_count(), sum);
      return;
    }
    const SliceId slice = p.slice;
    const int dst = p.dst_tor;
    auto rejected = tor(ev.tor).accept_transit(std::move(p));
    if (rejected) {
      totals_.lost_buffer_overflow += rejected->frame_count();
      if (observer_.lost)
        for (const auto& f : rejected->frames) observer_.lost(slice, f, LossCause::BufferOverflow, dst);
    }
  }

  const TopologyGraph* topo_;
  DataPlaneParams params_;
  std::vector<TorNode> tors_;
  std::vector<OpticalSwitch> switches_;
  std::map<NodeId, std::size_t> switch_index_;
  std::vector<Source> sources_;
  EventQueue<Event> events_;
  FabricObserver observer_;
  FabricTotals totals_;
  SimTime hop_delay_{0};
  SimTime processing_{0};
  SimTime measure_from_{0};
};

}  // namespace opsquare
