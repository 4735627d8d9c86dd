#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/packet.hpp"
#include "opsquare/time.hpp"
#include "opsquare/topology.hpp"

namespace opsquare {

struct TorParams {
  std::size_t buffer_capacity_packets = 64;
  std::uint32_t payload_capacity_bytes = 1536;
  // How long a partly filled packet may keep assembling once a slot boundary
  // has passed; zero launches it at the first boundary after its first frame.
  SimTime aggregation_hold{0};
};

// One forwarding choice for (slice, destination): which uplink, and the
// label/priority/wavelength stamped on packets taking it.
struct TorRoute {
  Uplink uplink = Uplink::IS;
  int label_port = 0;
  std::uint16_t wavelength = 0;
  int priority = kLowestPriority;
  double weight = 1.0;
};

struct TorLutOp {
  FlowCommand command = FlowCommand::Add;
  SliceId slice = 0;
  int dst_tor = 0;
  Uplink uplink = Uplink::IS;
  std::uint16_t wavelength = 0;
  std::optional<int> priority;
  std::optional<double> weight;
};

struct VoqKey {
  SliceId slice = 0;
  int dst_tor = 0;
  Uplink uplink = Uplink::IS;
  auto operator<=>(const VoqKey&) const = default;
};

struct TorSliceCounters {
  std::uint64_t frames_offered = 0;  // frames handed in by local servers
  std::uint64_t lost_buffer_overflow = 0;
  std::uint64_t lost_no_route = 0;
  std::uint64_t nack_received = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t frames_delivered = 0;  // frames terminating at this ToR
  double latency_sum_ns = 0.0;

  std::uint64_t lost() const { return lost_buffer_overflow + lost_no_route; }

  TorSliceCounters& operator+=(const TorSliceCounters& o) {
    frames_offered += o.frames_offered;
    lost_buffer_overflow += o.lost_buffer_overflow;
    lost_no_route += o.lost_no_route;
    nack_received += o.nack_received;
    packets_sent += o.packets_sent;
    frames_delivered += o.frames_delivered;
    latency_sum_ns += o.latency_sum_ns;
    return *this;
  }
};

// splitmix64 finaliser; used for deterministic path selection.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FPGA ToR: per-(slice, destination, uplink) virtual output queues with
// frame aggregation, a forwarding LUT, and the ToR half of optical flow control.
class TorNode {
 public:
  enum class Admission { Enqueued, Dropped };

  struct FlowControlOutcome {
    std::optional<OpticalPacket> released;  // ACK
    std::optional<OpticalPacket> dropped;   // NACK(no route)
  };

  TorNode(const TopologyGraph& topo, NodeId id, TorParams params)
      : topo_(&topo), id_(id), flat_(topo.flat_tor_index(id)), params_(params) {
    if (params_.buffer_capacity_packets < 1) throw ConfigError("buffer capacity must be >= 1 packet");
    if (params_.payload_capacity_bytes < kMaxFrameBytes)
      throw ConfigError("slot payload must hold one maximum-size frame");
  }

  NodeId id() const { return id_; }
  int flat_index() const { return flat_; }
  const TorParams& params() const { return params_; }

  // ---- forwarding LUT ---------------------------------------------------

  void update_lut(std::span<const TorLutOp> ops) {
    for (const auto& op : ops) {
      if (op.dst_tor < 1 || op.dst_tor > topo_->tor_count() || op.dst_tor == flat_)
        throw InvalidPortError("ToR LUT destination out of range");
      if (op.uplink != Uplink::IS && op.uplink != Uplink::ES) throw InvalidPortError("ToR uplink must be 1 or 2");
      if (op.priority && !valid_priority(*op.priority)) throw InvalidPortError("priority out of range 1..4");
      if (op.weight && !(*op.weight > 0.0 && *op.weight <= 1.0)) throw InvalidPortError("route weight out of (0,1]");
      const NodeId dst = topo_->tor_from_index(op.dst_tor);
      if (op.uplink == Uplink::IS && dst.rack == id_.rack)
        throw InvalidPortError("IS uplink would hairpin back to this ToR");
      if (op.uplink == Uplink::ES && dst.cluster == id_.cluster)
        throw InvalidPortError("ES uplink would hairpin back to this ToR");
    }
    for (const auto& op : ops) {
      auto& routes = lut_[{op.slice, op.dst_tor}];
      auto it = std::find_if(routes.begin(), routes.end(), [&](const TorRoute& r) { return r.uplink == op.uplink; });
      if (op.command == FlowCommand::Delete) {
        if (it != routes.end()) routes.erase(it);
        if (routes.empty()) lut_.erase({op.slice, op.dst_tor});
        continue;
      }
      if (it == routes.end()) {
        routes.push_back(TorRoute{op.uplink, 0, 0, kLowestPriority, 1.0});
        std::sort(routes.begin(), routes.end(),
                  [](const TorRoute& a, const TorRoute& b) { return a.uplink < b.uplink; });
        it = std::find_if(routes.begin(), routes.end(), [&](const TorRoute& r) { return r.uplink == op.uplink; });
      }
      it->label_port = topo_->label_port(id_, topo_->tor_from_index(op.dst_tor), op.uplink);
      it->wavelength = op.wavelength;
      if (op.priority) it->priority = *op.priority;
      if (op.weight) it->weight = *op.weight;
    }
  }

  void remove_slice(SliceId slice) {
    std::erase_if(lut_, [slice](const auto& kv) { return kv.first.first == slice; });
  }

  const std::map<std::pair<SliceId, int>, std::vector<TorRoute>>& lut() const { return lut_; }

  // Route for a packet toward `dst_tor`. Multiple routes are split by weight
  // using `hash`; unprovisioned destinations follow the topology default so
  // that the switch permit table decides whether they pass.
  TorRoute select_route(SliceId slice, int dst_tor, std::uint64_t hash) const {
    auto it = lut_.find({slice, dst_tor});
    if (it != lut_.end() && !it->second.empty()) {
      const auto& routes = it->second;
      if (routes.size() == 1) return routes.front();
      double total = 0.0;
      for (const auto& r : routes) total += r.weight;
      const double u = static_cast<double>(mix64(hash) >> 11) * 0x1.0p-53 * total;
      double acc = 0.0;
      for (const auto& r : routes) {
        acc += r.weight;
        if (u < acc) return r;
      }
      return routes.back();
    }
    const NodeId dst = topo_->tor_from_index(dst_tor);
    TorRoute r;
    r.uplink = topo_->default_uplink(id_, dst);
    r.label_port = topo_->label_port(id_, dst, r.uplink);
    for (const auto& [key, routes] : lut_) {
      if (key.first == slice && !routes.empty()) {
        r.priority = routes.front().priority;
        r.wavelength = routes.front().wavelength;
        break;
      }
    }
    return r;
  }

  // ---- buffering --------------------------------------------------------

  // A frame from a local server. `flow_hash` selects among weighted routes.
  Admission aggregate_frame(const Frame& frame, SliceId slice, int dst_tor, std::uint64_t flow_hash) {
    if (frame.size_bytes < kMinFrameBytes || frame.size_bytes > kMaxFrameBytes)
      throw ProtocolViolation("frame size outside Ethernet bounds");
    auto& win = window_[slice];
    auto& cum = counters_[slice];
    ++win.frames_offered;
    ++cum.frames_offered;
    const TorRoute route = select_route(slice, dst_tor, flow_hash);
    Voq& q = voq({slice, dst_tor, route.uplink});
    if (q.tail_open) {
      OpticalPacket& tail = q.packets.back();
      if (tail.payload_bytes + frame.size_bytes <= params_.payload_capacity_bytes) {
        tail.frames.push_back(frame);
        tail.payload_bytes += frame.size_bytes;
        ++frames_buffered_;
        if (params_.payload_capacity_bytes - tail.payload_bytes < kMinFrameBytes) close_tail(q);
        return Admission::Enqueued;
      }
      close_tail(q);
    }
    if (q.packets.size() >= params_.buffer_capacity_packets) {
      ++win.lost_buffer_overflow;
      ++cum.lost_buffer_overflow;
      return Admission::Dropped;
    }
    OpticalPacket p;
    p.id = next_packet_id();
    p.slice = slice;
    p.src_tor = flat_;
    p.dst_tor = dst_tor;
    p.priority = route.priority;
    p.wavelength = route.wavelength;
    p.created = frame.created;
    p.frames.reserve(4);
    p.frames.push_back(frame);
    p.payload_bytes = frame.size_bytes;
    q.packets.push_back(std::move(p));
    q.tail_open = true;
    q.tail_opened = frame.created;
    ++open_tails_;
    ++frames_buffered_;
    ++packets_held_;
    if (params_.payload_capacity_bytes - frame.size_bytes < kMinFrameBytes) close_tail(q);
    return Admission::Enqueued;
  }

  // A packet arriving from a switch for its next hop. Returns the packet back
  // if the relay VOQ is full (the caller accounts the loss).
  std::optional<OpticalPacket> accept_transit(OpticalPacket&& pkt) {
    const TorRoute route = select_route(pkt.slice, pkt.dst_tor, pkt.id);
    Voq& q = voq({pkt.slice, pkt.dst_tor, route.uplink});
    if (q.packets.size() >= params_.buffer_capacity_packets) {
      window_[pkt.slice].lost_buffer_overflow += pkt.frame_count();
      counters_[pkt.slice].lost_buffer_overflow += pkt.frame_count();
      return std::move(pkt);
    }
    pkt.priority = route.priority;
    pkt.wavelength = route.wavelength;
    frames_buffered_ += pkt.frame_count();
    // Completed packets queue ahead of the one still assembling.
    if (q.tail_open) q.packets.insert(std::prev(q.packets.end()), std::move(pkt));
    else q.packets.push_back(std::move(pkt));
    ++packets_held_;
    return std::nullopt;
  }

  // Launch packets whose aggregation timeout has elapsed. A packet keeps
  // assembling while other packets are queued ahead of it.
  void close_expired(SimTime now) {
    if (open_tails_ == 0) return;
    for (auto& [key, q] : voqs_) {
      if (q.tail_open && q.packets.size() == 1 && now - q.tail_opened >= params_.aggregation_hold) close_tail(q);
    }
  }

  // At most one label per uplink, for the head packet of the best VOQ:
  // lowest priority number first, then round-robin over VOQ keys.
  std::vector<Label> emit_labels(std::uint64_t slot) {
    std::vector<Label> labels;
    if (!awaiting_.empty()) throw ProtocolViolation("labels emitted while verdicts are outstanding");
    if (packets_held_ == 0) return labels;
    for (Uplink u : {Uplink::IS, Uplink::ES}) {
      Voq* best = nullptr;
      bool best_after = false;
      const auto& last = last_served_[u == Uplink::IS ? 0 : 1];
      for (auto& [key, q] : voqs_) {
        if (key.uplink != u || q.closed_count() == 0) continue;
        const int prio = q.packets.front().priority;
        const bool after = !last || *last < key;
        if (!best) {
          best = &q;
          best_after = after;
          continue;
        }
        const int best_prio = best->packets.front().priority;
        if (prio < best_prio || (prio == best_prio && after && !best_after)) {
          best = &q;
          best_after = after;
        }
      }
      if (!best) continue;
      const OpticalPacket& head = best->packets.front();
      const NodeId sw = topo_->uplink_switch(id_, u);
      Label l;
      l.slot = slot;
      l.sw = sw;
      l.input_port = topo_->switch_port_of(sw, id_);
      l.requested_output_port = topo_->label_port(id_, topo_->tor_from_index(head.dst_tor), u);
      l.priority = head.priority;
      l.slice = head.slice;
      l.wavelength = head.wavelength;
      l.packet_id = head.id;
      awaiting_.emplace(head.id, best->key);
      labels.push_back(l);
    }
    return labels;
  }

  FlowControlOutcome apply_flow_control(const FlowControlSignal& sig) {
    auto it = awaiting_.find(sig.packet_id);
    if (it == awaiting_.end()) throw ProtocolViolation("flow control signal for unknown packet");
    const VoqKey key = it->second;
    awaiting_.erase(it);
    Voq& q = voqs_.at(key);
    if (q.packets.empty() || q.packets.front().id != sig.packet_id)
      throw ProtocolViolation("flow control signal does not match the VOQ head");
    FlowControlOutcome out;
    const SliceId slice = q.packets.front().slice;
    switch (sig.verdict) {
      case Verdict::Ack:
        ++window_[slice].packets_sent;
        ++counters_[slice].packets_sent;
        last_served_[key.uplink == Uplink::IS ? 0 : 1] = key;
        out.released = pop_head(q);
        break;
      case Verdict::NackContention:
        ++window_[slice].nack_received;
        ++counters_[slice].nack_received;
        break;
      case Verdict::NackNoRoute: {
        OpticalPacket p = pop_head(q);
        window_[slice].lost_no_route += p.frame_count();
        counters_[slice].lost_no_route += p.frame_count();
        out.dropped = std::move(p);
        break;
      }
    }
    return out;
  }

  void record_delivery(SliceId slice, std::uint64_t frames, double latency_sum_ns) {
    window_[slice].frames_delivered += frames;
    window_[slice].latency_sum_ns += latency_sum_ns;
    counters_[slice].frames_delivered += frames;
    counters_[slice].latency_sum_ns += latency_sum_ns;
  }

  // ---- inspection -------------------------------------------------------

  std::uint64_t frames_buffered() const { return frames_buffered_; }
  bool idle() const { return packets_held_ == 0; }
  bool has_open_tail() const { return open_tails_ > 0; }

  std::size_t occupancy(const VoqKey& k) const {
    auto it = voqs_.find(k);
    return it == voqs_.end() ? 0 : it->second.packets.size();
  }
  std::uint64_t frames_in(const VoqKey& k) const {
    auto it = voqs_.find(k);
    if (it == voqs_.end()) return 0;
    std::uint64_t n = 0;
    for (const auto& p : it->second.packets) n += p.frame_count();
    return n;
  }
  std::vector<VoqKey> voq_keys() const {
    std::vector<VoqKey> keys;
    for (const auto& [k, q] : voqs_)
      if (!q.packets.empty()) keys.push_back(k);
    return keys;
  }

  const std::map<SliceId, TorSliceCounters>& cumulative() const { return counters_; }
  std::map<SliceId, TorSliceCounters> take_window() { return std::exchange(window_, {}); }

 private:
  struct Voq {
    VoqKey key;
    std::deque<OpticalPacket> packets;
    bool tail_open = false;
    SimTime tail_opened{0};

    std::size_t closed_count() const { return packets.size() - (tail_open ? 1 : 0); }
  };

  Voq& voq(const VoqKey& k) {
    auto [it, inserted] = voqs_.try_emplace(k);
    if (inserted) it->second.key = k;
    return it->second;
  }

  void close_tail(Voq& q) {
    if (!q.tail_open) return;
    q.tail_open = false;
    --open_tails_;
  }

  OpticalPacket pop_head(Voq& q) {
    OpticalPacket p = std::move(q.packets.front());
    q.packets.pop_front();
    frames_buffered_ -= p.frame_count();
    --packets_held_;
    return p;
  }

  std::uint64_t next_packet_id() { return (static_cast<std::uint64_t>(flat_) << 44) | ++packet_seq_; }

  const TopologyGraph* topo_;
  NodeId id_;
  int flat_;
  TorParams params_;
  std::map<std::pair<SliceId, int>, std::vector<TorRoute>> lut_;
  std::map<VoqKey, Voq> voqs_;
  std::unordered_map<std::uint64_t, VoqKey> awaiting_;
  std::optional<VoqKey> last_served_[2];
  std::map<SliceId, TorSliceCounters> counters_;
  std::map<SliceId, TorSliceCounters> window_;
  std::uint64_t frames_buffered_ = 0;
  std::uint64_t packet_seq_ = 0;
  std::size_t packets_held_ = 0;
  std::size_t open_tails_ = 0;
};

}  // namespace opsquare
