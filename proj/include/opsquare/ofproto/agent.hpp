#pragma once

#include <cmath>
#include <deque>
#include <optional>
#include <variant>

#include "opsquare/errors.hpp"
#include "opsquare/ofproto/codec.hpp"
#include "opsquare/ofproto/device.hpp"
#include "opsquare/ofproto/session.hpp"
#include "opsquare/optical_switch.hpp"
#include "opsquare/topology.hpp"
#include "opsquare/tor.hpp"

namespace opsquare::ofproto {

// Translates control messages into LUT operations on one device and reports
// its windowed counters. FlowMods to a ToR match on the destination ToR
// (in_port) and OUTPUT names the uplink; FlowMods to a switch install permits.
class DeviceAgent {
 public:
  DeviceAgent(const TopologyGraph& topo, TorNode& tor) : topo_(&topo), id_(tor.id()), device_(&tor) {}
  DeviceAgent(const TopologyGraph& topo, OpticalSwitch& sw) : topo_(&topo), id_(sw.id()), device_(&sw) {}

  NodeId id() const { return id_; }

  // Reply to send back, if any. A successful FlowMod has no reply.
  std::optional<OFMessage> handle(const OFMessage& msg, SimTime now) {
    return std::visit(
        [&](const auto& b) -> std::optional<OFMessage> {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, FeatureReq>) {
            return OFMessage{msg.xid, features()};
          } else if constexpr (std::is_same_v<T, FlowMod>) {
            if (auto err = apply(b)) return OFMessage{msg.xid, ErrorMsg{*err}};
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, StatsReq>) {
            return OFMessage{msg.xid, stats(now)};
          } else {
            return OFMessage{msg.xid, ErrorMsg{ErrorCode::BadRequest}};
          }
        },
        msg.body);
  }

  FeatureRep features() const {
    FeatureRep r;
    r.datapath_id = datapath_id(id_);
    r.device_kind = device_kind(id_.kind);
    r.n_ports = static_cast<std::uint16_t>(topo_->port_count(id_));
    r.capabilities = id_.kind == NodeKind::ToR ? 0u : kCapOpticalFastSwitching;
    return r;
  }

 private:
  std::optional<ErrorCode> apply(const FlowMod& fm) {
    const auto out = fm.output();
    if (!out) return ErrorCode::BadRequest;
    try {
      if (auto* tor = std::get_if<TorNode*>(&device_)) {
        if (*out != 1 && *out != 2) return ErrorCode::BadPort;
        TorLutOp op;
        op.command = fm.command;
        op.slice = fm.match.optical_flow_id;
        op.dst_tor = fm.match.in_port;
        op.uplink = static_cast<Uplink>(*out);
        op.wavelength = fm.match.wavelength;
        if (auto p = fm.priority()) op.priority = *p;
        if (auto w = fm.weight_permille()) op.weight = *w / 1000.0;
        (*tor)->update_lut(std::span<const TorLutOp>(&op, 1));
      } else {
        SwitchLutOp op;
        op.command = fm.command;
        op.key = PermitKey{fm.match.optical_flow_id, fm.match.in_port, *out, fm.match.wavelength};
        std::get<OpticalSwitch*>(device_)->update_lut(std::span<const SwitchLutOp>(&op, 1));
      }
    } catch (const InvalidPortError&) {
      return ErrorCode::BadPort;
    }
    return std::nullopt;
  }

  StatsRep stats(SimTime now) {
    StatsRep rep;
    const auto window_ns = static_cast<std::uint64_t>(std::llround(to_ns(now - last_read_)));
    last_read_ = now;
    if (auto* tor = std::get_if<TorNode*>(&device_)) {
      for (const auto& [slice, c] : (*tor)->take_window()) {
        StatsRecord r;
        r.slice_id = slice;
        r.lost_packets = c.lost();
        r.retransmitted_packets = c.nack_received;
        r.packets_sent = c.frames_offered;
        r.delivered = c.frames_delivered;
        r.mean_latency_ns = c.frames_delivered ? c.latency_sum_ns / static_cast<double>(c.frames_delivered) : 0.0;
        r.window_ns = window_ns;
        rep.records.push_back(r);
      }
    } else {
      for (const auto& [slice, c] : std::get<OpticalSwitch*>(device_)->take_window()) {
        StatsRecord r;
        r.slice_id = slice;
        r.retransmitted_packets = c.nacks_contention;
        r.packets_sent = c.acks;
        r.window_ns = window_ns;
        rep.records.push_back(r);
      }
    }
    return rep;
  }

  const TopologyGraph* topo_;
  NodeId id_;
  std::variant<TorNode*, OpticalSwitch*> device_;
  SimTime last_read_{0};
};

// Runs an agent against its session: messages are processed one at a time in
// arrival order, each FlowMod occupying the agent for `flowmod_delay`.
class AgentHost {
 public:
  AgentHost(DeviceAgent agent, Session& session, SimTime flowmod_delay)
      : agent_(std::move(agent)), session_(&session), flowmod_delay_(flowmod_delay) {}

  DeviceAgent& agent() { return agent_; }
  Session& session() { return *session_; }

  // Completes every message whose processing has finished by `now`.
  // Returns true if anything happened.
  bool step(SimTime now) {
    bool progress = false;
    for (auto& [at, msg] : session_->receive_at_agent(now)) {
      const SimTime start = std::max(at, busy_until_);
      const SimTime cost = std::holds_alternative<FlowMod>(msg.body) ? flowmod_delay_ : SimTime{0};
      busy_until_ = start + cost;
      pending_.push_back({busy_until_, std::move(msg)});
      progress = true;
    }
    while (!pending_.empty() && pending_.front().done_at <= now) {
      auto p = std::move(pending_.front());
      pending_.pop_front();
      if (auto reply = agent_.handle(p.msg, p.done_at)) session_->send_to_controller(p.done_at, *reply);
      progress = true;
    }
    return progress;
  }

  SimTime next_completion() const { return pending_.empty() ? SimTime::max() : pending_.front().done_at; }
  bool idle() const { return pending_.empty(); }

 private:
  struct Pending {
    SimTime done_at;
    OFMessage msg;
  };
  DeviceAgent agent_;
  Session* session_;
  SimTime flowmod_delay_;
  SimTime busy_until_{0};
  std::deque<Pending> pending_;
};

}  // namespace opsquare::ofproto
