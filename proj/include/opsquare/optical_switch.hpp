#pragma once

#include <algorithm>
#include <utility>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/packet.hpp"
#include "opsquare/topology.hpp"

namespace opsquare {

// A (slice, input, output, wavelength) tuple the switch controller may gate through.
struct PermitKey {
  SliceId slice = 0;
  int in_port = 0;
  int out_port = 0;
  std::uint16_t wavelength = 0;
  auto operator<=>(const PermitKey&) const = default;
};

struct SwitchLutOp {
  FlowCommand command = FlowCommand::Add;
  PermitKey key;
};

struct SwitchSliceCounters {
  std::uint64_t acks = 0;
  std::uint64_t nacks_contention = 0;
  std::uint64_t nacks_no_route = 0;

  SwitchSliceCounters& operator+=(const SwitchSliceCounters& o) {
    acks += o.acks;
    nacks_contention += o.nacks_contention;
    nacks_no_route += o.nacks_no_route;
    return *this;
  }
};

// Buffer-less optical switch plus its label-driven controller: a permit LUT
// and a per-output arbiter (strict priority, round-robin among equals).
class OpticalSwitch {
 public:
  OpticalSwitch(NodeId id, int radix) : id_(id), radix_(radix), rr_(static_cast<std::size_t>(radix) + 1, 1) {
    if (radix < 1) throw ConfigError("switch radix must be >= 1");
  }

  NodeId id() const { return id_; }
  int radix() const { return radix_; }

  bool permits(const PermitKey& k) const { return lut_.contains(k); }
  const std::set<PermitKey>& lut() const { return lut_; }
  int rr_pointer(int out_port) const { return rr_.at(static_cast<std::size_t>(out_port)); }

  // Validates the whole batch before touching the table.
  void update_lut(std::span<const SwitchLutOp> ops) {
    for (const auto& op : ops) {
      if (op.key.in_port < 1 || op.key.in_port > radix_ || op.key.out_port < 1 || op.key.out_port > radix_)
        throw InvalidPortError("permit entry port outside switch radix");
    }
    for (const auto& op : ops) {
      if (op.command == FlowCommand::Delete) lut_.erase(op.key);
      else lut_.insert(op.key);
    }
  }

  void remove_slice(SliceId slice) {
    std::erase_if(lut_, [slice](const PermitKey& k) { return k.slice == slice; });
  }

  // One verdict per label, in label order.
  std::vector<FlowControlSignal> resolve_contention(std::span<const Label> labels) {
    std::vector<FlowControlSignal> out(labels.size());
    std::vector<bool> seen_input(static_cast<std::size_t>(radix_) + 1, false);
    // Per output port: indices of permitted labels.
    std::map<int, std::vector<std::size_t>> contenders;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const Label& l = labels[i];
      if (!(l.sw == id_)) throw ProtocolViolation("label delivered to the wrong switch");
      if (l.input_port < 1 || l.input_port > radix_)
        throw ProtocolViolation("label input port outside switch radix");
      if (seen_input[static_cast<std::size_t>(l.input_port)])
        throw ProtocolViolation("two labels on one input port in a single slot");
      seen_input[static_cast<std::size_t>(l.input_port)] = true;
      out[i].packet_id = l.packet_id;
      const bool in_radix = l.requested_output_port >= 1 && l.requested_output_port <= radix_;
      if (!in_radix || !permits({l.slice, l.input_port, l.requested_output_port, l.wavelength})) {
        out[i].verdict = Verdict::NackNoRoute;
        ++counters_[l.slice].nacks_no_route;
        ++window_[l.slice].nacks_no_route;
        continue;
      }
      contenders[l.requested_output_port].push_back(i);
    }
    for (auto& [port, idx] : contenders) {
      int best = kLowestPriority + 1;
      for (auto i : idx) best = std::min(best, labels[i].priority);
      // Among best-priority labels, the first input at or after the pointer wins.
      const int ptr = rr_[static_cast<std::size_t>(port)];
      std::size_t winner = idx.front();
      int best_dist = radix_ + 1;
      for (auto i : idx) {
        if (labels[i].priority != best) continue;
        const int dist = (labels[i].input_port - ptr + radix_) % radix_;
        if (dist < best_dist) {
          best_dist = dist;
          winner = i;
        }
      }
      rr_[static_cast<std::size_t>(port)] = labels[winner].input_port % radix_ + 1;
      for (auto i : idx) {
        const SliceId s = labels[i].slice;
        if (i == winner) {
          out[i].verdict = Verdict::Ack;
          out[i].output_port = port;
          ++counters_[s].acks;
          ++window_[s].acks;
        } else {
          out[i].verdict = Verdict::NackContention;
          ++counters_[s].nacks_contention;
          ++window_[s].nacks_contention;
        }
      }
    }
    return out;
  }

  const std::map<SliceId, SwitchSliceCounters>& cumulative() const { return counters_; }

  // Returns the counters accumulated since the previous call and starts a new window.
  std::map<SliceId, SwitchSliceCounters> take_window() { return std::exchange(window_, {}); }

 private:
  NodeId id_;
  int radix_;
  std::set<PermitKey> lut_;
  std::vector<int> rr_;  // indexed by output port, holds the next preferred input
  std::map<SliceId, SwitchSliceCounters> counters_;
  std::map<SliceId, SwitchSliceCounters> window_;
};

}  // namespace opsquare
