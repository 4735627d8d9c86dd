#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "opsquare/ofproto/codec.hpp"
#include "opsquare/time.hpp"

namespace opsquare::ofproto {

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Envelope {
  SimTime deliver_at{0};
  std::vector<std::uint8_t> bytes;
};

// Reliable, in-order, constant-latency byte channel between the controller
// and one device agent. Each direction is a FIFO of encoded messages.
class Session {
 public:
  explicit Session(std::string peer, SimTime latency = SimTime{0}) : peer_(std::move(peer)), latency_(latency) {
    if (latency.count() < 0) throw std::invalid_argument("session latency must be nonnegative");
  }

  const std::string& peer() const { return peer_; }
  SimTime latency() const { return latency_; }
  bool open() const { return open_; }
  void close() { open_ = false; }

  void send_to_agent(SimTime now, const OFMessage& m) { push(to_agent_, now, m); }
  void send_to_controller(SimTime now, const OFMessage& m) { push(to_controller_, now, m); }

  // Messages whose delivery time is <= now, in send order.
  std::vector<std::pair<SimTime, OFMessage>> receive_at_agent(SimTime now) { return pop(to_agent_, now); }
  std::vector<std::pair<SimTime, OFMessage>> receive_at_controller(SimTime now) { return pop(to_controller_, now); }

  bool idle() const { return to_agent_.empty() && to_controller_.empty(); }
  SimTime next_delivery() const {
    SimTime t = SimTime::max();
    if (!to_agent_.empty()) t = std::min(t, to_agent_.front().deliver_at);
    if (!to_controller_.empty()) t = std::min(t, to_controller_.front().deliver_at);
    return t;
  }

 private:
  void push(std::deque<Envelope>& q, SimTime now, const OFMessage& m) {
    if (!open_) throw SessionError("session to " + peer_ + " is closed");
    SimTime at = now + latency_;
    // In-order delivery even if a caller sends with an earlier timestamp.
    if (!q.empty() && q.back().deliver_at > at) at = q.back().deliver_at;
    q.push_back(Envelope{at, encode(m)});
  }

  std::vector<std::pair<SimTime, OFMessage>> pop(std::deque<Envelope>& q, SimTime now) {
    if (!open_ && !q.empty()) throw SessionError("session to " + peer_ + " is closed");
    std::vector<std::pair<SimTime, OFMessage>> out;
    while (!q.empty() && q.front().deliver_at <= now) {
      out.emplace_back(q.front().deliver_at, decode(q.front().bytes));
      q.pop_front();
    }
    return out;
  }

  std::string peer_;
  SimTime latency_;
  bool open_ = true;
  std::deque<Envelope> to_agent_;
  std::deque<Envelope> to_controller_;
};

}  // namespace opsquare::ofproto
