#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "opsquare/time.hpp"

namespace opsquare {

// Min-heap of timed events. Equal-time events dequeue in insertion order.
template <typename Event>
class EventQueue {
 public:
  struct Entry {
    SimTime time;
    std::uint64_t seq;
    Event event;
  };

  void push(SimTime time, Event ev) {
    if (time < now_) throw std::logic_error("event scheduled in the past");
    heap_.push(Entry{time, next_seq_++, std::move(ev)});
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  SimTime next_time() const { return heap_.top().time; }
  SimTime now() const { return now_; }

  Entry pop() {
    // priority_queue::top is const; the moved-from entry is discarded by pop().
    Entry e = std::move(const_cast<Entry&>(heap_.top()));
    heap_.pop();
    now_ = e.time;
    return e;
  }

  void advance_to(SimTime t) {
    if (t < now_) throw std::logic_error("clock moved backwards");
    now_ = t;
  }

 private:
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  SimTime now_{0};
};

}  // namespace opsquare
