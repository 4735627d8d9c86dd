#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "opsquare/event_queue.hpp"
#include "opsquare/fabric.hpp"

namespace opsquare {
namespace {

Frame frame(std::uint32_t bytes, SimTime created = SimTime{0}) { return Frame{bytes, created, true}; }

TorLutOp route(SliceId slice, int dst, Uplink u, int priority) {
  TorLutOp op;
  op.slice = slice;
  op.dst_tor = dst;
  op.uplink = u;
  op.priority = priority;
  return op;
}

void permit(OpticalSwitch& sw, SliceId slice, int in, int out) {
  const SwitchLutOp op{FlowCommand::Add, PermitKey{slice, in, out, 0}};
  sw.update_lut(std::span<const SwitchLutOp>(&op, 1));
}

void set_route(TorNode& t, const TorLutOp& op) { t.update_lut(std::span<const TorLutOp>(&op, 1)); }

Label label(NodeId sw, int in, int out, int priority, SliceId slice, std::uint64_t id) {
  Label l;
  l.sw = sw;
  l.input_port = in;
  l.requested_output_port = out;
  l.priority = priority;
  l.slice = slice;
  l.packet_id = id;
  return l;
}

class TorTest : public ::testing::Test {
 protected:
  TopologyGraph topo{TopologyConfig{}};
  TorParams params{4, 1536, SimTime{0}};
};

TEST(EventQueueTest, OrdersByTimeThenInsertion) {
  EventQueue<int> q;
  q.push(SimTime{30}, 1);
  q.push(SimTime{10}, 2);
  q.push(SimTime{30}, 3);
  q.push(SimTime{10}, 4);
  std::vector<int> order;
  SimTime last{0};
  while (!q.empty()) {
    auto e = q.pop();
    EXPECT_GE(e.time, last);
    last = e.time;
    order.push_back(e.event);
  }
  EXPECT_EQ(order, (std::vector<int>{2, 4, 1, 3}));
  EXPECT_THROW(q.push(SimTime{5}, 9), std::logic_error);
}

TEST(EventQueueTest, RandomisedNondecreasingAndStable) {
  EventQueue<std::pair<std::int64_t, int>> q;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    const std::int64_t t = static_cast<std::int64_t>(rng() % 50);
    q.push(SimTime{t}, {t, i});
  }
  std::pair<std::int64_t, int> prev{-1, -1};
  while (!q.empty()) {
    const auto e = q.pop().event;
    ASSERT_TRUE(e.first > prev.first || (e.first == prev.first && e.second > prev.second));
    prev = e;
  }
}

TEST_F(TorTest, MaximumFrameEnqueuedInEmptyQueue) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  EXPECT_EQ(t.aggregate_frame(frame(1518), 1, 2, 0), TorNode::Admission::Enqueued);
  EXPECT_EQ(t.frames_in({1, 2, Uplink::IS}), 1u);
  EXPECT_EQ(t.occupancy({1, 2, Uplink::IS}), 1u);
}

TEST_F(TorTest, FullQueueDropsAndCounts) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  for (int i = 0; i < 4; ++i) ASSERT_EQ(t.aggregate_frame(frame(1518), 1, 2, 0), TorNode::Admission::Enqueued);
  EXPECT_EQ(t.aggregate_frame(frame(1518), 1, 2, 0), TorNode::Admission::Dropped);
  EXPECT_EQ(t.cumulative().at(1).lost_buffer_overflow, 1u);
  EXPECT_EQ(t.occupancy({1, 2, Uplink::IS}), 4u);
}

TEST_F(TorTest, FramesAggregateUpToPayloadCapacity) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  for (int i = 0; i < 3; ++i) t.aggregate_frame(frame(500), 1, 2, 0);
  EXPECT_EQ(t.occupancy({1, 2, Uplink::IS}), 1u);
  EXPECT_EQ(t.frames_in({1, 2, Uplink::IS}), 3u);
  t.aggregate_frame(frame(500), 1, 2, 0);
  EXPECT_EQ(t.occupancy({1, 2, Uplink::IS}), 2u);
}

TEST_F(TorTest, DifferentDestinationsUseDifferentVoqs) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  t.aggregate_frame(frame(100), 1, 2, 0);
  t.aggregate_frame(frame(100), 1, 8, 0);
  EXPECT_EQ(t.frames_in({1, 2, Uplink::IS}), 1u);
  EXPECT_EQ(t.frames_in({1, 8, Uplink::ES}), 1u);
  const auto keys = t.voq_keys();
  EXPECT_EQ(keys.size(), 2u);
}

TEST_F(TorTest, OneVoqEmitsOneLabelWithItsPortRequest) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  t.aggregate_frame(frame(1518), 1, 3, 0);
  const auto labels = t.emit_labels(0);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0].sw, NodeId::is(1));
  EXPECT_EQ(labels[0].input_port, 1);
  EXPECT_EQ(labels[0].requested_output_port, 3);
}

TEST_F(TorTest, OpenPacketWaitsForTimeout) {
  TorParams p = params;
  p.aggregation_hold = from_ns(1280.0);
  TorNode t(topo, NodeId::tor(1, 1), p);
  t.aggregate_frame(frame(100), 1, 3, 0);
  t.close_expired(SimTime{0});
  EXPECT_TRUE(t.emit_labels(0).empty());
  t.close_expired(from_ns(1280.0));
  EXPECT_EQ(t.emit_labels(1).size(), 1u);
}

TEST_F(TorTest, HighestPriorityVoqWinsEveryPair) {
  for (int pa = 1; pa <= 4; ++pa) {
    for (int pb = 1; pb <= 4; ++pb) {
      TorNode t(topo, NodeId::tor(1, 1), params);
      set_route(t, route(1, 2, Uplink::IS, pa));
      set_route(t, route(2, 3, Uplink::IS, pb));
      t.aggregate_frame(frame(1518), 1, 2, 0);
      t.aggregate_frame(frame(1518), 2, 3, 0);
      const auto labels = t.emit_labels(0);
      ASSERT_EQ(labels.size(), 1u);
      EXPECT_EQ(labels[0].priority, std::min(pa, pb));
      if (pa < pb) { EXPECT_EQ(labels[0].slice, 1u); }
      if (pb < pa) { EXPECT_EQ(labels[0].slice, 2u); }
    }
  }
}

TEST_F(TorTest, EqualPriorityVoqsAlternate) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  for (int i = 0; i < 2; ++i) {
    t.aggregate_frame(frame(1518), 1, 2, 0);
    t.aggregate_frame(frame(1518), 1, 3, 0);
  }
  std::vector<int> served;
  for (std::uint64_t slot = 0; slot < 4; ++slot) {
    const auto labels = t.emit_labels(slot);
    ASSERT_EQ(labels.size(), 1u);
    served.push_back(labels[0].requested_output_port);
    t.apply_flow_control({labels[0].packet_id, Verdict::Ack, labels[0].requested_output_port});
  }
  EXPECT_EQ(served, (std::vector<int>{2, 3, 2, 3}));
}

TEST_F(TorTest, BothUplinksEmitInTheSameSlot) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  t.aggregate_frame(frame(1518), 1, 2, 0);
  t.aggregate_frame(frame(1518), 1, 8, 0);
  const auto labels = t.emit_labels(0);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].sw, NodeId::is(1));
  EXPECT_EQ(labels[1].sw, NodeId::es(1));
  EXPECT_EQ(labels[1].requested_output_port, 2);
}

TEST_F(TorTest, FlowControlOutcomes) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  t.aggregate_frame(frame(1518), 1, 2, 0);
  t.aggregate_frame(frame(1518), 1, 2, 0);
  auto l = t.emit_labels(0).at(0);
  auto out = t.apply_flow_control({l.packet_id, Verdict::NackContention, 0});
  EXPECT_FALSE(out.released);
  EXPECT_EQ(t.occupancy({1, 2, Uplink::IS}), 2u);
  EXPECT_EQ(t.cumulative().at(1).nack_received, 1u);

  l = t.emit_labels(1).at(0);
  out = t.apply_flow_control({l.packet_id, Verdict::Ack, 2});
  ASSERT_TRUE(out.released);
  EXPECT_EQ(t.occupancy({1, 2, Uplink::IS}), 1u);

  l = t.emit_labels(2).at(0);
  out = t.apply_flow_control({l.packet_id, Verdict::NackNoRoute, 0});
  ASSERT_TRUE(out.dropped);
  EXPECT_EQ(t.cumulative().at(1).lost_no_route, 1u);
  EXPECT_TRUE(t.idle());
  EXPECT_THROW(t.apply_flow_control({12345, Verdict::Ack, 2}), ProtocolViolation);
}

TEST_F(TorTest, LutRejectsInvalidEntriesWithoutPartialUpdate) {
  TorNode t(topo, NodeId::tor(1, 1), params);
  std::vector<TorLutOp> ops{route(1, 2, Uplink::IS, 1), route(1, 1, Uplink::IS, 1)};
  EXPECT_THROW(t.update_lut(ops), InvalidPortError);
  EXPECT_TRUE(t.lut().empty());
  EXPECT_THROW(set_route(t, route(1, 9, Uplink::IS, 1)), InvalidPortError);
  EXPECT_THROW(set_route(t, route(1, 5, Uplink::IS, 1)), InvalidPortError);
  EXPECT_THROW(set_route(t, route(1, 2, Uplink::ES, 1)), InvalidPortError);
}

TEST(OpticalSwitchTest, HighestPriorityWinsOutput) {
  OpticalSwitch sw(NodeId::is(2), 4);
  for (int in : {1, 3, 4}) permit(sw, static_cast<SliceId>(in), in, 2);
  const std::vector<Label> labels{label(NodeId::is(2), 1, 2, 1, 1, 11), label(NodeId::is(2), 3, 2, 2, 3, 12),
                                  label(NodeId::is(2), 4, 2, 4, 4, 13)};
  const auto v = sw.resolve_contention(labels);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].verdict, Verdict::Ack);
  EXPECT_EQ(v[0].output_port, 2);
  EXPECT_EQ(v[1].verdict, Verdict::NackContention);
  EXPECT_EQ(v[2].verdict, Verdict::NackContention);
}

TEST(OpticalSwitchTest, SinglePermittedLabelIsAcked) {
  OpticalSwitch sw(NodeId::is(1), 4);
  permit(sw, 1, 1, 2);
  const std::vector<Label> labels{label(NodeId::is(1), 1, 2, 3, 1, 1)};
  EXPECT_EQ(sw.resolve_contention(labels)[0].verdict, Verdict::Ack);
}

TEST(OpticalSwitchTest, EqualPriorityFollowsPointer) {
  OpticalSwitch sw(NodeId::is(1), 4);
  permit(sw, 1, 1, 3);
  permit(sw, 1, 2, 3);
  std::vector<Label> first{label(NodeId::is(1), 1, 3, 2, 1, 1)};
  sw.resolve_contention(first);
  ASSERT_EQ(sw.rr_pointer(3), 2);
  std::vector<Label> both{label(NodeId::is(1), 1, 3, 2, 1, 2), label(NodeId::is(1), 2, 3, 2, 1, 3)};
  auto v = sw.resolve_contention(both);
  EXPECT_EQ(v[1].verdict, Verdict::Ack);
  EXPECT_EQ(v[0].verdict, Verdict::NackContention);
  v = sw.resolve_contention(both);
  EXPECT_EQ(v[0].verdict, Verdict::Ack);
  EXPECT_EQ(v[1].verdict, Verdict::NackContention);
}

TEST(OpticalSwitchTest, MissingPermitIsNoRoute) {
  OpticalSwitch sw(NodeId::is(1), 4);
  permit(sw, 1, 1, 2);
  const std::vector<Label> labels{label(NodeId::is(1), 3, 2, 1, 2, 7), label(NodeId::is(1), 1, 2, 4, 1, 8)};
  const auto v = sw.resolve_contention(labels);
  EXPECT_EQ(v[0].verdict, Verdict::NackNoRoute);
  EXPECT_EQ(v[1].verdict, Verdict::Ack);
}

TEST(OpticalSwitchTest, TwoLabelsOnOneInputIsAViolation) {
  OpticalSwitch sw(NodeId::is(1), 4);
  const std::vector<Label> labels{label(NodeId::is(1), 1, 2, 1, 1, 1), label(NodeId::is(1), 1, 3, 1, 1, 2)};
  EXPECT_THROW(sw.resolve_contention(labels), ProtocolViolation);
}

TEST(OpticalSwitchTest, LutUpdateIsAtomic) {
  OpticalSwitch sw(NodeId::es(1), 2);
  const std::vector<SwitchLutOp> ops{{FlowCommand::Add, {1, 1, 2, 0}}, {FlowCommand::Add, {1, 1, 3, 0}}};
  EXPECT_THROW(sw.update_lut(ops), InvalidPortError);
  EXPECT_TRUE(sw.lut().empty());
}

TEST(OpticalSwitchTest, AddThenDeletePermit) {
  OpticalSwitch sw(NodeId::is(2), 4);
  const std::vector<Label> labels{label(NodeId::is(2), 1, 2, 1, 1, 1)};
  EXPECT_EQ(sw.resolve_contention(labels)[0].verdict, Verdict::NackNoRoute);
  permit(sw, 1, 1, 2);
  EXPECT_EQ(sw.resolve_contention(labels)[0].verdict, Verdict::Ack);
  sw.remove_slice(1);
  EXPECT_EQ(sw.resolve_contention(labels)[0].verdict, Verdict::NackNoRoute);
}

// Brute force: for random label sets, an ACKed label's priority never exceeds
// any contention-NACKed label's priority at the same output, and each
// output with permitted labels grants exactly one.
TEST(OpticalSwitchTest, PriorityDominanceRandomised) {
  std::mt19937_64 rng(3);
  OpticalSwitch sw(NodeId::is(1), 8);
  for (int in = 1; in <= 8; ++in)
    for (int out = 1; out <= 8; ++out)
      if ((in + out) % 5 != 0) permit(sw, 1, in, out);
  for (int round = 0; round < 2000; ++round) {
    std::vector<Label> labels;
    for (int in = 1; in <= 8; ++in) {
      if (rng() % 3 == 0) continue;
      labels.push_back(label(NodeId::is(1), in, 1 + static_cast<int>(rng() % 8), 1 + static_cast<int>(rng() % 4), 1,
                             static_cast<std::uint64_t>(round * 16 + in)));
    }
    const auto v = sw.resolve_contention(labels);
    ASSERT_EQ(v.size(), labels.size());
    std::map<int, int> acked, grants;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool permitted = (labels[i].input_port + labels[i].requested_output_port) % 5 != 0;
      ASSERT_EQ(v[i].verdict == Verdict::NackNoRoute, !permitted);
      if (v[i].verdict == Verdict::Ack) {
        acked[labels[i].requested_output_port] = labels[i].priority;
        ++grants[labels[i].requested_output_port];
      }
    }
    for (const auto& [out, n] : grants) ASSERT_EQ(n, 1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (v[i].verdict != Verdict::NackContention) continue;
      ASSERT_TRUE(acked.contains(labels[i].requested_output_port));
      ASSERT_LE(acked[labels[i].requested_output_port], labels[i].priority);
    }
  }
}

// Two inputs contending every slot: the running grant difference stays in
// a band of width one, so any window differs by at most one.
TEST(OpticalSwitchTest, RoundRobinFairnessOverLongRun) {
  OpticalSwitch sw(NodeId::is(1), 4);
  permit(sw, 1, 1, 4);
  permit(sw, 1, 3, 4);
  long diff = 0, lo = 0, hi = 0;
  for (std::uint64_t k = 0; k < 20000; ++k) {
    const std::vector<Label> labels{label(NodeId::is(1), 1, 4, 2, 1, 2 * k), label(NodeId::is(1), 3, 4, 2, 1, 2 * k + 1)};
    const auto v = sw.resolve_contention(labels);
    diff += v[0].verdict == Verdict::Ack ? 1 : -1;
    lo = std::min(lo, diff);
    hi = std::max(hi, diff);
  }
  EXPECT_LE(hi - lo, 1);
}

class FabricTest : public ::testing::Test {
 protected:
  TopologyGraph topo{TopologyConfig{}};

  struct Delivery {
    SliceId slice;
    SimTime created;
    SimTime at;
  };

  void watch(Fabric& f) {
    FabricObserver obs;
    obs.delivered = [this](SliceId s, const Frame& fr, SimTime at, int) { deliveries.push_back({s, fr.created, at}); };
    obs.arbitration = [this](SimTime at, const OpticalSwitch& sw, std::span<const Label> l,
                             std::span<const FlowControlSignal> v) {
      labels += l.size();
      verdicts += v.size();
      for (std::size_t i = 0; i < l.size(); ++i) seen.push_back({at, sw.id(), l[i], v[i]});
    };
    f.set_observer(std::move(obs));
  }

  void run(Fabric& f, std::uint64_t slots) {
    for (std::uint64_t k = 0; k < slots; ++k) {
      f.advance_to(f.slot_duration() * static_cast<std::int64_t>(k));
      f.run_slot(k);
      ASSERT_TRUE(f.totals().conserved());
    }
    f.advance_to(f.slot_duration() * static_cast<std::int64_t>(slots));
  }

  struct Seen {
    SimTime at;
    NodeId sw;
    Label label;
    FlowControlSignal verdict;
  };
  std::vector<Delivery> deliveries;
  std::vector<Seen> seen;
  std::uint64_t labels = 0, verdicts = 0;
};

TEST_F(FabricTest, UncontendedSingleHopLatencyFloor) {
  Fabric f(topo, DataPlaneParams{});
  watch(f);
  permit(f.optical_switch(NodeId::is(1)), 1, 1, 2);
  f.inject_frame(1, 1, 2, frame(1518), 0);
  run(f, 2);
  ASSERT_EQ(deliveries.size(), 1u);
  EXPECT_EQ(deliveries[0].at - deliveries[0].created, from_ns(303.5));
  EXPECT_EQ(f.hop_latency(), from_ns(140.0 + 163.5));
}

TEST_F(FabricTest, ZeroDelayFabricAddsOnlySlotAlignment) {
  TopologyConfig cfg;
  cfg.fiber_length_m = 0.0;
  cfg.tx_rx_processing_ns = 0.0;
  TopologyGraph g(cfg);
  Fabric f(g, DataPlaneParams{});
  watch(f);
  permit(f.optical_switch(NodeId::is(1)), 1, 1, 2);
  f.advance_to(from_ns(100.0));
  f.inject_frame(1, 1, 2, frame(1518, from_ns(100.0)), 0);
  f.advance_to(f.slot_duration());
  f.run_slot(1);
  f.advance_to(f.slot_duration() * 2);
  ASSERT_EQ(deliveries.size(), 1u);
  EXPECT_EQ(deliveries[0].at - deliveries[0].created, from_ns(1180.0));
}

TEST_F(FabricTest, ThreeContentionNacksDelayDeliveryByThreeSlots) {
  Fabric f(topo, DataPlaneParams{});
  watch(f);
  permit(f.optical_switch(NodeId::is(1)), 1, 1, 2);
  permit(f.optical_switch(NodeId::is(1)), 2, 3, 2);
  set_route(f.tor(1), route(1, 2, Uplink::IS, 4));
  set_route(f.tor(3), route(2, 2, Uplink::IS, 1));
  f.inject_frame(1, 1, 2, frame(1518), 0);
  for (int i = 0; i < 3; ++i) f.inject_frame(3, 2, 2, frame(1518), 0);
  run(f, 6);
  const auto low = std::find_if(deliveries.begin(), deliveries.end(), [](const Delivery& d) { return d.slice == 1; });
  ASSERT_NE(low, deliveries.end());
  EXPECT_EQ(low->at, f.slot_duration() * 3 + from_ns(303.5));
  EXPECT_GE(low->at - low->created, from_ns(303.5) + f.slot_duration());
  EXPECT_EQ(f.tor(1).cumulative().at(1).nack_received, 3u);
  EXPECT_EQ(labels, verdicts);
}

TEST_F(FabricTest, NoRouteDropsFramesAtTheTor) {
  Fabric f(topo, DataPlaneParams{});
  watch(f);
  f.inject_frame(1, 1, 2, frame(600), 0);
  f.inject_frame(1, 1, 2, frame(600), 0);
  run(f, 2);
  EXPECT_EQ(f.totals().lost_no_route, 2u);
  EXPECT_EQ(f.tor(1).cumulative().at(1).lost_no_route, 2u);
  EXPECT_TRUE(deliveries.empty());
}

TEST_F(FabricTest, TwoHopRelayRequeuesWithNextLabel) {
  Fabric f(topo, DataPlaneParams{});
  watch(f);
  set_route(f.tor(1), route(1, 8, Uplink::ES, 1));
  set_route(f.tor(5), route(1, 8, Uplink::IS, 1));
  permit(f.optical_switch(NodeId::es(1)), 1, 1, 2);
  permit(f.optical_switch(NodeId::is(2)), 1, 1, 4);
  f.inject_frame(1, 1, 8, frame(1518), 0);
  run(f, 3);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].sw, NodeId::es(1));
  EXPECT_EQ(seen[0].label.requested_output_port, 2);
  EXPECT_EQ(seen[1].sw, NodeId::is(2));
  EXPECT_EQ(seen[1].label.input_port, 1);
  EXPECT_EQ(seen[1].label.requested_output_port, 4);
  ASSERT_EQ(deliveries.size(), 1u);
  EXPECT_EQ(deliveries[0].at, f.slot_duration() + from_ns(303.5));
}

TEST_F(FabricTest, PermitAddedBetweenSlotsUnblocksTraffic) {
  Fabric f(topo, DataPlaneParams{});
  watch(f);
  f.inject_frame(1, 1, 2, frame(1518), 0);
  run(f, 1);
  EXPECT_EQ(f.totals().lost_no_route, 1u);
  permit(f.optical_switch(NodeId::is(1)), 1, 1, 2);
  f.inject_frame(1, 1, 2, frame(1518, f.slot_duration()), 0);
  for (std::uint64_t k = 1; k < 3; ++k) {
    f.advance_to(f.slot_duration() * static_cast<std::int64_t>(k));
    f.run_slot(k);
  }
  f.advance_to(f.slot_duration() * 3);
  EXPECT_EQ(deliveries.size(), 1u);
}

struct Workload {
  FabricTotals totals;
  std::vector<double> latencies;
  std::uint64_t labels = 0, verdicts = 0, inversions = 0;
};

// Random all-to-all traffic over fully permitted, default-routed slices.
Workload random_workload(std::uint64_t seed, double load, std::size_t buffer) {
  TopologyGraph topo{TopologyConfig{}};
  DataPlaneParams dp;
  dp.buffer_capacity_packets = buffer;
  Fabric f(topo, dp);
  Workload w;
  FabricObserver obs;
  obs.delivered = [&](SliceId, const Frame& fr, SimTime at, int) { w.latencies.push_back(to_ns(at - fr.created)); };
  obs.arbitration = [&](SimTime, const OpticalSwitch&, std::span<const Label> l, std::span<const FlowControlSignal> v) {
    w.labels += l.size();
    w.verdicts += v.size();
    std::map<int, int> win;
    for (std::size_t i = 0; i < l.size(); ++i)
      if (v[i].verdict == Verdict::Ack) win[v[i].output_port] = l[i].priority;
    for (std::size_t i = 0; i < l.size(); ++i)
      if (v[i].verdict == Verdict::NackContention && win.at(l[i].requested_output_port) > l[i].priority)
        ++w.inversions;
  };
  f.set_observer(std::move(obs));
  for (auto& sw : f.switches())
    for (int in = 1; in <= sw.radix(); ++in)
      for (int out = 1; out <= sw.radix(); ++out)
        for (SliceId s = 1; s <= 4; ++s) permit(sw, s, in, out);
  for (int t = 1; t <= 8; ++t) {
    std::vector<int> dests;
    for (int d = 1; d <= 8; ++d)
      if (topo.tor_from_index(d).cluster == topo.tor_from_index(t).cluster || topo.tor_from_index(d).rack == topo.tor_from_index(t).rack)
        if (d != t) dests.push_back(d);
    const SliceId s = static_cast<SliceId>(1 + (t - 1) % 4);
    for (int d : dests) set_route(f.tor(t), route(s, d, topo.default_uplink(topo.tor_from_index(t), topo.tor_from_index(d)), static_cast<int>(s)));
    TrafficProfile p;
    p.load = load;
    p.destinations = dests;
    f.attach_source(s, TrafficSource(t, p, 10e9, seed, static_cast<std::uint64_t>(t), SimTime{0}), from_us(500.0));
  }
  for (std::uint64_t k = 0;; ++k) {
    const SimTime now = f.slot_duration() * static_cast<std::int64_t>(k);
    f.advance_to(now);
    f.run_slot(k);
    if (!f.totals().conserved()) throw std::runtime_error("conservation");
    if (now > from_us(500.0) && f.quiescent() && !f.has_pending_events()) break;
  }
  w.totals = f.totals();
  return w;
}

TEST(FabricProperties, ConservationNoSwitchLossAndDominance) {
  const auto w = random_workload(11, 0.9, 4);
  EXPECT_TRUE(w.totals.conserved());
  EXPECT_GT(w.totals.generated, 1000u);
  EXPECT_EQ(w.totals.in_buffers + w.totals.in_flight, 0u);
  EXPECT_EQ(w.totals.generated, w.totals.delivered + w.totals.lost_buffer_overflow + w.totals.lost_no_route);
  EXPECT_EQ(w.totals.lost_no_route, 0u);
  EXPECT_EQ(w.labels, w.verdicts);
  EXPECT_EQ(w.inversions, 0u);
  for (double l : w.latencies) ASSERT_GE(l, 303.5);
}

TEST(FabricProperties, DeterministicForFixedSeed) {
  const auto a = random_workload(5, 0.7, 8);
  const auto b = random_workload(5, 0.7, 8);
  const auto c = random_workload(6, 0.7, 8);
  EXPECT_EQ(a.totals.generated, b.totals.generated);
  EXPECT_EQ(a.totals.delivered, b.totals.delivered);
  EXPECT_EQ(a.latencies, b.latencies);
  EXPECT_NE(a.latencies, c.latencies);
}

}  // namespace
}  // namespace opsquare
