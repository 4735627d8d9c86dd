#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "opsquare/ofproto/agent.hpp"
#include "opsquare/ofproto/codec.hpp"
#include "opsquare/ofproto/session.hpp"

namespace opsquare::ofproto {
namespace {

using Bytes = std::vector<std::uint8_t>;

OFMessage random_message(std::mt19937_64& rng) {
  auto u = [&](std::uint64_t n) { return rng() % n; };
  OFMessage m;
  m.xid = static_cast<std::uint32_t>(rng());
  switch (u(6)) {
    case 0: m.body = FeatureReq{}; break;
    case 1: {
      FeatureRep r;
      r.datapath_id = rng();
      r.device_kind = static_cast<DeviceKind>(u(3));
      r.n_ports = static_cast<std::uint16_t>(rng());
      r.capabilities = static_cast<std::uint32_t>(rng());
      m.body = r;
      break;
    }
    case 2: {
      FlowMod f;
      f.command = static_cast<FlowCommand>(u(3));
      f.match = {static_cast<std::uint16_t>(rng()), static_cast<std::uint32_t>(rng()), static_cast<std::uint16_t>(rng())};
      if (u(2)) f.instructions.emplace_back(Output{static_cast<std::uint16_t>(rng())});
      if (u(2)) f.instructions.emplace_back(SetPriority{static_cast<std::uint8_t>(1 + u(4))});
      if (u(2)) f.instructions.emplace_back(SetWeight{static_cast<std::uint16_t>(1 + u(1000))});
      std::shuffle(f.instructions.begin(), f.instructions.end(), rng);
      m.body = f;
      break;
    }
    case 3: m.body = StatsReq{}; break;
    case 4: {
      StatsRep r;
      const auto n = u(5);
      for (std::uint64_t i = 0; i < n; ++i) {
        StatsRecord s;
        s.slice_id = static_cast<std::uint32_t>(rng());
        s.lost_packets = rng();
        s.retransmitted_packets = rng();
        s.packets_sent = rng();
        s.delivered = rng();
        s.mean_latency_ns = std::uniform_real_distribution<double>(0.0, 1e9)(rng);
        s.window_ns = rng();
        r.records.push_back(s);
      }
      m.body = r;
      break;
    }
    default: m.body = ErrorMsg{u(2) ? ErrorCode::BadPort : ErrorCode::BadRequest}; break;
  }
  return m;
}

DecodeErrc decode_error(const Bytes& b) {
  try {
    decode(b);
  } catch (const DecodeError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode accepted the input";
  return DecodeErrc::BadField;
}

TEST(Codec, FeatureReqHeaderOnly) {
  EXPECT_EQ(encode(OFMessage{7, FeatureReq{}}), (Bytes{0x01, 0x01, 0x00, 0x08, 0x00, 0x00, 0x00, 0x07}));
}

TEST(Codec, FeatureRepGoldenBytes) {
  const Bytes golden{0x01, 0x02, 0x00, 0x17, 0x00, 0x00, 0x00, 0x01,  // header
                     0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01,  // datapath id of ES1
                     0x02,                                            // ES
                     0x00, 0x02,                                      // two ports
                     0x00, 0x00, 0x00, 0x01};                         // optical fast switching
  const OFMessage m{1, FeatureRep{datapath_id(NodeId::es(1)), DeviceKind::ES, 2, kCapOpticalFastSwitching}};
  EXPECT_EQ(encode(m), golden);
  EXPECT_EQ(decode(golden), m);
}

TEST(Codec, FlowModWithWavelengthGoldenBytes) {
  const Bytes golden{0x01, 0x03, 0x00, 0x17, 0x00, 0x00, 0x00, 0x2A,  // header
                     0x00,                                            // ADD
                     0x00, 0x02,                                      // in_port
                     0x00, 0x00, 0x00, 0x01,                          // optical flow (slice) 1
                     0x00, 0x05,                                      // wavelength
                     0x02,                                            // two instructions
                     0x00, 0x00, 0x03,                                // OUTPUT 3
                     0x01, 0x01};                                     // SET_PRIORITY 1
  FlowMod fm;
  fm.command = FlowCommand::Add;
  fm.match = {2, 1, 5};
  fm.instructions = {Output{3}, SetPriority{1}};
  const OFMessage m{42, fm};
  EXPECT_EQ(encode(m), golden);
  EXPECT_EQ(decode(golden), m);
  EXPECT_EQ(dump(decode(golden)), "FlowMod xid=42 cmd=ADD in_port=2 flow=1 lambda=5 OUTPUT:3 SET_PRIORITY:1");
  Bytes trailing = golden;
  trailing.push_back(0x00);
  EXPECT_EQ(decode_error(trailing), DecodeErrc::LengthMismatch);
}

TEST(Codec, RoundTripRandomMessages) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const auto m = random_message(rng);
    const auto bytes = encode(m);
    ASSERT_EQ(bytes.size(), (std::size_t(bytes[2]) << 8 | bytes[3]));
    ASSERT_EQ(decode(bytes), m) << dump(m);
    ASSERT_EQ(encode(decode(bytes)), bytes);
  }
}

TEST(Codec, DistinctDecodeErrors) {
  EXPECT_EQ(decode_error(Bytes{0x01, 0x01, 0x00, 0x08, 0x00}), DecodeErrc::Truncated);
  EXPECT_EQ(decode_error(Bytes{0x02, 0x01, 0x00, 0x08, 0, 0, 0, 1}), DecodeErrc::UnsupportedVersion);
  EXPECT_EQ(decode_error(Bytes{0x01, 0x09, 0x00, 0x08, 0, 0, 0, 1}), DecodeErrc::UnknownType);
  EXPECT_EQ(decode_error(Bytes{0x01, 0x01, 0x00, 0x09, 0, 0, 0, 1}), DecodeErrc::Truncated);
  EXPECT_EQ(decode_error(Bytes{0x01, 0x01, 0x00, 0x07, 0, 0, 0, 1}), DecodeErrc::LengthMismatch);
  EXPECT_EQ(decode_error(Bytes{0x01, 0x06, 0x00, 0x0A, 0, 0, 0, 1, 0, 9}), DecodeErrc::BadField);
  auto rep = encode(OFMessage{1, FeatureRep{}});
  rep.pop_back();
  rep[3] = static_cast<std::uint8_t>(rep.size());
  EXPECT_EQ(decode_error(rep), DecodeErrc::Truncated);
}

TEST(Codec, EncoderRejectsInvalidFields) {
  FlowMod fm;
  fm.instructions = {SetPriority{5}};
  EXPECT_THROW(encode(OFMessage{1, fm}), EncodeError);
  fm.instructions = {Output{1}, Output{2}};
  EXPECT_THROW(encode(OFMessage{1, fm}), EncodeError);
  StatsRep big;
  big.records.resize(2000);
  EXPECT_THROW(encode(OFMessage{1, big}), EncodeError);
}

// Truncations, byte flips and random noise either decode or raise DecodeError.
TEST(Codec, DecoderIsTotal) {
  std::mt19937_64 rng(99);
  int decoded = 0, rejected = 0;
  auto attempt = [&](const Bytes& b) {
    try {
      decode(b);
      ++decoded;
    } catch (const DecodeError&) {
      ++rejected;
    }
  };
  for (int i = 0; i < 5000; ++i) {
    const auto bytes = encode(random_message(rng));
    attempt(Bytes(bytes.begin(), bytes.begin() + static_cast<long>(rng() % bytes.size())));
    Bytes flipped = bytes;
    flipped[rng() % flipped.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    attempt(flipped);
    Bytes noise(rng() % 64);
    for (auto& x : noise) x = static_cast<std::uint8_t>(rng());
    attempt(noise);
  }
  EXPECT_GT(decoded, 0);
  EXPECT_GT(rejected, 0);
}

class AgentTest : public ::testing::Test {
 protected:
  TopologyGraph topo{TopologyConfig{}};
  OpticalSwitch is2{NodeId::is(2), 4};
  TorNode tor1{topo, NodeId::tor(1, 1), TorParams{1, 1536, SimTime{0}}};
};

TEST_F(AgentTest, FeatureRepDescribesSwitch) {
  DeviceAgent agent(topo, is2);
  const auto reply = agent.handle(OFMessage{5, FeatureReq{}}, SimTime{0});
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->xid, 5u);
  const auto& rep = std::get<FeatureRep>(reply->body);
  EXPECT_EQ(rep.device_kind, DeviceKind::IS);
  EXPECT_EQ(rep.n_ports, 4);
  EXPECT_EQ(rep.capabilities & kCapOpticalFastSwitching, kCapOpticalFastSwitching);
  EXPECT_EQ(DeviceAgent(topo, tor1).features().capabilities, 0u);
}

TEST_F(AgentTest, FlowModInstallsPermit) {
  DeviceAgent agent(topo, is2);
  FlowMod fm;
  fm.match = {2, 1, 0};
  fm.instructions = {Output{3}};
  EXPECT_FALSE(agent.handle(OFMessage{1, fm}, SimTime{0}));
  EXPECT_TRUE(is2.permits({1, 2, 3, 0}));
  Label l;
  l.sw = NodeId::is(2);
  l.input_port = 2;
  l.requested_output_port = 3;
  l.slice = 1;
  const std::vector<Label> labels{l};
  EXPECT_EQ(is2.resolve_contention(labels)[0].verdict, Verdict::Ack);
}

TEST_F(AgentTest, BadPortAndBadRequest) {
  DeviceAgent sw(topo, is2);
  FlowMod fm;
  fm.match = {2, 1, 0};
  fm.instructions = {Output{5}};
  auto reply = sw.handle(OFMessage{3, fm}, SimTime{0});
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->xid, 3u);
  EXPECT_EQ(std::get<ErrorMsg>(reply->body).code, ErrorCode::BadPort);
  EXPECT_TRUE(is2.lut().empty());

  fm.instructions = {SetPriority{1}};
  reply = sw.handle(OFMessage{4, fm}, SimTime{0});
  EXPECT_EQ(std::get<ErrorMsg>(reply->body).code, ErrorCode::BadRequest);

  DeviceAgent tor(topo, tor1);
  fm.match = {2, 1, 0};
  fm.instructions = {Output{3}};
  EXPECT_EQ(std::get<ErrorMsg>(tor.handle(OFMessage{5, fm}, SimTime{0})->body).code, ErrorCode::BadPort);
  fm.match = {1, 1, 0};
  fm.instructions = {Output{1}};
  EXPECT_EQ(std::get<ErrorMsg>(tor.handle(OFMessage{6, fm}, SimTime{0})->body).code, ErrorCode::BadPort);
}

TEST_F(AgentTest, StatsReportWindowLossesThenReset) {
  DeviceAgent agent(topo, tor1);
  Frame f{1518, SimTime{0}, true};
  tor1.aggregate_frame(f, 1, 2, 0);
  for (int i = 0; i < 8368; ++i) tor1.aggregate_frame(f, 1, 2, 0);
  auto reply = agent.handle(OFMessage{9, StatsReq{}}, from_ms(100.0));
  const auto& rep = std::get<StatsRep>(reply->body);
  ASSERT_EQ(rep.records.size(), 1u);
  EXPECT_EQ(rep.records[0].lost_packets, 8368u);
  EXPECT_EQ(rep.records[0].packets_sent, 8369u);
  EXPECT_EQ(rep.records[0].window_ns, 100'000'000u);
  reply = agent.handle(OFMessage{10, StatsReq{}}, from_ms(200.0));
  EXPECT_TRUE(std::get<StatsRep>(reply->body).records.empty());
}

// Windowed reports summed over consecutive reads equal the cumulative counters.
TEST_F(AgentTest, StatsWindowsPartitionCumulativeCounters) {
  TorNode t(topo, NodeId::tor(1, 1), TorParams{3, 1536, SimTime{0}});
  DeviceAgent agent(topo, t);
  std::mt19937_64 rng(1);
  std::map<SliceId, std::uint64_t> lost, retx, sent;
  auto read = [&](SimTime now) {
    const auto reply = agent.handle(OFMessage{1, StatsReq{}}, now);
    for (const auto& r : std::get<StatsRep>(reply->body).records) {
      lost[r.slice_id] += r.lost_packets;
      retx[r.slice_id] += r.retransmitted_packets;
      sent[r.slice_id] += r.packets_sent;
    }
  };
  for (int round = 0; round < 50; ++round) {
    for (int i = 0; i < 20; ++i)
      t.aggregate_frame(Frame{static_cast<std::uint32_t>(64 + rng() % 1455), SimTime{0}, true},
                        static_cast<SliceId>(1 + rng() % 2), 2 + static_cast<int>(rng() % 3), 0);
    t.close_expired(SimTime{0});
    for (const auto& l : t.emit_labels(static_cast<std::uint64_t>(round))) {
      const auto v = static_cast<Verdict>(rng() % 3);
      t.apply_flow_control({l.packet_id, v, l.requested_output_port});
    }
    if (round % 7 == 0) read(SimTime{round});
  }
  read(SimTime{100});
  for (const auto& [s, c] : t.cumulative()) {
    EXPECT_EQ(lost[s], c.lost());
    EXPECT_EQ(retx[s], c.nack_received);
    EXPECT_EQ(sent[s], c.frames_offered);
  }
}

TEST(SessionTest, ReplyCarriesRequestXid) {
  TopologyGraph topo{TopologyConfig{}};
  OpticalSwitch es1(NodeId::es(1), 2);
  Session s("ES1", from_us(5.0));
  AgentHost host(DeviceAgent(topo, es1), s, SimTime{0});
  s.send_to_agent(SimTime{0}, OFMessage{42, FeatureReq{}});
  host.step(from_us(4.0));
  EXPECT_TRUE(s.receive_at_controller(from_us(10.0)).empty());
  host.step(from_us(5.0));
  EXPECT_TRUE(s.receive_at_controller(from_us(9.0)).empty());
  const auto replies = s.receive_at_controller(from_us(10.0));
  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0].first, from_us(10.0));
  EXPECT_EQ(replies[0].second.xid, 42u);
}

TEST(SessionTest, FlowModsApplyInOrder) {
  TopologyGraph topo{TopologyConfig{}};
  OpticalSwitch is1(NodeId::is(1), 4);
  Session s("IS1");
  AgentHost host(DeviceAgent(topo, is1), s, from_ms(1.0));
  FlowMod add, del;
  add.match = {1, 1, 0};
  add.instructions = {Output{2}};
  del = add;
  del.command = FlowCommand::Delete;
  s.send_to_agent(SimTime{0}, OFMessage{1, add});
  s.send_to_agent(SimTime{0}, OFMessage{2, del});
  host.step(SimTime{0});
  EXPECT_TRUE(is1.lut().empty());
  host.step(from_ms(1.0));
  EXPECT_EQ(is1.lut().size(), 1u);
  host.step(from_ms(2.0));
  EXPECT_TRUE(is1.lut().empty());
  EXPECT_TRUE(host.idle());
}

TEST(SessionTest, ClosedChannelRaises) {
  Session s("ToR1");
  s.send_to_agent(SimTime{0}, OFMessage{1, StatsReq{}});
  s.close();
  EXPECT_THROW(s.send_to_agent(SimTime{0}, OFMessage{2, StatsReq{}}), SessionError);
  EXPECT_THROW(s.receive_at_agent(SimTime{0}), SessionError);
}

TEST(SessionTest, StatsBroadcastReachesEveryDevice) {
  TopologyGraph topo{TopologyConfig{}};
  std::vector<std::unique_ptr<TorNode>> tors;
  std::vector<std::unique_ptr<OpticalSwitch>> switches;
  std::vector<std::unique_ptr<Session>> sessions;
  std::vector<AgentHost> hosts;
  for (const auto& d : topo.devices()) {
    sessions.push_back(std::make_unique<Session>(topo.name(d)));
    if (d.is_tor()) {
      tors.push_back(std::make_unique<TorNode>(topo, d, TorParams{}));
      hosts.emplace_back(DeviceAgent(topo, *tors.back()), *sessions.back(), SimTime{0});
    } else {
      switches.push_back(std::make_unique<OpticalSwitch>(d, topo.port_count(d)));
      hosts.emplace_back(DeviceAgent(topo, *switches.back()), *sessions.back(), SimTime{0});
    }
  }
  ASSERT_EQ(hosts.size(), 14u);
  for (std::size_t i = 0; i < sessions.size(); ++i)
    sessions[i]->send_to_agent(SimTime{0}, OFMessage{static_cast<std::uint32_t>(100 + i), StatsReq{}});
  for (auto& h : hosts) h.step(SimTime{0});
  std::size_t replies = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto got = sessions[i]->receive_at_controller(SimTime{0});
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].second.xid, 100 + i);
    EXPECT_TRUE(std::holds_alternative<StatsRep>(got[0].second.body));
    replies += got.size();
  }
  EXPECT_EQ(replies, 14u);
}

}  // namespace
}  // namespace opsquare::ofproto
