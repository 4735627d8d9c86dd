#pragma once

// Wire format for the optical OpenFlow-style control channel.
//
// Every message starts with an 8-byte header:
//
//   0      1        2..3            4..7
//   +------+--------+---------------+------------------+
//   | 0x01 |  type  | length (BE16) |    xid (BE32)    |
//   +------+--------+---------------+------------------+
//
// `length` counts the whole message including the header. Bodies:
//
//   FeatureReq (0x01)  empty
//   FeatureRep (0x02)  datapath_id u64 | device_kind u8 | n_ports u16 | capabilities u32
//   FlowMod    (0x03)  command u8 | in_port u16 | optical_flow_id u32 | wavelength u16
//                      | n_instructions u8 | instructions...
//                      OUTPUT       = 0x00 port u16
//                      SET_PRIORITY = 0x01 priority u8 (1..4)
//                      SET_WEIGHT   = 0x02 permille u16 (1..1000)
//   StatsReq   (0x04)  empty
//   StatsRep   (0x05)  n_records u16 | records...
//                      slice_id u32 | lost u64 | retransmitted u64 | packets_sent u64
//                      | delivered u64 | mean_latency_ns f64 (IEEE-754 bits, BE) | window_ns u64
//   Error      (0x06)  code u16
//
// All multi-byte integers are big-endian.

#include <bit>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "opsquare/packet.hpp"

namespace opsquare::ofproto {

inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::uint32_t kCapOpticalFastSwitching = 1u << 0;

enum class MsgType : std::uint8_t {
  FeatureReq = 0x01,
  FeatureRep = 0x02,
  FlowMod = 0x03,
  StatsReq = 0x04,
  StatsRep = 0x05,
  Error = 0x06,
};

enum class DeviceKind : std::uint8_t { ToR = 0, IS = 1, ES = 2 };

enum class ErrorCode : std::uint16_t { BadRequest = 1, BadPort = 2 };

struct FeatureReq {
  bool operator==(const FeatureReq&) const = default;
};

struct FeatureRep {
  std::uint64_t datapath_id = 0;
  DeviceKind device_kind = DeviceKind::ToR;
  std::uint16_t n_ports = 0;
  std::uint32_t capabilities = 0;
  bool operator==(const FeatureRep&) const = default;
};

struct OpticalMatch {
  // Switches: physical input port. ToRs: destination ToR index.
  std::uint16_t in_port = 0;
  std::uint32_t optical_flow_id = 0;  // slice id
  std::uint16_t wavelength = 0;
  bool operator==(const OpticalMatch&) const = default;
};

struct Output {
  std::uint16_t port = 0;
  bool operator==(const Output&) const = default;
};
struct SetPriority {
  std::uint8_t priority = kLowestPriority;
  bool operator==(const SetPriority&) const = default;
};
struct SetWeight {
  std::uint16_t permille = 1000;
  bool operator==(const SetWeight&) const = default;
};
using Instruction = std::variant<Output, SetPriority, SetWeight>;

struct FlowMod {
  FlowCommand command = FlowCommand::Add;
  OpticalMatch match;
  std::vector<Instruction> instructions;

  std::optional<std::uint16_t> output() const {
    for (const auto& i : instructions)
      if (auto* o = std::get_if<Output>(&i)) return o->port;
    return std::nullopt;
  }
  std::optional<std::uint8_t> priority() const {
    for (const auto& i : instructions)
      if (auto* p = std::get_if<SetPriority>(&i)) return p->priority;
    return std::nullopt;
  }
  std::optional<std::uint16_t> weight_permille() const {
    for (const auto& i : instructions)
      if (auto* w = std::get_if<SetWeight>(&i)) return w->permille;
    return std::nullopt;
  }
  bool operator==(const FlowMod&) const = default;
};

struct StatsReq {
  bool operator==(const StatsReq&) const = default;
};

struct StatsRecord {
  std::uint32_t slice_id = 0;
  std::uint64_t lost_packets = 0;
  std::uint64_t retransmitted_packets = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t delivered = 0;
  double mean_latency_ns = 0.0;
  std::uint64_t window_ns = 0;
  bool operator==(const StatsRecord& o) const {
    return slice_id == o.slice_id && lost_packets == o.lost_packets &&
           retransmitted_packets == o.retransmitted_packets && packets_sent == o.packets_sent &&
           delivered == o.delivered && std::bit_cast<std::uint64_t>(mean_latency_ns) ==
                                           std::bit_cast<std::uint64_t>(o.mean_latency_ns) &&
           window_ns == o.window_ns;
  }
};

struct StatsRep {
  std::vector<StatsRecord> records;
  bool operator==(const StatsRep&) const = default;
};

struct ErrorMsg {
  ErrorCode code = ErrorCode::BadRequest;
  bool operator==(const ErrorMsg&) const = default;
};

using Body = std::variant<FeatureReq, FeatureRep, FlowMod, StatsReq, StatsRep, ErrorMsg>;

struct OFMessage {
  std::uint32_t xid = 0;
  Body body;

  MsgType type() const { return static_cast<MsgType>(body.index() + 1); }
  bool operator==(const OFMessage&) const = default;
};

enum class DecodeErrc {
  Truncated,
  UnsupportedVersion,
  UnknownType,
  LengthMismatch,
  BadField,
};

inline const char* to_string(DecodeErrc e) {
  switch (e) {
    case DecodeErrc::Truncated: return "truncated";
    case DecodeErrc::UnsupportedVersion: return "unsupported version";
    case DecodeErrc::UnknownType: return "unknown message type";
    case DecodeErrc::LengthMismatch: return "length mismatch";
    case DecodeErrc::BadField: return "bad field";
  }
  return "?";
}

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  DecodeErrc code() const { return code_; }

 private:
  DecodeErrc code_;
};

class EncodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Reads strictly inside the span it was given.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((b_[pos_] << 8) | b_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    const std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::uint64_t u64() {
    const std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw DecodeError(DecodeErrc::Truncated, "body ends early");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline void check_instructions(const std::vector<Instruction>& ins, bool decoding) {
  int outputs = 0, prios = 0, weights = 0;
  auto fail = [decoding](const std::string& m) {
    if (decoding) throw DecodeError(DecodeErrc::BadField, m);
    throw EncodeError(m);
  };
  for (const auto& i : ins) {
    if (std::holds_alternative<Output>(i)) ++outputs;
    if (auto* p = std::get_if<SetPriority>(&i)) {
      ++prios;
      if (!valid_priority(p->priority)) fail("SET_PRIORITY outside 1..4");
    }
    if (auto* w = std::get_if<SetWeight>(&i)) {
      ++weights;
      if (w->permille < 1 || w->permille > 1000) fail("SET_WEIGHT outside 1..1000");
    }
  }
  if (outputs > 1 || prios > 1 || weights > 1) fail("repeated FlowMod instruction");
  if (ins.size() > 255) fail("too many instructions");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const OFMessage& msg) {
  detail::Writer w;
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(msg.type()));
  w.u16(0);  // patched below
  w.u32(msg.xid);
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, FeatureRep>) {
          if (static_cast<std::uint8_t>(b.device_kind) > 2) throw EncodeError("device_kind out of range");
          w.u64(b.datapath_id);
          w.u8(static_cast<std::uint8_t>(b.device_kind));
          w.u16(b.n_ports);
          w.u32(b.capabilities);
        } else if constexpr (std::is_same_v<T, FlowMod>) {
          if (static_cast<std::uint8_t>(b.command) > 2) throw EncodeError("FlowMod command out of range");
          detail::check_instructions(b.instructions, false);
          w.u8(static_cast<std::uint8_t>(b.command));
          w.u16(b.match.in_port);
          w.u32(b.match.optical_flow_id);
          w.u16(b.match.wavelength);
          w.u8(static_cast<std::uint8_t>(b.instructions.size()));
          for (const auto& ins : b.instructions) {
            if (auto* o = std::get_if<Output>(&ins)) {
              w.u8(0x00);
              w.u16(o->port);
            } else if (auto* p = std::get_if<SetPriority>(&ins)) {
              w.u8(0x01);
              w.u8(p->priority);
            } else if (auto* q = std::get_if<SetWeight>(&ins)) {
              w.u8(0x02);
              w.u16(q->permille);
            }
          }
        } else if constexpr (std::is_same_v<T, StatsRep>) {
          if (b.records.size() > 0xFFFF) throw EncodeError("too many StatsRep records");
          w.u16(static_cast<std::uint16_t>(b.records.size()));
          for (const auto& r : b.records) {
            w.u32(r.slice_id);
            w.u64(r.lost_packets);
            w.u64(r.retransmitted_packets);
            w.u64(r.packets_sent);
            w.u64(r.delivered);
            w.f64(r.mean_latency_ns);
            w.u64(r.window_ns);
          }
        } else if constexpr (std::is_same_v<T, ErrorMsg>) {
          w.u16(static_cast<std::uint16_t>(b.code));
        }
      },
      msg.body);
  auto& bytes = w.bytes();
  if (bytes.size() > 0xFFFF) throw EncodeError("message exceeds 65535 bytes");
  bytes[2] = static_cast<std::uint8_t>(bytes.size() >> 8);
  bytes[3] = static_cast<std::uint8_t>(bytes.size());
  return std::move(bytes);
}

// Total length declared by a header, or nullopt if fewer than 8 bytes are available.
inline std::optional<std::size_t> peek_length(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) return std::nullopt;
  return static_cast<std::size_t>((bytes[2] << 8) | bytes[3]);
}

// Decodes exactly one message occupying the whole span.
inline OFMessage decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw DecodeError(DecodeErrc::Truncated, "header needs 8 bytes");
  if (bytes[0] != kVersion) throw DecodeError(DecodeErrc::UnsupportedVersion, "version " + std::to_string(bytes[0]));
  const std::uint8_t type = bytes[1];
  if (type < 0x01 || type > 0x06) throw DecodeError(DecodeErrc::UnknownType, "type " + std::to_string(type));
  const std::size_t length = *peek_length(bytes);
  if (length < kHeaderSize) throw DecodeError(DecodeErrc::LengthMismatch, "declared length below header size");
  if (bytes.size() < length) throw DecodeError(DecodeErrc::Truncated, "fewer bytes than declared length");
  if (bytes.size() > length) throw DecodeError(DecodeErrc::LengthMismatch, "trailing bytes after declared length");

  detail::Reader hdr(bytes.first(kHeaderSize));
  hdr.u32();  // version, type, length
  OFMessage msg;
  msg.xid = hdr.u32();
  detail::Reader r(bytes.subspan(kHeaderSize, length - kHeaderSize));
  switch (static_cast<MsgType>(type)) {
    case MsgType::FeatureReq: msg.body = FeatureReq{}; break;
    case MsgType::StatsReq: msg.body = StatsReq{}; break;
    case MsgType::FeatureRep: {
      FeatureRep b;
      b.datapath_id = r.u64();
      const auto kind = r.u8();
      if (kind > 2) throw DecodeError(DecodeErrc::BadField, "device_kind " + std::to_string(kind));
      b.device_kind = static_cast<DeviceKind>(kind);
      b.n_ports = r.u16();
      b.capabilities = r.u32();
      msg.body = b;
      break;
    }
    case MsgType::FlowMod: {
      FlowMod b;
      const auto cmd = r.u8();
      if (cmd > 2) throw DecodeError(DecodeErrc::BadField, "FlowMod command " + std::to_string(cmd));
      b.command = static_cast<FlowCommand>(cmd);
      b.match.in_port = r.u16();
      b.match.optical_flow_id = r.u32();
      b.match.wavelength = r.u16();
      const auto n = r.u8();
      for (int i = 0; i < n; ++i) {
        const auto kind = r.u8();
        switch (kind) {
          case 0x00: b.instructions.emplace_back(Output{r.u16()}); break;
          case 0x01: b.instructions.emplace_back(SetPriority{r.u8()}); break;
          case 0x02: b.instructions.emplace_back(SetWeight{r.u16()}); break;
          default: throw DecodeError(DecodeErrc::BadField, "instruction type " + std::to_string(kind));
        }
      }
      detail::check_instructions(b.instructions, true);
      msg.body = std::move(b);
      break;
    }
    case MsgType::StatsRep: {
      StatsRep b;
      const auto n = r.u16();
      for (int i = 0; i < n; ++i) {
        StatsRecord rec;
        rec.slice_id = r.u32();
        rec.lost_packets = r.u64();
        rec.retransmitted_packets = r.u64();
        rec.packets_sent = r.u64();
        rec.delivered = r.u64();
        rec.mean_latency_ns = r.f64();
        rec.window_ns = r.u64();
        b.records.push_back(rec);
      }
      msg.body = std::move(b);
      break;
    }
    case MsgType::Error: {
      const auto code = r.u16();
      if (code != 1 && code != 2) throw DecodeError(DecodeErrc::BadField, "error code " + std::to_string(code));
      msg.body = ErrorMsg{static_cast<ErrorCode>(code)};
      break;
    }
  }
  if (r.remaining() != 0) throw DecodeError(DecodeErrc::LengthMismatch, "body shorter than declared length");
  return msg;
}

inline const char* to_string(MsgType t) {
  switch (t) {
    case MsgType::FeatureReq: return "FeatureReq";
    case MsgType::FeatureRep: return "FeatureRep";
    case MsgType::FlowMod: return "FlowMod";
    case MsgType::StatsReq: return "StatsReq";
    case MsgType::StatsRep: return "StatsRep";
    case MsgType::Error: return "Error";
  }
  return "?";
}

inline const char* to_string(FlowCommand c) {
  switch (c) {
    case FlowCommand::Add: return "ADD";
    case FlowCommand::Modify: return "MODIFY";
    case FlowCommand::Delete: return "DELETE";
  }
  return "?";
}

// One line per message, stable field order; used by golden tests and logs.
inline std::string dump(const OFMessage& msg) {
  std::ostringstream os;
  os << to_string(msg.type()) << " xid=" << msg.xid;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, FeatureRep>) {
          os << " dpid=0x" << std::hex << std::setw(16) << std::setfill('0') << b.datapath_id << std::dec
             << " kind=" << static_cast<int>(b.device_kind) << " ports=" << b.n_ports << " caps=0x" << std::hex
             << std::setw(8) << b.capabilities << std::dec;
        } else if constexpr (std::is_same_v<T, FlowMod>) {
          os << " cmd=" << to_string(b.command) << " in_port=" << b.match.in_port
             << " flow=" << b.match.optical_flow_id << " lambda=" << b.match.wavelength;
          for (const auto& i : b.instructions) {
            if (auto* o = std::get_if<Output>(&i)) os << " OUTPUT:" << o->port;
            if (auto* p = std::get_if<SetPriority>(&i)) os << " SET_PRIORITY:" << int(p->priority);
            if (auto* w = std::get_if<SetWeight>(&i)) os << " SET_WEIGHT:" << w->permille;
          }
        } else if constexpr (std::is_same_v<T, StatsRep>) {
          os << " records=" << b.records.size();
          for (const auto& r : b.records)
            os << " [slice=" << r.slice_id << " lost=" << r.lost_packets << " retx=" << r.retransmitted_packets
               << " sent=" << r.packets_sent << " delivered=" << r.delivered << " mean_ns=" << r.mean_latency_ns
               << " window_ns=" << r.window_ns << "]";
        } else if constexpr (std::is_same_v<T, ErrorMsg>) {
          os << " code=" << static_cast<int>(b.code);
        }
      },
      msg.body);
  return os.str();
}

}  // namespace opsquare::ofproto
