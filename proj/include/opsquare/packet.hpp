#pragma once

#include <cstdint>
#include <vector>

#include "opsquare/time.hpp"
#include "opsquare/topology.hpp"

namespace opsquare {

using SliceId = std::uint32_t;

inline constexpr int kHighestPriority = 1;
inline constexpr int kLowestPriority = 4;
inline constexpr std::uint32_t kMinFrameBytes = 64;
inline constexpr std::uint32_t kMaxFrameBytes = 1518;

inline bool valid_priority(int p) { return p >= kHighestPriority && p <= kLowestPriority; }

struct Frame {
  std::uint32_t size_bytes = 0;
  SimTime created{0};
  // Frames created before the measurement warm-up ends are carried but not sampled.
  bool measured = true;
};

// Ethernet frames with a common destination aggregated into one slot payload.
struct OpticalPacket {
  std::uint64_t id = 0;
  SliceId slice = 0;
  int src_tor = 0;  // flat ToR index
  int dst_tor = 0;
  int priority = kLowestPriority;
  std::uint16_t wavelength = 0;
  std::vector<Frame> frames;
  std::uint32_t payload_bytes = 0;
  SimTime created{0};
  int hop_count = 0;

  std::uint64_t frame_count() const { return frames.size(); }
};

struct Label {
  std::uint64_t slot = 0;
  NodeId sw;
  int input_port = 0;
  int requested_output_port = 0;
  int priority = kLowestPriority;
  SliceId slice = 0;
  std::uint16_t wavelength = 0;
  std::uint64_t packet_id = 0;
};

enum class Verdict : std::uint8_t { Ack, NackContention, NackNoRoute };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Ack: return "ACK";
    case Verdict::NackContention: return "NACK(contention)";
    case Verdict::NackNoRoute: return "NACK(no-route)";
  }
  return "?";
}

struct FlowControlSignal {
  std::uint64_t packet_id = 0;
  Verdict verdict = Verdict::Ack;
  // Granted output port, meaningful for ACK only.
  int output_port = 0;
};

enum class FlowCommand : std::uint8_t { Add = 0, Modify = 1, Delete = 2 };

}  // namespace opsquare
