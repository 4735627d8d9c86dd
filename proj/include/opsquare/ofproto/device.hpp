#pragma once

#include <cstdint>

#include "opsquare/ofproto/codec.hpp"
#include "opsquare/topology.hpp"

namespace opsquare::ofproto {

inline std::uint64_t datapath_id(NodeId n) {
  return (static_cast<std::uint64_t>(n.kind) << 32) | (static_cast<std::uint64_t>(n.cluster) << 16) |
         static_cast<std::uint64_t>(n.rack);
}

inline DeviceKind device_kind(NodeKind k) {
  switch (k) {
    case NodeKind::ToR: return DeviceKind::ToR;
    case NodeKind::IS: return DeviceKind::IS;
    case NodeKind::ES: return DeviceKind::ES;
  }
  return DeviceKind::ToR;
}

}  // namespace opsquare::ofproto
