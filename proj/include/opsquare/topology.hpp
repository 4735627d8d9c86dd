#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "opsquare/errors.hpp"

namespace opsquare {

// Physical parameters of an OPSquare fabric: C clusters of R racks, K servers
// per rack. Each ToR owns one uplink to its cluster's intra-cluster switch
// (IS) and one to the inter-cluster switch (ES) shared by same-index racks.
struct TopologyConfig {
  int n_clusters = 2;
  int racks_per_cluster = 4;
  int servers_per_rack = 4;
  double link_rate_bps = 10e9;
  double fiber_length_m = 14.0;
  double propagation_ns_per_m = 5.0;
  double tx_rx_processing_ns = 163.5;
  // Recorded only; synchronisation is treated as ideal.
  double sync_jitter_ns = 3.103;

  void validate() const {
    if (n_clusters < 1) throw ConfigError("topology.clusters must be >= 1");
    if (racks_per_cluster < 1) throw ConfigError("topology.racks_per_cluster must be >= 1");
    if (servers_per_rack < 1) throw ConfigError("topology.servers_per_rack must be >= 1");
    if (!(link_rate_bps > 0)) throw ConfigError("topology.link_rate must be positive");
    if (fiber_length_m < 0) throw ConfigError("topology.fiber_length_m must be >= 0");
    if (propagation_ns_per_m < 0) throw ConfigError("topology.propagation_ns_per_m must be >= 0");
    if (tx_rx_processing_ns < 0) throw ConfigError("topology.tx_rx_processing_ns must be >= 0");
  }

  double segment_delay_ns() const { return fiber_length_m * propagation_ns_per_m; }
};

enum class NodeKind : std::uint8_t { ToR = 0, IS = 1, ES = 2 };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::ToR: return "ToR";
    case NodeKind::IS: return "IS";
    case NodeKind::ES: return "ES";
  }
  return "?";
}

// ToR: (cluster, rack). IS: cluster only (rack = 0). ES: rack only (cluster = 0).
// All indices are 1-based.
struct NodeId {
  NodeKind kind = NodeKind::ToR;
  int cluster = 0;
  int rack = 0;

  static constexpr NodeId tor(int c, int r) { return {NodeKind::ToR, c, r}; }
  static constexpr NodeId is(int c) { return {NodeKind::IS, c, 0}; }
  static constexpr NodeId es(int r) { return {NodeKind::ES, 0, r}; }

  bool is_tor() const { return kind == NodeKind::ToR; }
  bool is_switch() const { return kind != NodeKind::ToR; }

  auto operator<=>(const NodeId&) const = default;
};

// ToR uplink identifiers double as the ToR's optical port numbers.
enum class Uplink : std::uint8_t { IS = 1, ES = 2 };

inline const char* to_string(Uplink u) { return u == Uplink::IS ? "IS" : "ES"; }

enum class PathKind : std::uint8_t {
  IntraSingleHop,
  // Same rack index in different clusters: the shared ES joins them directly.
  InterDirect,
  InterESFirst,
  InterISFirst,
};

inline const char* to_string(PathKind k) {
  switch (k) {
    case PathKind::IntraSingleHop: return "intra";
    case PathKind::InterDirect: return "inter-direct";
    case PathKind::InterESFirst: return "inter-es-first";
    case PathKind::InterISFirst: return "inter-is-first";
  }
  return "?";
}

// Alternating ToR, switch, ToR[, switch, ToR] sequence.
struct Path {
  std::vector<NodeId> hops;
  PathKind kind = PathKind::IntraSingleHop;

  NodeId src() const { return hops.front(); }
  NodeId dst() const { return hops.back(); }
  int switch_count() const { return static_cast<int>(hops.size() / 2); }

  std::vector<NodeId> switches() const {
    std::vector<NodeId> out;
    for (std::size_t i = 1; i < hops.size(); i += 2) out.push_back(hops[i]);
    return out;
  }

  Path reversed() const {
    Path p{{hops.rbegin(), hops.rend()}, kind};
    if (kind == PathKind::InterESFirst) p.kind = PathKind::InterISFirst;
    else if (kind == PathKind::InterISFirst) p.kind = PathKind::InterESFirst;
    return p;
  }

  bool operator==(const Path&) const = default;
};

// A bidirectional ToR<->switch fiber pair.
struct Link {
  NodeId tor;
  NodeId sw;
  auto operator<=>(const Link&) const = default;
};

class TopologyGraph {
 public:
  explicit TopologyGraph(TopologyConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    for (int c = 1; c <= cfg_.n_clusters; ++c)
      for (int r = 1; r <= cfg_.racks_per_cluster; ++r) tors_.push_back(NodeId::tor(c, r));
    for (int c = 1; c <= cfg_.n_clusters; ++c) switches_.push_back(NodeId::is(c));
    for (int r = 1; r <= cfg_.racks_per_cluster; ++r) switches_.push_back(NodeId::es(r));
    for (const auto& t : tors_) {
      links_.push_back({t, NodeId::is(t.cluster)});
      links_.push_back({t, NodeId::es(t.rack)});
    }
    std::sort(links_.begin(), links_.end());
  }

  const TopologyConfig& config() const { return cfg_; }
  int clusters() const { return cfg_.n_clusters; }
  int racks_per_cluster() const { return cfg_.racks_per_cluster; }
  int tor_count() const { return cfg_.n_clusters * cfg_.racks_per_cluster; }
  int is_count() const { return cfg_.n_clusters; }
  int es_count() const { return cfg_.racks_per_cluster; }

  const std::vector<NodeId>& tors() const { return tors_; }
  const std::vector<NodeId>& switches() const { return switches_; }
  const std::vector<Link>& links() const { return links_; }

  // ToRs first (flat order), then ISs, then ESs.
  std::vector<NodeId> devices() const {
    std::vector<NodeId> all = tors_;
    all.insert(all.end(), switches_.begin(), switches_.end());
    return all;
  }

  bool contains(NodeId n) const {
    switch (n.kind) {
      case NodeKind::ToR:
        return n.cluster >= 1 && n.cluster <= cfg_.n_clusters && n.rack >= 1 &&
               n.rack <= cfg_.racks_per_cluster;
      case NodeKind::IS: return n.rack == 0 && n.cluster >= 1 && n.cluster <= cfg_.n_clusters;
      case NodeKind::ES: return n.cluster == 0 && n.rack >= 1 && n.rack <= cfg_.racks_per_cluster;
    }
    return false;
  }

  // Radix for switches, uplink count for ToRs.
  int port_count(NodeId n) const {
    require(n);
    switch (n.kind) {
      case NodeKind::ToR: return 2;
      case NodeKind::IS: return cfg_.racks_per_cluster;
      case NodeKind::ES: return cfg_.n_clusters;
    }
    return 0;
  }

  NodeId uplink_switch(NodeId tor, Uplink u) const {
    require_tor(tor);
    return u == Uplink::IS ? NodeId::is(tor.cluster) : NodeId::es(tor.rack);
  }

  // IS port r <-> ToR(c, r); ES port c <-> ToR(c, r).
  int switch_port_of(NodeId sw, NodeId tor) const {
    require(sw);
    require_tor(tor);
    if (!linked(tor, sw)) throw std::invalid_argument("ToR is not attached to switch");
    return sw.kind == NodeKind::IS ? tor.rack : tor.cluster;
  }

  NodeId tor_at_port(NodeId sw, int port) const {
    require(sw);
    if (port < 1 || port > port_count(sw)) throw std::out_of_range("switch port out of range");
    return sw.kind == NodeKind::IS ? NodeId::tor(sw.cluster, port) : NodeId::tor(port, sw.rack);
  }

  bool linked(NodeId a, NodeId b) const {
    if (a.is_switch() && b.is_tor()) std::swap(a, b);
    if (!a.is_tor() || !b.is_switch() || !contains(a) || !contains(b)) return false;
    return b.kind == NodeKind::IS ? b.cluster == a.cluster : b.rack == a.rack;
  }

  int flat_tor_index(NodeId tor) const {
    require_tor(tor);
    return (tor.cluster - 1) * cfg_.racks_per_cluster + tor.rack;
  }

  NodeId tor_from_index(int i) const {
    if (i < 1 || i > tor_count()) throw std::out_of_range("ToR index out of range");
    return NodeId::tor((i - 1) / cfg_.racks_per_cluster + 1, (i - 1) % cfg_.racks_per_cluster + 1);
  }

  // Candidate ToR-to-ToR paths, ES-first before IS-first.
  std::vector<Path> enumerate_paths(NodeId src, NodeId dst) const {
    require_tor(src);
    require_tor(dst);
    if (src == dst) throw std::invalid_argument("enumerate_paths: source equals destination");
    if (src.cluster == dst.cluster) return {Path{{src, NodeId::is(src.cluster), dst}, PathKind::IntraSingleHop}};
    if (src.rack == dst.rack) return {Path{{src, NodeId::es(src.rack), dst}, PathKind::InterDirect}};
    Path es_first{{src, NodeId::es(src.rack), NodeId::tor(dst.cluster, src.rack), NodeId::is(dst.cluster), dst},
                  PathKind::InterESFirst};
    Path is_first{{src, NodeId::is(src.cluster), NodeId::tor(src.cluster, dst.rack), NodeId::es(dst.rack), dst},
                  PathKind::InterISFirst};
    return {std::move(es_first), std::move(is_first)};
  }

  // The egress a ToR uses toward `dst` when it has no provisioned entry:
  // the first hop of the first candidate path.
  Uplink default_uplink(NodeId from, NodeId dst) const {
    return from.cluster == dst.cluster ? Uplink::IS : Uplink::ES;
  }

  // Label port request for the first hop from `from` toward `dst` over `u`.
  int label_port(NodeId from, NodeId dst, Uplink u) const {
    require_tor(from);
    require_tor(dst);
    return u == Uplink::IS ? dst.rack : dst.cluster;
  }

  bool valid_path(const Path& p) const {
    if (p.hops.size() < 3 || p.hops.size() % 2 == 0) return false;
    for (std::size_t i = 0; i < p.hops.size(); ++i) {
      if ((i % 2 == 0) != p.hops[i].is_tor()) return false;
      if (!contains(p.hops[i])) return false;
      if (i > 0 && !linked(p.hops[i - 1], p.hops[i])) return false;
    }
    return true;
  }

  std::string name(NodeId n) const {
    if (n.kind == NodeKind::ToR) return "ToR" + std::to_string(flat_tor_index(n));
    return std::string(to_string(n.kind)) + std::to_string(n.kind == NodeKind::IS ? n.cluster : n.rack);
  }

  std::string describe(const Path& p) const {
    std::string s;
    for (std::size_t i = 0; i < p.hops.size(); ++i) {
      if (i) s += "<->";
      s += name(p.hops[i]);
    }
    return s;
  }

 private:
  void require(NodeId n) const {
    if (!contains(n)) throw std::out_of_range("node outside configured topology");
  }
  void require_tor(NodeId n) const {
    if (!n.is_tor()) throw std::invalid_argument("expected a ToR node");
    require(n);
  }

  TopologyConfig cfg_;
  std::vector<NodeId> tors_;
  std::vector<NodeId> switches_;
  std::vector<Link> links_;
};

inline TopologyGraph build_topology(const TopologyConfig& cfg) { return TopologyGraph(cfg); }

// Fiber delay along a path: every hop edge is one ToR<->switch segment.
inline double path_propagation_ns(const Path& path, const TopologyConfig& cfg) {
  if (path.hops.size() < 2) return 0.0;
  return static_cast<double>(path.hops.size() - 1) * cfg.segment_delay_ns();
}

}  // namespace opsquare
