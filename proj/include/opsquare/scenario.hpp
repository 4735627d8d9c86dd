#pragma once

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/simulation.hpp"

namespace opsquare {

inline constexpr int kScenarioSchema = 1;

enum class ExperimentKind : std::uint8_t { Sweep, Reconfigure, Balance };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Sweep: return "sweep";
    case ExperimentKind::Reconfigure: return "reconfigure";
    case ExperimentKind::Balance: return "balance";
  }
  return "?";
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Sweep;
  int seeds = 1;  // consecutive seeds starting at the scenario seed
  std::vector<double> loads;
  std::vector<double> cdf_loads;
  std::optional<ReconfigureAction> reconfigure;
  std::optional<double> balance_threshold;
};

// A parsed scenario file. `base` carries everything common to every run;
// `run_config` derives the configuration of one run from it.
struct Scenario {
  std::string name;
  std::string description;
  std::uint64_t seed = 1;
  SimulationConfig base;
  ExperimentSpec experiment;

  std::string slice_name(SliceId id) const {
    for (const auto& s : base.slices)
      if (s.id == id) return s.name;
    return "NS" + std::to_string(id);
  }

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> out;
    for (int i = 0; i < experiment.seeds; ++i) out.push_back(seed + static_cast<std::uint64_t>(i));
    return out;
  }

  // `load` overrides every slice's offered load; `variant` selects the paired
  // arm of reconfigure/balance experiments (true = with the action).
  SimulationConfig run_config(std::uint64_t run_seed, std::optional<double> load = std::nullopt,
                              bool variant = true) const {
    SimulationConfig c = base;
    c.seed = run_seed;
    if (load)
      for (auto& [id, tr] : c.traffic) tr.profile.load = *load;
    switch (experiment.kind) {
      case ExperimentKind::Sweep: break;
      case ExperimentKind::Reconfigure:
        if (variant) c.reconfigure = experiment.reconfigure;
        break;
      case ExperimentKind::Balance:
        c.stats_polling = true;
        c.control.load_balancing = variant;
        if (experiment.balance_threshold)
          for (auto& s : c.slices) s.qos.loss_threshold = *experiment.balance_threshold;
        break;
    }
    return c;
  }
};

struct Diagnostic {
  std::string field;
  std::string message;
};

inline std::string to_string(const Diagnostic& d) { return d.field.empty() ? d.message : d.field + ": " + d.message; }

class ScenarioError : public ConfigError {
 public:
  explicit ScenarioError(std::vector<Diagnostic> d) : ConfigError(join(d)), diagnostics_(std::move(d)) {}
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string join(const std::vector<Diagnostic>& d) {
    std::string s;
    for (const auto& x : d) s += (s.empty() ? "" : "\n") + to_string(x);
    return s;
  }
  std::vector<Diagnostic> diagnostics_;
};

namespace detail {

// Field reader that records every problem instead of stopping at the first.
class Reader {
 public:
  std::vector<Diagnostic> diags;

  void error(const std::string& field, const std::string& msg) { diags.push_back({field, msg}); }

  bool is_map(const YAML::Node& n, const std::string& field) {
    if (n.IsMap()) return true;
    error(field, "expected a mapping");
    return false;
  }

  bool is_seq(const YAML::Node& n, const std::string& field) {
    if (n.IsSequence()) return true;
    error(field, "expected a list");
    return false;
  }

  void only_keys(const YAML::Node& n, const std::string& field, std::initializer_list<const char*> keys) {
    if (!n.IsMap()) return;
    for (const auto& kv : n) {
      const auto k = kv.first.as<std::string>();
      bool known = false;
      for (const char* x : keys) known |= k == x;
      if (!known) error(join(field, k), "unknown field");
    }
  }

  template <typename T>
  std::optional<T> scalar(const YAML::Node& n, const std::string& field) {
    if (!n.IsScalar()) {
      error(field, "expected a scalar");
      return std::nullopt;
    }
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      error(field, "invalid value '" + n.Scalar() + "'");
      return std::nullopt;
    }
  }

  template <typename T>
  void read(const YAML::Node& parent, const std::string& base, const char* key, T& out) {
    const YAML::Node n = parent[key];
    if (!n) return;
    if (auto v = scalar<T>(n, join(base, key))) out = *v;
  }

  // Millisecond/microsecond/nanosecond fields into SimTime.
  void read_time(const YAML::Node& parent, const std::string& base, const char* key, SimTime& out,
                 SimTime (*conv)(double)) {
    double v = 0.0;
    const YAML::Node n = parent[key];
    if (!n) return;
    if (auto x = scalar<double>(n, join(base, key))) {
      v = *x;
      if (!std::isfinite(v)) {
        error(join(base, key), "must be finite");
        return;
      }
      out = conv(v);
    }
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& field) {
    std::vector<double> out;
    if (!is_seq(n, field)) return out;
    for (std::size_t i = 0; i < n.size(); ++i)
      if (auto v = scalar<double>(n[i], field + "[" + std::to_string(i) + "]")) out.push_back(*v);
    return out;
  }

  std::vector<int> ints(const YAML::Node& n, const std::string& field) {
    std::vector<int> out;
    if (!is_seq(n, field)) return out;
    for (std::size_t i = 0; i < n.size(); ++i)
      if (auto v = scalar<int>(n[i], field + "[" + std::to_string(i) + "]")) out.push_back(*v);
    return out;
  }

  // [rack, server] or {rack: r, server: s}
  std::optional<VnfPlacement> placement(const YAML::Node& n, const std::string& field) {
    VnfPlacement p;
    if (n.IsSequence() && n.size() == 2) {
      auto r = scalar<int>(n[0], field + ".rack");
      auto s = scalar<int>(n[1], field + ".server");
      if (!r || !s) return std::nullopt;
      p.rack = *r;
      p.server = *s;
      return p;
    }
    if (n.IsMap()) {
      only_keys(n, field, {"rack", "server"});
      if (!n["rack"]) {
        error(field + ".rack", "required");
        return std::nullopt;
      }
      read(n, field, "rack", p.rack);
      read(n, field, "server", p.server);
      return p;
    }
    error(field, "expected [rack, server] or {rack, server}");
    return std::nullopt;
  }

  std::vector<VnfPlacement> placements(const YAML::Node& n, const std::string& field) {
    std::vector<VnfPlacement> out;
    if (!is_seq(n, field)) return out;
    for (std::size_t i = 0; i < n.size(); ++i)
      if (auto p = placement(n[i], field + "[" + std::to_string(i) + "]")) out.push_back(*p);
    return out;
  }

  static std::string join(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
  }
};

inline SimTime ms(double v) { return from_ms(v); }
inline SimTime us(double v) { return from_us(v); }
inline SimTime ns(double v) { return from_ns(v); }

inline std::optional<SliceId> resolve_slice(Reader& rd, const Scenario& sc, const YAML::Node& n,
                                            const std::string& field) {
  if (!n) {
    rd.error(field, "required");
    return std::nullopt;
  }
  if (!n.IsScalar()) {
    rd.error(field, "expected a slice name or id");
    return std::nullopt;
  }
  const std::string v = n.Scalar();
  for (const auto& s : sc.base.slices)
    if (s.name == v || std::to_string(s.id) == v) return s.id;
  rd.error(field, "unknown slice '" + v + "'");
  return std::nullopt;
}

inline void parse_topology(Reader& rd, const YAML::Node& n, TopologyConfig& t) {
  const std::string f = "topology";
  if (!rd.is_map(n, f)) return;
  rd.only_keys(n, f,
               {"clusters", "racks_per_cluster", "servers_per_rack", "link_rate_gbps", "fiber_length_m",
                "propagation_ns_per_m", "tx_rx_processing_ns", "sync_jitter_ns"});
  rd.read(n, f, "clusters", t.n_clusters);
  rd.read(n, f, "racks_per_cluster", t.racks_per_cluster);
  rd.read(n, f, "servers_per_rack", t.servers_per_rack);
  double gbps = t.link_rate_bps / 1e9;
  rd.read(n, f, "link_rate_gbps", gbps);
  t.link_rate_bps = gbps * 1e9;
  rd.read(n, f, "fiber_length_m", t.fiber_length_m);
  rd.read(n, f, "propagation_ns_per_m", t.propagation_ns_per_m);
  rd.read(n, f, "tx_rx_processing_ns", t.tx_rx_processing_ns);
  rd.read(n, f, "sync_jitter_ns", t.sync_jitter_ns);
}

inline void parse_dataplane(Reader& rd, const YAML::Node& n, DataPlaneParams& d) {
  const std::string f = "dataplane";
  if (!rd.is_map(n, f)) return;
  rd.only_keys(n, f, {"slot_ns", "payload_bytes", "buffer_packets", "aggregation_timeout_slots"});
  rd.read_time(n, f, "slot_ns", d.slot, ns);
  rd.read(n, f, "payload_bytes", d.payload_capacity_bytes);
  int buffer = static_cast<int>(d.buffer_capacity_packets);
  rd.read(n, f, "buffer_packets", buffer);
  if (buffer < 1) rd.error("dataplane.buffer_packets", "must be >= 1");
  else d.buffer_capacity_packets = static_cast<std::size_t>(buffer);
  rd.read(n, f, "aggregation_timeout_slots", d.aggregation_timeout_slots);
}

inline void parse_control(Reader& rd, const YAML::Node& n, SimulationConfig& c) {
  const std::string f = "control";
  if (!rd.is_map(n, f)) return;
  rd.only_keys(n, f,
               {"orchestration_delay_ms", "orchestration_jitter_ms", "flowmod_delay_ms", "channel_latency_us",
                "stats_period_ms", "cooldown_periods", "split_ratio", "discovery_timeout_ms"});
  rd.read_time(n, f, "orchestration_delay_ms", c.control.orchestration_delay, ms);
  rd.read_time(n, f, "orchestration_jitter_ms", c.control.orchestration_jitter, ms);
  rd.read_time(n, f, "flowmod_delay_ms", c.flowmod_delay, ms);
  rd.read_time(n, f, "channel_latency_us", c.channel_latency, us);
  rd.read_time(n, f, "stats_period_ms", c.control.stats_period, ms);
  rd.read(n, f, "cooldown_periods", c.control.cooldown_periods);
  rd.read(n, f, "split_ratio", c.control.split_ratio);
  rd.read_time(n, f, "discovery_timeout_ms", c.control.discovery_timeout, ms);
}

inline void parse_run(Reader& rd, const YAML::Node& n, SimulationConfig& c) {
  const std::string f = "run";
  if (!rd.is_map(n, f)) return;
  rd.only_keys(n, f,
               {"duration_ms", "warmup_us", "min_frames", "reservoir_samples", "drain_limit_ms",
                "conservation_check_slots"});
  rd.read_time(n, f, "duration_ms", c.duration, ms);
  rd.read_time(n, f, "warmup_us", c.warmup, us);
  rd.read(n, f, "min_frames", c.min_measured_frames);
  rd.read(n, f, "reservoir_samples", c.reservoir_capacity);
  rd.read_time(n, f, "drain_limit_ms", c.drain_limit, ms);
  rd.read(n, f, "conservation_check_slots", c.conservation_check_slots);
  if (c.duration.count() <= 0) rd.error("run.duration_ms", "must be positive");
  if (c.warmup.count() < 0) rd.error("run.warmup_us", "must be >= 0");
  if (c.reservoir_capacity < 1) rd.error("run.reservoir_samples", "must be >= 1");
  if (c.drain_limit.count() <= 0) rd.error("run.drain_limit_ms", "must be positive");
  if (c.conservation_check_slots < 1) rd.error("run.conservation_check_slots", "must be >= 1");
}

inline void parse_slices(Reader& rd, const YAML::Node& n, Scenario& sc) {
  if (!n) {
    rd.error("slices", "required");
    return;
  }
  if (!rd.is_seq(n, "slices")) return;
  std::set<SliceId> ids;
  std::set<std::string> names;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string f = "slices[" + std::to_string(i) + "]";
    const YAML::Node s = n[i];
    if (!rd.is_map(s, f)) continue;
    rd.only_keys(s, f, {"id", "name", "priority", "wavelength", "loss_threshold", "latency_target_us", "vnfs"});
    SliceSpec spec;
    spec.id = static_cast<SliceId>(i + 1);
    rd.read(s, f, "id", spec.id);
    spec.name = "NS" + std::to_string(spec.id);
    rd.read(s, f, "name", spec.name);
    rd.read(s, f, "priority", spec.priority);
    rd.read(s, f, "wavelength", spec.wavelength);
    rd.read(s, f, "loss_threshold", spec.qos.loss_threshold);
    double lat_us = 0.0;
    rd.read(s, f, "latency_target_us", lat_us);
    spec.qos.latency_target_ns = lat_us * 1000.0;
    if (!s["vnfs"]) rd.error(f + ".vnfs", "required");
    else spec.placements = rd.placements(s["vnfs"], f + ".vnfs");
    if (!valid_priority(spec.priority)) rd.error(f + ".priority", "priority out of range 1..4");
    if (!ids.insert(spec.id).second) rd.error(f + ".id", "duplicate slice id " + std::to_string(spec.id));
    if (!names.insert(spec.name).second) rd.error(f + ".name", "duplicate slice name " + spec.name);
    if (!(spec.qos.loss_threshold >= 0.0 && spec.qos.loss_threshold <= 1.0))
      rd.error(f + ".loss_threshold", "must be in [0,1]");
    sc.base.slices.push_back(std::move(spec));
  }
}

inline void parse_destinations(Reader& rd, const YAML::Node& n, const std::string& f, DestinationSet& ds) {
  if (!rd.is_map(n, f)) return;
  if (!n["racks"]) rd.error(f + ".racks", "required");
  else ds.racks = rd.ints(n["racks"], f + ".racks");
  if (n["weights"]) ds.weights = rd.numbers(n["weights"], f + ".weights");
  if (!ds.weights.empty() && ds.weights.size() != ds.racks.size())
    rd.error(f + ".weights", "must have one weight per rack");
  for (double w : ds.weights)
    if (!(w >= 0.0)) rd.error(f + ".weights", "weights must be nonnegative");
}

inline void parse_traffic(Reader& rd, const YAML::Node& n, Scenario& sc) {
  if (!n) return;
  if (!rd.is_seq(n, "traffic")) return;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string f = "traffic[" + std::to_string(i) + "]";
    const YAML::Node t = n[i];
    if (!rd.is_map(t, f)) continue;
    rd.only_keys(t, f,
                 {"slice", "load", "sources", "destinations", "per_rack", "frame_bytes", "arrival",
                  "mean_burst_frames", "ramp"});
    const auto id = resolve_slice(rd, sc, t["slice"], f + ".slice");
    SliceTraffic tr;
    auto& p = tr.profile;
    rd.read(t, f, "load", p.load);
    if (!(p.load > 0.0 && p.load <= 1.0)) rd.error(f + ".load", "must be in (0,1]");
    if (t["sources"]) tr.sources = rd.placements(t["sources"], f + ".sources");
    if (t["destinations"]) {
      DestinationSet ds;
      parse_destinations(rd, t["destinations"], f + ".destinations", ds);
      p.destinations = ds.racks;
      p.destination_weights = ds.weights;
    }
    if (const YAML::Node pr = t["per_rack"]) {
      if (rd.is_seq(pr, f + ".per_rack")) {
        for (std::size_t k = 0; k < pr.size(); ++k) {
          const std::string g = f + ".per_rack[" + std::to_string(k) + "]";
          if (!rd.is_map(pr[k], g)) continue;
          rd.only_keys(pr[k], g, {"rack", "racks", "weights"});
          int rack = 0;
          if (!pr[k]["rack"]) rd.error(g + ".rack", "required");
          rd.read(pr[k], g, "rack", rack);
          DestinationSet ds;
          parse_destinations(rd, pr[k], g, ds);
          if (tr.by_rack.contains(rack)) rd.error(g + ".rack", "listed twice");
          tr.by_rack[rack] = std::move(ds);
        }
      }
    }
    if (const YAML::Node fb = t["frame_bytes"]) {
      const auto v = rd.ints(fb, f + ".frame_bytes");
      if (v.size() != 2) rd.error(f + ".frame_bytes", "expected [min, max]");
      else if (v[0] < static_cast<int>(kMinFrameBytes) || v[1] > static_cast<int>(kMaxFrameBytes) || v[0] > v[1])
        rd.error(f + ".frame_bytes", "must lie within [64, 1518]");
      else {
        p.min_frame_bytes = static_cast<std::uint32_t>(v[0]);
        p.max_frame_bytes = static_cast<std::uint32_t>(v[1]);
      }
    }
    if (const YAML::Node a = t["arrival"]) {
      const auto v = rd.scalar<std::string>(a, f + ".arrival");
      if (v == "bernoulli") p.mode = ArrivalMode::Bernoulli;
      else if (v == "onoff") p.mode = ArrivalMode::OnOff;
      else if (v) rd.error(f + ".arrival", "expected bernoulli or onoff");
    }
    rd.read(t, f, "mean_burst_frames", p.mean_burst_frames);
    if (const YAML::Node r = t["ramp"]) {
      const std::string g = f + ".ramp";
      if (rd.is_map(r, g)) {
        rd.only_keys(r, g, {"start_load", "duration_ms"});
        LoadRamp ramp;
        rd.read(r, g, "start_load", ramp.start_load);
        rd.read_time(r, g, "duration_ms", ramp.duration, ms);
        if (!(ramp.start_load > 0.0 && ramp.start_load <= 1.0)) rd.error(g + ".start_load", "must be in (0,1]");
        if (ramp.duration.count() <= 0) rd.error(g + ".duration_ms", "must be positive");
        p.ramp = ramp;
      }
    }
    if (!id) continue;
    if (sc.base.traffic.contains(*id)) {
      rd.error(f + ".slice", "traffic for slice '" + sc.slice_name(*id) + "' defined twice");
      continue;
    }
    sc.base.traffic.emplace(*id, std::move(tr));
  }
}

inline void parse_experiment(Reader& rd, const YAML::Node& n, Scenario& sc) {
  const std::string f = "experiment";
  if (!n) {
    rd.error(f, "required");
    return;
  }
  if (!rd.is_map(n, f)) return;
  rd.only_keys(n, f, {"kind", "seeds", "loads", "cdf_loads", "reconfigure", "balance"});
  auto& e = sc.experiment;
  if (!n["kind"]) rd.error(f + ".kind", "required");
  else if (auto k = rd.scalar<std::string>(n["kind"], f + ".kind")) {
    if (*k == "sweep") e.kind = ExperimentKind::Sweep;
    else if (*k == "reconfigure") e.kind = ExperimentKind::Reconfigure;
    else if (*k == "balance") e.kind = ExperimentKind::Balance;
    else rd.error(f + ".kind", "expected sweep, reconfigure or balance");
  }
  rd.read(n, f, "seeds", e.seeds);
  if (e.seeds < 1) rd.error(f + ".seeds", "must be >= 1");
  if (n["loads"]) e.loads = rd.numbers(n["loads"], f + ".loads");
  if (n["cdf_loads"]) e.cdf_loads = rd.numbers(n["cdf_loads"], f + ".cdf_loads");
  for (double l : e.loads)
    if (!(l > 0.0 && l <= 1.0)) rd.error(f + ".loads", "loads must be in (0,1]");
  for (double l : e.cdf_loads)
    if (std::find(e.loads.begin(), e.loads.end(), l) == e.loads.end())
      rd.error(f + ".cdf_loads", "every CDF load must be one of the sweep loads");
  if (e.kind == ExperimentKind::Sweep && e.loads.empty()) rd.error(f + ".loads", "a sweep needs at least one load");
  if (e.kind != ExperimentKind::Sweep && !e.loads.empty()) rd.error(f + ".loads", "only a sweep takes loads");

  if (const YAML::Node r = n["reconfigure"]) {
    const std::string g = f + ".reconfigure";
    if (rd.is_map(r, g)) {
      rd.only_keys(r, g, {"slice", "add", "at_ms"});
      ReconfigureAction a;
      if (auto id = resolve_slice(rd, sc, r["slice"], g + ".slice")) a.slice = *id;
      if (!r["add"]) rd.error(g + ".add", "required");
      else a.add = rd.placements(r["add"], g + ".add");
      rd.read_time(r, g, "at_ms", a.at, ms);
      if (a.at.count() < 0) rd.error(g + ".at_ms", "must be >= 0");
      e.reconfigure = a;
    }
  }
  if (e.kind == ExperimentKind::Reconfigure && !e.reconfigure) rd.error(f + ".reconfigure", "required for kind reconfigure");
  if (e.kind != ExperimentKind::Reconfigure && e.reconfigure) rd.error(f + ".reconfigure", "only valid for kind reconfigure");

  if (const YAML::Node b = n["balance"]) {
    const std::string g = f + ".balance";
    if (e.kind != ExperimentKind::Balance) rd.error(g, "only valid for kind balance");
    if (rd.is_map(b, g)) {
      rd.only_keys(b, g, {"threshold"});
      double th = 1e-5;
      rd.read(b, g, "threshold", th);
      if (!(th >= 0.0 && th <= 1.0)) rd.error(g + ".threshold", "must be in [0,1]");
      e.balance_threshold = th;
    }
  }
}

inline std::vector<Diagnostic> parse_into(const YAML::Node& root, Scenario& sc) {
  Reader rd;
  if (!root.IsMap()) {
    rd.error("", "scenario must be a mapping");
    return rd.diags;
  }
  rd.only_keys(root, "",
               {"schema", "name", "description", "seed", "topology", "dataplane", "control", "run", "slices",
                "traffic", "experiment"});
  int schema = 0;
  if (!root["schema"]) rd.error("schema", "required");
  else rd.read(root, "", "schema", schema);
  if (root["schema"] && schema != kScenarioSchema)
    rd.error("schema", "unsupported schema version " + std::to_string(schema) + " (expected 1)");
  rd.read(root, "", "name", sc.name);
  rd.read(root, "", "description", sc.description);
  rd.read(root, "", "seed", sc.seed);
  if (root["topology"]) parse_topology(rd, root["topology"], sc.base.topology);
  if (root["dataplane"]) parse_dataplane(rd, root["dataplane"], sc.base.dataplane);
  if (root["control"]) parse_control(rd, root["control"], sc.base);
  if (root["run"]) parse_run(rd, root["run"], sc.base);
  parse_slices(rd, root["slices"], sc);
  parse_traffic(rd, root["traffic"], sc);
  parse_experiment(rd, root["experiment"], sc);
  return rd.diags;
}

// Builds (without running) every distinct run configuration, so that any
// library-level rejection surfaces here rather than mid-experiment.
inline std::vector<Diagnostic> check_runs(const Scenario& sc) {
  std::vector<Diagnostic> out;
  std::vector<SimulationConfig> cfgs;
  const auto first = sc.seed;
  if (sc.experiment.kind == ExperimentKind::Sweep) {
    for (double l : sc.experiment.loads) cfgs.push_back(sc.run_config(first, l));
  } else {
    cfgs.push_back(sc.run_config(first, std::nullopt, false));
    cfgs.push_back(sc.run_config(first, std::nullopt, true));
  }
  for (const auto& c : cfgs) {
    try {
      TopologyGraph topo(c.topology);
      c.dataplane.validate();
      c.control.validate();
      Simulation sim(c);
      if (c.reconfigure) {
        const auto& a = *c.reconfigure;
        for (const auto& p : a.add) {
          if (p.rack < 1 || p.rack > topo.tor_count())
            out.push_back({"experiment.reconfigure.add", "rack " + std::to_string(p.rack) + " does not exist"});
          if (p.server < 1 || p.server > topo.config().servers_per_rack)
            out.push_back({"experiment.reconfigure.add", "server " + std::to_string(p.server) + " out of range"});
        }
      }
      for (const auto& [id, tr] : c.traffic) {
        const auto& spec = *std::find_if(c.slices.begin(), c.slices.end(), [&](const SliceSpec& s) { return s.id == id; });
        for (const auto& p : tr.sources)
          if (p.server < 1 || p.server > topo.config().servers_per_rack)
            out.push_back({"traffic", "slice " + spec.name + ": source server " + std::to_string(p.server) + " out of range"});
        const auto srcs = tr.sources.empty() ? spec.placements : tr.sources;
        for (const auto& p : srcs) {
          TrafficProfile prof = tr.profile;
          if (auto it = tr.by_rack.find(p.rack); it != tr.by_rack.end()) {
            prof.destinations = it->second.racks;
            prof.destination_weights = it->second.weights;
          }
          if (prof.destinations.empty()) prof.destinations = spec.racks();
          TrafficSource(p.rack, prof, c.topology.link_rate_bps, c.seed, 0, SimTime{0});
        }
      }
    } catch (const std::exception& e) {
      out.push_back({"", e.what()});
    }
    if (!out.empty()) break;
  }
  return out;
}

}  // namespace detail

// Parses and fully checks a scenario. Throws ScenarioError listing every problem.
inline Scenario parse_scenario(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ScenarioError({{"", "YAML syntax error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg}});
  }
  Scenario sc;
  auto diags = detail::parse_into(root, sc);
  if (diags.empty()) diags = detail::check_runs(sc);
  if (!diags.empty()) throw ScenarioError(std::move(diags));
  return sc;
}

inline std::vector<Diagnostic> validate_scenario(const std::string& yaml_text) {
  try {
    parse_scenario(yaml_text);
  } catch (const ScenarioError& e) {
    return e.diagnostics();
  }
  return {};
}

}  // namespace opsquare
