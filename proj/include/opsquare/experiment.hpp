#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "opsquare/metrics.hpp"
#include "opsquare/scenario.hpp"
#include "opsquare/simulation.hpp"

namespace opsquare {

// FNV-1a over the exact bit patterns of a slice's tally and latency samples.
class Digest {
 public:
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xFF;
      h_ *= 0x100000001B3ull;
    }
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ull;
};

struct SliceSummary {
  SliceId id = 0;
  std::string name;
  int priority = kLowestPriority;
  SliceTally tally;
  TorSliceCounters tor;
  SwitchSliceCounters sw;
  double p5_ns = 0.0, p50_ns = 0.0, p95_ns = 0.0, p99_ns = 0.0;
  std::uint64_t digest = 0;
};

struct RunSummary {
  std::string variant;
  std::optional<double> load;
  std::uint64_t seed = 0;
  SimTime traffic_start{0};
  SimTime measure_start{0};
  SimTime traffic_stop{0};
  SimTime end{0};
  std::uint64_t slots = 0;
  std::uint64_t conservation_checks = 0;
  bool conserved = true;
  FabricTotals totals;
  ArbitrationAudit audit;
  std::uint64_t flowmods = 0;
  std::vector<SliceSummary> slices;

  const SliceSummary& slice(SliceId id) const {
    for (const auto& s : slices)
      if (s.id == id) return s;
    throw std::out_of_range("no slice " + std::to_string(id) + " in run");
  }
};

struct SweepRow {
  SliceId slice = 0;
  std::string name;
  int priority = kLowestPriority;
  double load = 0.0;
  int seeds = 0;
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost_overflow = 0;
  std::uint64_t lost_no_route = 0;
  std::uint64_t nacks = 0;
  double loss_ratio = 0.0;     // pooled over seeds
  double loss_ratio_se = 0.0;  // standard error of the per-seed ratios
  double mean_latency_ns = 0.0;
  double mean_latency_se_ns = 0.0;
  double p5_ns = 0.0, p50_ns = 0.0, p95_ns = 0.0, p99_ns = 0.0, max_ns = 0.0;
};

struct CdfSeries {
  SliceId slice = 0;
  std::string name;
  double load = 0.0;
  std::vector<CdfPoint> points;
};

template <typename T>
struct Tagged {
  std::string variant;
  std::uint64_t seed = 0;
  SimTime traffic_start{0};
  T value;
};

struct FlowRow {
  SliceId slice = 0;
  int dst_tor = 0;
  FlowTrace trace;
};

struct ExperimentResult {
  std::string scenario;
  ExperimentKind kind = ExperimentKind::Sweep;
  std::vector<RunSummary> runs;
  std::vector<SweepRow> sweep;
  std::vector<CdfSeries> cdf;
  std::vector<Tagged<ControlEvent>> events;
  std::vector<Tagged<SliceMetrics>> timeseries;
  std::vector<Tagged<FlowRow>> flows;
};

inline constexpr int kCdfPoints = 1000;

// CDF sampled on an even grid of cumulative fractions k/points, k = 1..points.
inline std::vector<CdfPoint> cdf_grid(std::vector<double> samples, int points = kCdfPoints) {
  if (samples.empty()) throw std::invalid_argument("cdf_grid: no samples");
  std::sort(samples.begin(), samples.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(samples.size());
  for (int k = 1; k <= points; ++k) {
    const double f = static_cast<double>(k) / points;
    const auto idx = static_cast<std::size_t>(std::ceil(f * n - 1e-9));
    out.push_back({samples[std::min(samples.size() - 1, idx == 0 ? 0 : idx - 1)], f});
  }
  return out;
}

inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::min(sorted.size() - 1, idx == 0 ? 0 : idx - 1)];
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline RunSummary summarize(const Scenario& sc, const SimulationResult& r, std::string variant,
                            std::optional<double> load, std::uint64_t seed) {
  RunSummary s;
  s.variant = std::move(variant);
  s.load = load;
  s.seed = seed;
  s.traffic_start = r.traffic_start;
  s.measure_start = r.measure_start;
  s.traffic_stop = r.traffic_stop;
  s.end = r.end;
  s.slots = r.slots_executed;
  s.conservation_checks = r.conservation_checks;
  s.conserved = r.conserved;
  s.totals = r.totals;
  s.audit = r.audit;
  s.flowmods = r.flowmods_sent;
  for (const auto& spec : sc.base.slices) {
    SliceSummary x;
    x.id = spec.id;
    x.name = spec.name;
    x.priority = spec.priority;
    if (auto it = r.tallies.find(spec.id); it != r.tallies.end()) x.tally = it->second;
    if (auto it = r.tor_counters.find(spec.id); it != r.tor_counters.end()) x.tor = it->second;
    if (auto it = r.switch_counters.find(spec.id); it != r.switch_counters.end()) x.sw = it->second;
    Digest d;
    d.add(x.tally.generated);
    d.add(x.tally.delivered);
    d.add(x.tally.lost_buffer_overflow);
    d.add(x.tally.lost_no_route);
    d.add(x.tally.latency_sum_ns);
    if (auto it = r.samples.find(spec.id); it != r.samples.end()) {
      std::vector<double> sorted = it->second;
      for (double v : sorted) d.add(v);
      std::sort(sorted.begin(), sorted.end());
      x.p5_ns = sorted_quantile(sorted, 0.05);
      x.p50_ns = sorted_quantile(sorted, 0.50);
      x.p95_ns = sorted_quantile(sorted, 0.95);
      x.p99_ns = sorted_quantile(sorted, 0.99);
    }
    x.digest = d.value();
    s.slices.push_back(std::move(x));
  }
  return s;
}

// Runs `n` independent tasks on up to `jobs` threads; results land by index.
template <typename R>
std::vector<R> run_parallel(std::size_t n, int jobs, const std::function<R(std::size_t)>& task) {
  std::vector<std::optional<R>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(task(i));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

namespace detail {

struct SweepPoint {
  RunSummary summary;
  std::map<SliceId, std::vector<double>> samples;
};

inline void reduce_sweep_load(const Scenario& sc, double load, std::vector<SweepPoint>& pts, ExperimentResult& out) {
  const bool want_cdf =
      std::find(sc.experiment.cdf_loads.begin(), sc.experiment.cdf_loads.end(), load) != sc.experiment.cdf_loads.end();
  for (const auto& spec : sc.base.slices) {
    SweepRow row;
    row.slice = spec.id;
    row.name = spec.name;
    row.priority = spec.priority;
    row.load = load;
    row.seeds = static_cast<int>(pts.size());
    std::vector<double> ratios, means, pooled;
    double latency_sum = 0.0;
    for (const auto& p : pts) {
      const auto& s = p.summary.slice(spec.id);
      row.generated += s.tally.generated;
      row.delivered += s.tally.delivered;
      row.lost_overflow += s.tally.lost_buffer_overflow;
      row.lost_no_route += s.tally.lost_no_route;
      row.nacks += s.tor.nack_received;
      row.max_ns = std::max(row.max_ns, s.tally.latency_max_ns);
      latency_sum += s.tally.latency_sum_ns;
      ratios.push_back(s.tally.loss_ratio());
      if (s.tally.delivered) means.push_back(s.tally.mean_latency_ns());
      if (auto it = p.samples.find(spec.id); it != p.samples.end())
        pooled.insert(pooled.end(), it->second.begin(), it->second.end());
    }
    row.loss_ratio = row.generated ? static_cast<double>(row.lost_overflow + row.lost_no_route) /
                                         static_cast<double>(row.generated)
                                   : 0.0;
    row.loss_ratio_se = standard_error(ratios);
    row.mean_latency_ns = row.delivered ? latency_sum / static_cast<double>(row.delivered)
                                        : std::numeric_limits<double>::quiet_NaN();
    row.mean_latency_se_ns = standard_error(means);
    if (!pooled.empty()) {
      if (want_cdf) out.cdf.push_back(CdfSeries{spec.id, spec.name, load, cdf_grid(pooled)});
      std::sort(pooled.begin(), pooled.end());
      row.p5_ns = sorted_quantile(pooled, 0.05);
      row.p50_ns = sorted_quantile(pooled, 0.50);
      row.p95_ns = sorted_quantile(pooled, 0.95);
      row.p99_ns = sorted_quantile(pooled, 0.99);
    } else {
      row.p5_ns = row.p50_ns = row.p95_ns = row.p99_ns = std::numeric_limits<double>::quiet_NaN();
    }
    out.sweep.push_back(row);
  }
}

inline void collect_traces(const SimulationResult& r, const RunSummary& s, ExperimentResult& out) {
  for (const auto& e : r.events) out.events.push_back({s.variant, s.seed, r.traffic_start, e});
  for (const auto& m : r.timeseries) out.timeseries.push_back({s.variant, s.seed, r.traffic_start, m});
  for (const auto& [key, tr] : r.flows)
    out.flows.push_back({s.variant, s.seed, r.traffic_start, FlowRow{key.first, key.second, tr}});
}

}  // namespace detail

inline std::pair<std::string, std::string> variant_names(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Reconfigure: return {"baseline", "reconfigured"};
    case ExperimentKind::Balance: return {"static", "balanced"};
    case ExperimentKind::Sweep: break;
  }
  return {"sweep", "sweep"};
}

// Executes every run of the scenario's experiment. Independent runs execute on
// up to `jobs` threads; the result does not depend on `jobs`.
inline ExperimentResult run_experiment(const Scenario& sc, int jobs = 1) {
  ExperimentResult out;
  out.scenario = sc.name;
  out.kind = sc.experiment.kind;
  const auto seeds = sc.seed_list();
  if (sc.experiment.kind == ExperimentKind::Sweep) {
    for (double load : sc.experiment.loads) {
      auto pts = run_parallel<detail::SweepPoint>(seeds.size(), jobs, [&](std::size_t i) {
        Simulation sim(sc.run_config(seeds[i], load));
        auto r = sim.run();
        detail::SweepPoint p{summarize(sc, r, "sweep", load, seeds[i]), std::move(r.samples)};
        return p;
      });
      detail::reduce_sweep_load(sc, load, pts, out);
      for (auto& p : pts) out.runs.push_back(std::move(p.summary));
    }
    return out;
  }
  const auto [off, on] = variant_names(sc.experiment.kind);
  struct Arm {
    RunSummary summary;
    ExperimentResult traces;
  };
  const std::size_t n = seeds.size() * 2;
  auto arms = run_parallel<Arm>(n, jobs, [&](std::size_t i) {
    const auto seed = seeds[i / 2];
    const bool with = i % 2 == 1;
    Simulation sim(sc.run_config(seed, std::nullopt, with));
    const auto r = sim.run();
    Arm a{summarize(sc, r, with ? on : off, std::nullopt, seed), {}};
    detail::collect_traces(r, a.summary, a.traces);
    return a;
  });
  for (auto& a : arms) {
    out.runs.push_back(std::move(a.summary));
    for (auto& e : a.traces.events) out.events.push_back(std::move(e));
    for (auto& m : a.traces.timeseries) out.timeseries.push_back(std::move(m));
    for (auto& f : a.traces.flows) out.flows.push_back(std::move(f));
  }
  return out;
}

}  // namespace opsquare
