#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/packet.hpp"

namespace opsquare {

enum class LossCause : std::uint8_t { BufferOverflow, NoRoute };

// Uniform reservoir (Algorithm R). Below capacity every sample is kept.
class LatencyReservoir {
 public:
  explicit LatencyReservoir(std::size_t capacity = 1'000'000, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {}

  void add(double v) {
    ++seen_;
    if (samples_.size() < capacity_) {
      samples_.push_back(v);
      return;
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const auto j = pick(rng_);
    if (j < capacity_) samples_[j] = v;
  }

  const std::vector<double>& samples() const { return samples_; }
  std::uint64_t seen() const { return seen_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mt19937_64 rng_;
  std::vector<double> samples_;
  std::uint64_t seen_ = 0;
};

struct CdfPoint {
  double latency_ns = 0.0;
  double fraction = 0.0;
};

// Right-continuous empirical CDF: one point per distinct sample value.
inline std::vector<CdfPoint> latency_cdf(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("latency_cdf: no samples");
  std::sort(samples.begin(), samples.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    cdf.push_back({samples[i], static_cast<double>(i + 1) / n});
  }
  cdf.back().fraction = 1.0;
  return cdf;
}

inline double quantile(std::vector<double> samples, double q) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(samples.begin(), samples.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size()))) ;
  return samples[std::min(samples.size() - 1, idx == 0 ? 0 : idx - 1)];
}

struct SliceTally {
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost_buffer_overflow = 0;
  std::uint64_t lost_no_route = 0;
  double latency_sum_ns = 0.0;
  double latency_min_ns = std::numeric_limits<double>::infinity();
  double latency_max_ns = 0.0;

  std::uint64_t lost() const { return lost_buffer_overflow + lost_no_route; }
  // lost / (lost + delivered + pending) where pending frames are still in the fabric.
  double loss_ratio() const { return generated == 0 ? 0.0 : static_cast<double>(lost()) / static_cast<double>(generated); }
  double mean_latency_ns() const {
    return delivered == 0 ? std::numeric_limits<double>::quiet_NaN() : latency_sum_ns / static_cast<double>(delivered);
  }
};

// Per-slice loss/latency accounting for frames inside the measurement window.
class MetricsRecord {
 public:
  explicit MetricsRecord(std::size_t reservoir_capacity = 1'000'000, std::uint64_t seed = 0)
      : reservoir_capacity_(reservoir_capacity), seed_(seed) {}

  void register_slice(SliceId s) {
    if (slices_.contains(s)) return;
    slices_.emplace(s, Entry{SliceTally{}, LatencyReservoir(reservoir_capacity_, seed_ ^ (0x9E37ull * (s + 1)))});
  }

  bool knows(SliceId s) const { return slices_.contains(s); }

  void record_generated(SliceId s) { ++entry(s).tally.generated; }

  void record_delivery(SliceId s, double latency_ns) {
    if (!(latency_ns > 0.0)) throw AccountingError("latency sample must be positive");
    auto& e = entry(s);
    ++e.tally.delivered;
    e.tally.latency_sum_ns += latency_ns;
    e.tally.latency_min_ns = std::min(e.tally.latency_min_ns, latency_ns);
    e.tally.latency_max_ns = std::max(e.tally.latency_max_ns, latency_ns);
    e.reservoir.add(latency_ns);
  }

  void record_loss(SliceId s, LossCause cause, std::uint64_t frames = 1) {
    auto& t = entry(s).tally;
    if (cause == LossCause::BufferOverflow) t.lost_buffer_overflow += frames;
    else t.lost_no_route += frames;
  }

  const SliceTally& tally(SliceId s) const { return entry(s).tally; }
  const std::vector<double>& samples(SliceId s) const { return entry(s).reservoir.samples(); }
  std::vector<CdfPoint> cdf(SliceId s) const { return latency_cdf(samples(s)); }

  std::vector<SliceId> slices() const {
    std::vector<SliceId> out;
    for (const auto& [s, e] : slices_) out.push_back(s);
    return out;
  }

 private:
  struct Entry {
    SliceTally tally;
    LatencyReservoir reservoir;
  };

  Entry& entry(SliceId s) {
    auto it = slices_.find(s);
    if (it == slices_.end()) throw AccountingError("metrics recorded for unknown slice " + std::to_string(s));
    return it->second;
  }
  const Entry& entry(SliceId s) const {
    auto it = slices_.find(s);
    if (it == slices_.end()) throw AccountingError("metrics requested for unknown slice " + std::to_string(s));
    return it->second;
  }

  std::size_t reservoir_capacity_;
  std::uint64_t seed_;
  std::map<SliceId, Entry> slices_;
};

}  // namespace opsquare
