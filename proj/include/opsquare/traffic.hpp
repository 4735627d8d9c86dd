#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "opsquare/errors.hpp"
#include "opsquare/packet.hpp"
#include "opsquare/time.hpp"

namespace opsquare {

enum class ArrivalMode : std::uint8_t {
  // Memoryless: geometric idle gaps between frames (Bernoulli trial per byte time).
  Bernoulli,
  // Back-to-back bursts of geometrically many frames separated by idle gaps.
  OnOff,
};

// Linear ramp from `start_load` to the profile's load over `duration`, then hold.
struct LoadRamp {
  double start_load = 0.1;
  SimTime duration{0};
};

struct TrafficProfile {
  double load = 0.5;  // fraction of the server line rate
  std::uint32_t min_frame_bytes = kMinFrameBytes;
  std::uint32_t max_frame_bytes = kMaxFrameBytes;
  std::vector<int> destinations;  // candidate destination ToRs (flat indices)
  std::vector<double> destination_weights;  // empty: uniform
  ArrivalMode mode = ArrivalMode::Bernoulli;
  double mean_burst_frames = 16.0;
  std::optional<LoadRamp> ramp;

  void validate() const {
    if (!(load > 0.0 && load <= 1.0)) throw ConfigError("traffic.load must be in (0,1]");
    if (min_frame_bytes < kMinFrameBytes || max_frame_bytes > kMaxFrameBytes || min_frame_bytes > max_frame_bytes)
      throw ConfigError("traffic frame sizes must lie within [64,1518] bytes");
    if (!destination_weights.empty() && destination_weights.size() != destinations.size())
      throw ConfigError("traffic.destination_weights must match destinations");
    for (double w : destination_weights)
      if (!(w >= 0.0)) throw ConfigError("traffic.destination_weights must be nonnegative");
    if (mode == ArrivalMode::OnOff && !(mean_burst_frames >= 1.0))
      throw ConfigError("traffic.mean_burst_frames must be >= 1");
    if (ramp && !(ramp->start_load > 0.0 && ramp->start_load <= 1.0))
      throw ConfigError("traffic.ramp.start_load must be in (0,1]");
  }

  double mean_frame_bytes() const { return (min_frame_bytes + max_frame_bytes) / 2.0; }

  double load_at(SimTime since_start) const {
    if (!ramp || ramp->duration.count() <= 0 || since_start >= ramp->duration) return load;
    const double f = static_cast<double>(since_start.count()) / static_cast<double>(ramp->duration.count());
    return ramp->start_load + (load - ramp->start_load) * f;
  }
};

struct FrameArrival {
  SimTime time{0};  // frame fully received at the ToR
  std::uint32_t size_bytes = 0;
  int dst_tor = 0;
  std::uint64_t seq = 0;
};

// One server's frame stream. Fully determined by (seed, stream).
class TrafficSource {
 public:
  TrafficSource(int src_tor, TrafficProfile profile, double link_rate_bps, std::uint64_t seed,
                std::uint64_t stream, SimTime start)
      : src_tor_(src_tor),
        profile_(std::move(profile)),
        byte_time_(SimTime{std::llround(8.0e12 / link_rate_bps)}),
        start_(start),
        cursor_(start),
        size_dist_(profile_.min_frame_bytes, profile_.max_frame_bytes) {
    profile_.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x0F5Au};
    rng_.seed(seq);
    for (std::size_t i = 0; i < profile_.destinations.size(); ++i) {
      if (profile_.destinations[i] == src_tor_) continue;
      dests_.push_back(profile_.destinations[i]);
      weights_.push_back(profile_.destination_weights.empty() ? 1.0 : profile_.destination_weights[i]);
    }
    if (dests_.empty()) throw ConfigError("traffic source has no destination other than its own rack");
    dest_dist_ = std::discrete_distribution<std::size_t>(weights_.begin(), weights_.end());
  }

  int src_tor() const { return src_tor_; }
  const TrafficProfile& profile() const { return profile_; }
  SimTime byte_time() const { return byte_time_; }

  FrameArrival next() {
    const double load = profile_.load_at(cursor_ - start_);
    const double mean_size = profile_.mean_frame_bytes();
    std::int64_t gap_bytes = 0;
    if (profile_.mode == ArrivalMode::Bernoulli) {
      gap_bytes = draw_gap(mean_size * (1.0 - load) / load);
    } else {
      if (burst_left_ == 0) {
        std::geometric_distribution<std::int64_t> burst(1.0 / profile_.mean_burst_frames);
        burst_left_ = 1 + burst(rng_);
        gap_bytes = draw_gap(profile_.mean_burst_frames * mean_size * (1.0 - load) / load);
      }
      --burst_left_;
    }
    const std::uint32_t size = size_dist_(rng_);
    cursor_ += byte_time_ * (gap_bytes + size);
    FrameArrival a;
    a.time = cursor_;
    a.size_bytes = size;
    a.dst_tor = dests_[dest_dist_(rng_)];
    a.seq = seq_++;
    return a;
  }

 private:
  std::int64_t draw_gap(double mean_gap_bytes) {
    if (mean_gap_bytes <= 0.0) return 0;
    std::geometric_distribution<std::int64_t> g(1.0 / (1.0 + mean_gap_bytes));
    return g(rng_);
  }

  int src_tor_;
  TrafficProfile profile_;
  SimTime byte_time_;
  SimTime start_;
  SimTime cursor_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::uint32_t> size_dist_;
  std::vector<int> dests_;
  std::vector<double> weights_;
  std::discrete_distribution<std::size_t> dest_dist_;
  std::int64_t burst_left_ = 0;
  std::uint64_t seq_ = 0;
};

// All arrivals of one source in [0, duration).
inline std::vector<FrameArrival> generate(const TrafficProfile& profile, int src_tor, double link_rate_bps,
                                          SimTime duration, std::uint64_t seed, std::uint64_t stream = 0) {
  if (duration.count() <= 0) throw ConfigError("generate: duration must be positive");
  TrafficSource src(src_tor, profile, link_rate_bps, seed, stream, SimTime{0});
  std::vector<FrameArrival> out;
  for (auto a = src.next(); a.time < duration; a = src.next()) out.push_back(a);
  return out;
}

}  // namespace opsquare
