#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace opsquare {

// Simulated time. Picosecond resolution keeps every configured constant
// (163.5 ns, 1.28 us, 0.8 ns byte time at 10 Gb/s) integral.
using SimTime = std::chrono::duration<std::int64_t, std::pico>;

inline SimTime from_ns(double ns) { return SimTime{std::llround(ns * 1000.0)}; }
inline SimTime from_us(double us) { return from_ns(us * 1000.0); }
inline SimTime from_ms(double ms) { return from_ns(ms * 1.0e6); }

inline double to_ns(SimTime t) { return static_cast<double>(t.count()) / 1000.0; }
inline double to_us(SimTime t) { return to_ns(t) / 1000.0; }
inline double to_ms(SimTime t) { return to_ns(t) / 1.0e6; }

}  // namespace opsquare
