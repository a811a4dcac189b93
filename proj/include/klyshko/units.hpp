#pragma once
// Time base: event timestamps are integer picoseconds internally, all public
// interfaces speak seconds.

#include <cmath>
#include <cstdint>

namespace klyshko {

using TimestampPs = std::int64_t;

inline constexpr double kPsPerSecond = 1e12;

inline TimestampPs to_ps(double seconds) {
  return static_cast<TimestampPs>(std::llround(seconds * kPsPerSecond));
}

inline double to_seconds(TimestampPs ps) {
  return static_cast<double>(ps) / kPsPerSecond;
}

}  // namespace klyshko
