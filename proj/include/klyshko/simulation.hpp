#pragma once
// Event-level Monte Carlo of one calibration run: Poissonian pair emission,
// independent per-arm survival (efficiency x transmittance), background
// merge, detector timing jitter, stop-channel delay and non-paralyzable dead
// time. Timestamps are integer picoseconds internally so ordering, binning
// and replay are exact; interfaces speak seconds.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "klyshko/random.hpp"
#include "klyshko/units.hpp"

namespace klyshko {

struct ArmModel {
  double efficiency = 1.0;       // detector quantum efficiency, [0, 1]
  double transmittance = 1.0;    // optical-path transmittance, [0, 1]
  double background_rate = 0.0;  // diffused light + dark counts, counts/s
  double dead_time = 0.0;        // non-paralyzable, s

  void validate(const char* arm) const {
    auto unit_range = [&](double v, const char* name) {
      if (!(v >= 0.0) || !(v <= 1.0))
        throw std::invalid_argument(std::string(arm) + "." + name +
                                    " must lie in [0, 1]");
    };
    unit_range(efficiency, "efficiency");
    unit_range(transmittance, "transmittance");
    if (!(background_rate >= 0.0))
      throw std::invalid_argument(std::string(arm) +
                                  ".background_rate must be >= 0");
    if (!(dead_time >= 0.0))
      throw std::invalid_argument(std::string(arm) + ".dead_time must be >= 0");
  }
};

struct ExperimentConfig {
  double pair_rate = 0.0;      // photon pairs emitted per second
  double gate_duration = 1.0;  // s
  ArmModel trigger_arm;
  ArmModel signal_arm;
  double stop_delay = 0.0;        // delay line in the stop (signal) channel, s
  double jitter_sigma = 300e-12;  // per-detector Gaussian timing jitter, s
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(pair_rate >= 0.0))
      throw std::invalid_argument("pair_rate must be >= 0");
    if (!(gate_duration > 0.0))
      throw std::invalid_argument("gate_duration must be > 0");
    if (!(stop_delay >= 0.0))
      throw std::invalid_argument("stop_delay must be >= 0");
    if (!(jitter_sigma >= 0.0))
      throw std::invalid_argument("jitter_sigma must be >= 0");
    trigger_arm.validate("trigger_arm");
    signal_arm.validate("signal_arm");
  }
};

// Ground-truth tallies of one arm, for oracle tests.
struct ArmTruth {
  std::uint64_t pair_photons = 0;  // photons offered to the arm
  std::uint64_t surviving = 0;     // kept by the survival draw
  std::uint64_t background = 0;    // background events generated
  std::uint64_t coalesced = 0;     // same-picosecond events merged into one
  std::uint64_t suppressed = 0;    // removed by detector dead time
  std::uint64_t detected = 0;      // final stream size
};

struct RunTruth {
  std::uint64_t pairs_emitted = 0;
  ArmTruth trigger;
  ArmTruth signal;
};

struct ChannelTimestamps {
  std::vector<TimestampPs> trigger;  // strictly increasing
  std::vector<TimestampPs> signal;   // strictly increasing
  RunTruth truth;
};

// Homogeneous Poisson arrivals on [0, duration), sorted ascending.
inline std::vector<TimestampPs> poisson_process(double rate, double duration,
                                                Rng& rng) {
  if (!(rate >= 0.0)) throw std::invalid_argument("poisson_process: rate < 0");
  if (!(duration > 0.0))
    throw std::invalid_argument("poisson_process: duration must be > 0");
  std::vector<TimestampPs> out;
  if (rate == 0.0) return out;
  out.reserve(static_cast<std::size_t>(rate * duration * 1.05) + 16);
  double t = rng.exponential(rate);
  while (t < duration) {
    out.push_back(to_ps(t));
    t += rng.exponential(rate);
  }
  return out;
}

// Independent Bernoulli thinning with the given survival probability;
// order preserved.
inline std::vector<TimestampPs> thin(std::span<const TimestampPs> events,
                                     double survival_probability, Rng& rng) {
  if (!(survival_probability >= 0.0) || !(survival_probability <= 1.0))
    throw std::invalid_argument("thin: probability must lie in [0, 1]");
  std::vector<TimestampPs> out;
  if (survival_probability == 0.0 || events.empty()) return out;
  if (survival_probability == 1.0)
    return std::vector<TimestampPs>(events.begin(), events.end());
  out.reserve(static_cast<std::size_t>(
      static_cast<double>(events.size()) * survival_probability * 1.05 + 16));
  if (survival_probability < 0.25) {
    // Jump between kept elements; equivalent to per-event draws but O(kept).
    std::uint64_t i = rng.geometric_skips(survival_probability);
    while (i < events.size()) {
      out.push_back(events[i]);
      i += 1 + rng.geometric_skips(survival_probability);
    }
  } else {
    for (const TimestampPs t : events)
      if (rng.bernoulli(survival_probability)) out.push_back(t);
  }
  return out;
}

// Non-paralyzable dead-time filter: an event is kept iff it occurs at least
// dead_time after the last kept event; the first event is always kept.
inline std::vector<TimestampPs> apply_dead_time(
    std::span<const TimestampPs> events, double dead_time) {
  if (!(dead_time >= 0.0))
    throw std::invalid_argument("apply_dead_time: dead_time must be >= 0");
  if (!std::is_sorted(events.begin(), events.end()))
    throw std::invalid_argument("apply_dead_time: input not sorted");
  const TimestampPs dead_ps = to_ps(dead_time);
  if (dead_ps == 0)
    return std::vector<TimestampPs>(events.begin(), events.end());
  std::vector<TimestampPs> out;
  out.reserve(events.size());
  TimestampPs last = std::numeric_limits<TimestampPs>::min();
  for (const TimestampPs t : events) {
    if (out.empty() || t - last >= dead_ps) {
      out.push_back(t);
      last = t;
    }
  }
  return out;
}

// Merge two sorted streams into one sorted stream (duplicates kept).
inline std::vector<TimestampPs> merge_streams(std::span<const TimestampPs> a,
                                              std::span<const TimestampPs> b) {
  std::vector<TimestampPs> out(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), out.begin());
  return out;
}

namespace detail {

// Shared per-arm pipeline: survival thinning, background merge, jitter,
// coalescing of same-tick events, delay shift, dead time.
inline std::vector<TimestampPs> detect_arm(
    std::span<const TimestampPs> pair_times, const ArmModel& arm,
    double gate_duration, double jitter_sigma, TimestampPs delay_ps,
    Rng& thin_rng, Rng& bg_rng, Rng& jitter_rng, ArmTruth& truth) {
  truth.pair_photons = pair_times.size();
  std::vector<TimestampPs> kept =
      thin(pair_times, arm.efficiency * arm.transmittance, thin_rng);
  truth.surviving = kept.size();

  std::vector<TimestampPs> background =
      poisson_process(arm.background_rate, gate_duration, bg_rng);
  truth.background = background.size();

  std::vector<TimestampPs> stream = merge_streams(kept, background);
  kept.clear();
  kept.shrink_to_fit();

  if (jitter_sigma > 0.0 && !stream.empty()) {
    const double jitter_ps = jitter_sigma * kPsPerSecond;
    const TimestampPs gate_ps = to_ps(gate_duration);
    for (TimestampPs& t : stream) {
      t += static_cast<TimestampPs>(
          std::llround(jitter_rng.normal() * jitter_ps));
      t = std::clamp<TimestampPs>(t, 0, gate_ps);
    }
    std::sort(stream.begin(), stream.end());
  }

  // Events landing on the same picosecond tick are one pulse.
  const auto unique_end = std::unique(stream.begin(), stream.end());
  truth.coalesced = static_cast<std::uint64_t>(
      std::distance(unique_end, stream.end()));
  stream.erase(unique_end, stream.end());

  if (delay_ps != 0)
    for (TimestampPs& t : stream) t += delay_ps;

  std::vector<TimestampPs> detected = apply_dead_time(stream, arm.dead_time);
  truth.suppressed = stream.size() - detected.size();
  truth.detected = detected.size();
  return detected;
}

}  // namespace detail

// Full run: pair emission, then per arm survival -> background -> jitter ->
// (signal only) stop delay -> dead time. Identical (config, seed) gives
// bit-identical output.
inline ChannelTimestamps simulate_run(const ExperimentConfig& config) {
  config.validate();
  Rng pair_rng(derive_seed(config.rng_seed, 1));
  Rng trig_thin_rng(derive_seed(config.rng_seed, 2));
  Rng sig_thin_rng(derive_seed(config.rng_seed, 3));
  Rng trig_bg_rng(derive_seed(config.rng_seed, 4));
  Rng sig_bg_rng(derive_seed(config.rng_seed, 5));
  Rng trig_jitter_rng(derive_seed(config.rng_seed, 6));
  Rng sig_jitter_rng(derive_seed(config.rng_seed, 7));

  std::vector<TimestampPs> pairs =
      poisson_process(config.pair_rate, config.gate_duration, pair_rng);

  ChannelTimestamps out;
  out.truth.pairs_emitted = pairs.size();
  out.trigger = detail::detect_arm(pairs, config.trigger_arm,
                                   config.gate_duration, config.jitter_sigma,
                                   0, trig_thin_rng, trig_bg_rng,
                                   trig_jitter_rng, out.truth.trigger);
  out.signal = detail::detect_arm(pairs, config.signal_arm,
                                  config.gate_duration, config.jitter_sigma,
                                  to_ps(config.stop_delay), sig_thin_rng,
                                  sig_bg_rng, sig_jitter_rng,
                                  out.truth.signal);
  return out;
}

// Plain-text event dump: header with the config digest, then one event per
// line as "<channel tag> <picosecond timestamp>", merged chronologically.
inline void dump_timestamps(std::ostream& os, const ChannelTimestamps& ch,
                            std::uint64_t config_digest) {
  os << "# config_digest=" << config_digest << "\n";
  std::size_t i = 0, j = 0;
  while (i < ch.trigger.size() || j < ch.signal.size()) {
    const bool take_trigger =
        j >= ch.signal.size() ||
        (i < ch.trigger.size() && ch.trigger[i] <= ch.signal[j]);
    if (take_trigger)
      os << "T " << ch.trigger[i++] << "\n";
    else
      os << "S " << ch.signal[j++] << "\n";
  }
}

}  // namespace klyshko
