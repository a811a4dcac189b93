#pragma once
// Models of the four coincidence acquisition chains: fast AND gate, TAC+SCA
// with and without valid-start output, and the high-resolution time-interval
// counter. Each turns a pair of detector timestamp streams into the measured
// quantities of a calibration run (CountsRecord).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "klyshko/calibration.hpp"
#include "klyshko/simulation.hpp"
#include "klyshko/units.hpp"

namespace klyshko {

// Start-stop streams ran out before the requested number of pairs was
// collected (fixed-pair-count acquisitions).
class insufficient_data_error : public std::runtime_error {
 public:
  insufficient_data_error(const std::string& what, std::uint64_t collected)
      : std::runtime_error(what), pairs_collected(collected) {}
  std::uint64_t pairs_collected;
};

class no_peak_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// How the coincidence peak window is chosen on a histogram.
struct PeakPolicy {
  enum class Mode { threshold, fixed };
  Mode mode = Mode::threshold;
  double threshold_sigma = 5.0;  // bins above background + k*sigma join
  int min_bins = 3;              // narrowest window around the maximum
  int pad_bins = 8;          // extra bins kept on each side of the window
  int guard_bins = 2;        // neighbours excluded from the background
  int fixed_low_bin = 0;     // fixed mode: inclusive bin range
  int fixed_high_bin = 0;
};

struct AcquisitionSystem {
  SystemKind kind = SystemKind::and_gate;

  // AND gate
  double coincidence_window = 4e-9;  // full window width, s
  double accidental_offset = 0.0;    // delayed-coincidence shift; 0 = 100x window

  // TAC
  double tac_range = 50e-9;          // longest convertible interval, s
  double tac_conversion_time = 0.0;  // busy time after each conversion, s
  double mca_bin_width = 100e-12;    // histogram bin, s
  double sca_low = -1.0;   // fixed SCA window in time units, s; < 0 = use peak
  double sca_high = -1.0;  // policy below

  // TIC
  double tic_resolution = 25e-12;  // interval quantization (floor), s
  double tic_bin_width = 100e-12;  // histogram bin, s
  std::int64_t tic_pair_target = 10000;
  int tic_subsamples = 5;
  double tic_range = 20e-6;       // longest measurable interval, s
  double tic_hist_range = 50e-9;  // histogram span, s

  PeakPolicy peak;

  void validate() const {
    switch (kind) {
      case SystemKind::and_gate:
        if (!(coincidence_window > 0.0))
          throw std::invalid_argument("and-gate window must be > 0");
        break;
      case SystemKind::tac_no_valid_start:
      case SystemKind::tac_valid_start:
        if (!(tac_range > 0.0) || !(tac_conversion_time >= 0.0))
          throw std::invalid_argument("tac timing must be positive");
        if (!(mca_bin_width > 0.0) || !(tac_range >= mca_bin_width))
          throw std::invalid_argument("tac histogram binning invalid");
        break;
      case SystemKind::tic:
        if (!(tic_resolution > 0.0) || !(tic_bin_width > 0.0))
          throw std::invalid_argument("tic resolution/bin width must be > 0");
        if (!(tic_range > 0.0) || !(tic_hist_range >= tic_bin_width))
          throw std::invalid_argument("tic range invalid");
        if (tic_pair_target <= 0 || tic_subsamples < 2 ||
            tic_pair_target % tic_subsamples != 0)
          throw std::invalid_argument(
              "tic pair target must divide into >= 2 subsamples");
        break;
    }
  }
};

struct IntervalHistogram {
  double bin_width = 0.0;  // s
  double origin = 0.0;     // s, left edge of bin 0
  std::vector<std::uint64_t> counts;
  std::uint64_t total_pairs = 0;  // intervals offered, including out-of-range
  std::uint64_t dropped = 0;      // intervals outside [origin, origin + span)
};

struct PeakAnalysis {
  int low_bin = 0;   // inclusive window
  int high_bin = 0;
  std::uint64_t n_in_peak = 0;
  Quantity background_per_bin;  // mean content of off-window bins
  Quantity n_accidental;        // background_per_bin x window width
  Quantity n_coincidence;       // in-peak total, before accidental subtraction
};

// ---------------------------------------------------------------------------
// AND gate

struct AndGateCounts {
  std::uint64_t n_coincidence = 0;
  std::uint64_t n_accidental = 0;
};

namespace detail {

// Triggers with at least one unconsumed signal event within +-window/2 of
// (trigger + center_offset); greedy nearest match, each signal event
// consumable once.
inline std::uint64_t count_window_matches(std::span<const TimestampPs> trigger,
                                          std::span<const TimestampPs> signal,
                                          TimestampPs window_ps,
                                          TimestampPs center_offset_ps) {
  const TimestampPs half = window_ps / 2;
  std::vector<std::uint8_t> used(signal.size(), 0);
  std::uint64_t matches = 0;
  std::size_t lo = 0;
  for (const TimestampPs t : trigger) {
    const TimestampPs center = t + center_offset_ps;
    while (lo < signal.size() && signal[lo] < center - half) ++lo;
    std::size_t best = signal.size();
    TimestampPs best_dist = std::numeric_limits<TimestampPs>::max();
    for (std::size_t k = lo; k < signal.size() && signal[k] <= center + half;
         ++k) {
      if (used[k]) continue;
      const TimestampPs dist = std::abs(signal[k] - center);
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    if (best != signal.size()) {
      used[best] = 1;
      ++matches;
    }
  }
  return matches;
}

}  // namespace detail

// Coincidences within the gate window, plus the delayed-coincidence estimate
// of the accidental counts (same match repeated with the signal stream
// shifted far outside the window).
inline AndGateCounts and_gate(std::span<const TimestampPs> trigger,
                              std::span<const TimestampPs> signal,
                              double window, double accidental_offset = 0.0) {
  if (!(window > 0.0)) throw std::invalid_argument("and_gate: window must be > 0");
  const TimestampPs window_ps = to_ps(window);
  TimestampPs offset_ps = to_ps(accidental_offset);
  if (offset_ps == 0) offset_ps = 100 * window_ps;
  AndGateCounts out;
  out.n_coincidence = detail::count_window_matches(trigger, signal, window_ps, 0);
  out.n_accidental =
      detail::count_window_matches(trigger, signal, window_ps, offset_ps);
  return out;
}

// ---------------------------------------------------------------------------
// TAC / TIC start-stop pairing

struct TacResult {
  std::vector<TimestampPs> intervals;  // stop - start, each <= range
  std::uint64_t n_valid_starts = 0;    // starts that armed the converter
  std::uint64_t n_timed_out = 0;       // armed starts with no stop in range
};

// Sequential start-stop state machine. An idle converter arms on a trigger
// (start) pulse; the next signal (stop) pulse within `range` closes the
// interval, after which the converter is busy for `conversion_time`. Starts
// arriving while armed or busy are ignored. A start whose stop never arrives
// within range frees the converter at start + range + conversion_time.
inline TacResult tac_convert(std::span<const TimestampPs> trigger,
                             std::span<const TimestampPs> signal, double range,
                             double conversion_time) {
  if (!(range > 0.0)) throw std::invalid_argument("tac_convert: range must be > 0");
  if (!(conversion_time >= 0.0))
    throw std::invalid_argument("tac_convert: conversion_time must be >= 0");
  const TimestampPs range_ps = to_ps(range);
  const TimestampPs conv_ps = to_ps(conversion_time);

  TacResult out;
  std::size_t j = 0;
  TimestampPs free_at = std::numeric_limits<TimestampPs>::min();
  for (const TimestampPs start : trigger) {
    if (start < free_at) continue;  // armed or converting: start ignored
    ++out.n_valid_starts;
    while (j < signal.size() && signal[j] < start) ++j;
    if (j < signal.size() && signal[j] - start <= range_ps) {
      out.intervals.push_back(signal[j] - start);
      free_at = signal[j] + conv_ps;
      ++j;  // stop consumed
    } else {
      ++out.n_timed_out;
      free_at = start + range_ps + conv_ps;
    }
  }
  return out;
}

inline TacResult tac_convert(std::span<const TimestampPs> trigger,
                             std::span<const TimestampPs> signal,
                             const AcquisitionSystem& sys) {
  return tac_convert(trigger, signal, sys.tac_range, sys.tac_conversion_time);
}

// ---------------------------------------------------------------------------
// Histogramming and peak analysis

// counts[i] = number of intervals in [i*bin_width, (i+1)*bin_width); only
// complete bins inside [0, range) are kept, the rest are tallied as dropped.
inline IntervalHistogram build_histogram(std::span<const TimestampPs> intervals,
                                         double bin_width, double range) {
  if (!(bin_width > 0.0) || !(range >= bin_width))
    throw std::invalid_argument("build_histogram: need range >= bin_width > 0");
  const TimestampPs bin_ps = to_ps(bin_width);
  const auto n_bins = static_cast<std::size_t>(to_ps(range) / bin_ps);
  IntervalHistogram h;
  h.bin_width = bin_width;
  h.counts.assign(n_bins, 0);
  h.total_pairs = intervals.size();
  for (const TimestampPs d : intervals) {
    if (d < 0) {
      ++h.dropped;
      continue;
    }
    const auto idx = static_cast<std::size_t>(d / bin_ps);
    if (idx < n_bins)
      ++h.counts[idx];
    else
      ++h.dropped;
  }
  return h;
}

namespace detail {

inline double median_of(std::vector<std::uint64_t> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return static_cast<double>(v[mid]);
}

// Window selection half of analyze_peak, reusable across subsamples.
inline std::pair<int, int> select_peak_window(const IntervalHistogram& h,
                                              const PeakPolicy& policy) {
  const int n = static_cast<int>(h.counts.size());
  if (policy.mode == PeakPolicy::Mode::fixed) {
    if (policy.fixed_low_bin > policy.fixed_high_bin ||
        policy.fixed_low_bin < 0 || policy.fixed_high_bin >= n)
      throw std::invalid_argument("analyze_peak: fixed window out of range");
    return {policy.fixed_low_bin, policy.fixed_high_bin};
  }
  const int peak_bin = static_cast<int>(std::distance(
      h.counts.begin(), std::max_element(h.counts.begin(), h.counts.end())));
  const double background = median_of(h.counts);
  const double threshold =
      background +
      policy.threshold_sigma * std::sqrt(std::max(background, 1.0));
  int lo = peak_bin, hi = peak_bin;
  while (lo > 0 && static_cast<double>(h.counts[lo - 1]) > threshold) --lo;
  while (hi + 1 < n && static_cast<double>(h.counts[hi + 1]) > threshold) ++hi;
  while (hi - lo + 1 < policy.min_bins) {
    if (lo > 0) --lo;
    if (hi - lo + 1 < policy.min_bins && hi + 1 < n) ++hi;
    if (lo == 0 && hi == n - 1) break;
  }
  lo = std::max(0, lo - policy.pad_bins);
  hi = std::min(n - 1, hi + policy.pad_bins);
  return {lo, hi};
}

}  // namespace detail

// Locate the coincidence peak, estimate the flat accidental background from
// the off-window bins (a guard band next to the window is excluded), and
// report the in-peak total. Accidental subtraction itself happens in the
// estimator.
inline PeakAnalysis analyze_peak(const IntervalHistogram& h,
                                 const PeakPolicy& policy) {
  if (h.counts.empty() ||
      std::all_of(h.counts.begin(), h.counts.end(),
                  [](std::uint64_t c) { return c == 0; }))
    throw no_peak_error("analyze_peak: histogram has no counts");

  PeakAnalysis out;
  const auto [lo, hi] = detail::select_peak_window(h, policy);
  out.low_bin = lo;
  out.high_bin = hi;

  std::uint64_t in_peak = 0, outside = 0;
  std::size_t n_outside = 0;
  const int n = static_cast<int>(h.counts.size());
  for (int i = 0; i < n; ++i) {
    if (i >= lo && i <= hi) {
      in_peak += h.counts[i];
    } else if (i < lo - policy.guard_bins || i > hi + policy.guard_bins) {
      outside += h.counts[i];
      ++n_outside;
    }
  }
  out.n_in_peak = in_peak;
  const double width = static_cast<double>(hi - lo + 1);
  if (n_outside > 0) {
    const double mean = static_cast<double>(outside) / n_outside;
    const double mean_sigma = std::sqrt(static_cast<double>(outside)) / n_outside;
    out.background_per_bin = {mean, mean_sigma};
    out.n_accidental = {mean * width, mean_sigma * width};
  } else {
    out.background_per_bin = {0.0, 0.0};
    out.n_accidental = {0.0, 0.0};
  }
  out.n_coincidence = {static_cast<double>(in_peak),
                       std::sqrt(static_cast<double>(in_peak))};
  return out;
}

// ---------------------------------------------------------------------------
// Time-interval counter

struct TicSubsample {
  IntervalHistogram histogram;
  TimestampPs span_begin = 0;  // arming time of the first pair
  TimestampPs span_end = 0;    // closing stop of the last pair
  std::uint64_t pairs = 0;
};

struct TicResult {
  std::vector<TicSubsample> subsamples;
  IntervalHistogram aggregate;  // all pairs, for window placement
};

// Collect start-stop intervals (pairing rule of tac_convert with zero
// conversion time) until tic_pair_target pairs, quantized to tic_resolution
// (floor), split into tic_subsamples equal batches.
inline TicResult tic_acquire(std::span<const TimestampPs> trigger,
                             std::span<const TimestampPs> signal,
                             const AcquisitionSystem& sys) {
  sys.validate();
  const TimestampPs range_ps = to_ps(sys.tic_range);
  const TimestampPs res_ps = to_ps(sys.tic_resolution);
  const std::int64_t per_subsample = sys.tic_pair_target / sys.tic_subsamples;

  TicResult out;
  std::vector<TimestampPs> quantized;
  quantized.reserve(static_cast<std::size_t>(sys.tic_pair_target));

  std::size_t j = 0;
  TimestampPs free_at = std::numeric_limits<TimestampPs>::min();
  std::int64_t collected = 0;
  TimestampPs sub_begin = 0, last_close = 0;
  std::vector<TimestampPs> sub_intervals;
  sub_intervals.reserve(static_cast<std::size_t>(per_subsample));

  auto flush_subsample = [&]() {
    TicSubsample s;
    s.histogram =
        build_histogram(sub_intervals, sys.tic_bin_width, sys.tic_hist_range);
    s.span_begin = sub_begin;
    s.span_end = last_close;
    s.pairs = sub_intervals.size();
    out.subsamples.push_back(std::move(s));
    sub_intervals.clear();
  };

  for (const TimestampPs start : trigger) {
    if (collected == sys.tic_pair_target) break;
    if (start < free_at) continue;
    while (j < signal.size() && signal[j] < start) ++j;
    if (j >= signal.size()) break;  // no further stop will ever arrive
    if (signal[j] - start > range_ps) {
      free_at = start + range_ps;
      continue;
    }
    if (sub_intervals.empty()) sub_begin = start;
    const TimestampPs interval = signal[j] - start;
    quantized.push_back((interval / res_ps) * res_ps);
    sub_intervals.push_back(quantized.back());
    last_close = signal[j];
    free_at = signal[j];
    ++j;
    ++collected;
    if (static_cast<std::int64_t>(sub_intervals.size()) == per_subsample)
      flush_subsample();
  }
  if (collected < sys.tic_pair_target)
    throw insufficient_data_error(
        "tic_acquire: streams exhausted after " + std::to_string(collected) +
            " of " + std::to_string(sys.tic_pair_target) + " pairs",
        static_cast<std::uint64_t>(collected));

  out.aggregate =
      build_histogram(quantized, sys.tic_bin_width, sys.tic_hist_range);
  return out;
}

// ---------------------------------------------------------------------------
// Unified acquisition front-end

struct AcquisitionResult {
  CountsRecord counts;
  std::vector<IntervalHistogram> histograms;  // MCA, or one per TIC subsample
  std::optional<PeakAnalysis> peak;
  std::uint64_t n_valid_starts = 0;
};

namespace detail {

inline Quantity poisson_count(std::uint64_t n) {
  return {static_cast<double>(n), std::sqrt(static_cast<double>(n))};
}

// Mean over subsample values with the dispersion-based standard uncertainty
// of the mean (sample std / sqrt(n)).
inline Quantity dispersion_mean(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  const double std_mean = values.size() > 1
                              ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n)
                              : 0.0;
  return {mean, std_mean};
}

inline std::uint64_t events_in(std::span<const TimestampPs> ts, TimestampPs lo,
                               TimestampPs hi) {
  return static_cast<std::uint64_t>(
      std::distance(std::lower_bound(ts.begin(), ts.end(), lo),
                    std::lower_bound(ts.begin(), ts.end(), hi)));
}

inline PeakPolicy effective_policy(const AcquisitionSystem& sys,
                                   double bin_width, std::size_t n_bins) {
  PeakPolicy p = sys.peak;
  if (sys.sca_low >= 0.0 && sys.sca_high > sys.sca_low) {
    p.mode = PeakPolicy::Mode::fixed;
    p.fixed_low_bin = static_cast<int>(to_ps(sys.sca_low) / to_ps(bin_width));
    p.fixed_high_bin = std::min(
        static_cast<int>(n_bins) - 1,
        static_cast<int>(to_ps(sys.sca_high) / to_ps(bin_width)));
  }
  return p;
}

}  // namespace detail

// Run the kind-specific pipeline on one pair of detector streams.
//
// N_trigger uses the counter appropriate to the chain: raw trigger pulses
// (AND gate, TAC without valid start), accepted starts (TAC with valid
// start) or collected pairs per subsample (TIC). N_background repeats that
// count on the caller-supplied pair-source-off streams. W_signal is the raw
// signal-channel rate over the counting interval.
inline AcquisitionResult acquire_detailed(const ChannelTimestamps& ch,
                                          const AcquisitionSystem& sys,
                                          double gate_duration,
                                          const ChannelTimestamps* background) {
  sys.validate();
  AcquisitionResult out;
  CountsRecord& rec = out.counts;

  if (ch.trigger.empty() && ch.signal.empty()) {
    rec.gate_duration = sys.kind == SystemKind::tic
                            ? std::nullopt
                            : std::optional<double>(gate_duration);
    return out;  // all-zero record
  }

  switch (sys.kind) {
    case SystemKind::and_gate: {
      if (!(gate_duration > 0.0))
        throw std::invalid_argument("acquire: gate_duration must be > 0");
      const AndGateCounts counts = and_gate(ch.trigger, ch.signal,
                                            sys.coincidence_window,
                                            sys.accidental_offset);
      rec.n_trigger = detail::poisson_count(ch.trigger.size());
      rec.n_coincidence = detail::poisson_count(counts.n_coincidence);
      rec.n_accidental = detail::poisson_count(counts.n_accidental);
      if (background)
        rec.n_background = detail::poisson_count(background->trigger.size());
      rec.w_signal_mean =
          detail::poisson_count(ch.signal.size()) / gate_duration;
      rec.gate_duration = gate_duration;
      break;
    }

    case SystemKind::tac_no_valid_start:
    case SystemKind::tac_valid_start: {
      if (!(gate_duration > 0.0))
        throw std::invalid_argument("acquire: gate_duration must be > 0");
      const bool valid_start = sys.kind == SystemKind::tac_valid_start;
      const TacResult tac = tac_convert(ch.trigger, ch.signal, sys);
      out.n_valid_starts = tac.n_valid_starts;
      IntervalHistogram hist =
          build_histogram(tac.intervals, sys.mca_bin_width, sys.tac_range);
      if (!tac.intervals.empty()) {
        const PeakPolicy policy = detail::effective_policy(
            sys, sys.mca_bin_width, hist.counts.size());
        const PeakAnalysis peak = analyze_peak(hist, policy);
        rec.n_coincidence = peak.n_coincidence;
        rec.n_accidental = peak.n_accidental;
        out.peak = peak;
      }
      rec.n_trigger = detail::poisson_count(
          valid_start ? tac.n_valid_starts : ch.trigger.size());
      if (background) {
        if (valid_start) {
          const TacResult bg_tac =
              tac_convert(background->trigger, background->signal, sys);
          rec.n_background = detail::poisson_count(bg_tac.n_valid_starts);
        } else {
          rec.n_background =
              detail::poisson_count(background->trigger.size());
        }
      }
      rec.w_signal_mean =
          detail::poisson_count(ch.signal.size()) / gate_duration;
      rec.gate_duration = gate_duration;
      out.histograms.push_back(std::move(hist));
      break;
    }

    case SystemKind::tic: {
      const TicResult tic = tic_acquire(ch.trigger, ch.signal, sys);
      const PeakPolicy policy = detail::effective_policy(
          sys, sys.tic_bin_width, tic.aggregate.counts.size());
      // One window from the aggregate histogram, applied to every subsample
      // so the subsample dispersion reflects counting noise only.
      const PeakAnalysis agg_peak = analyze_peak(tic.aggregate, policy);
      PeakPolicy sub_policy = policy;
      sub_policy.mode = PeakPolicy::Mode::fixed;
      sub_policy.fixed_low_bin = agg_peak.low_bin;
      sub_policy.fixed_high_bin = agg_peak.high_bin;

      std::vector<double> in_peak, accidental, bg_counts;
      // Background windows are laid out from the background stream's own
      // origin; its absolute offset against the main run is meaningless.
      TimestampPs bg_cursor =
          background && !background->trigger.empty()
              ? background->trigger.front()
              : 0;
      for (const TicSubsample& sub : tic.subsamples) {
        const PeakAnalysis p = analyze_peak(sub.histogram, sub_policy);
        in_peak.push_back(p.n_coincidence.value);
        accidental.push_back(p.n_accidental.value);
        if (background) {
          // Background trigger rate sampled over a window of the same
          // duration as this subsample's span.
          const TimestampPs dur = sub.span_end - sub.span_begin;
          bg_counts.push_back(static_cast<double>(
              detail::events_in(background->trigger, bg_cursor,
                                bg_cursor + dur)));
          bg_cursor += dur;
        }
        out.histograms.push_back(sub.histogram);
      }
      out.peak = agg_peak;
      rec.n_trigger = {
          static_cast<double>(sys.tic_pair_target / sys.tic_subsamples), 0.0};
      rec.n_coincidence = detail::dispersion_mean(in_peak);
      rec.n_accidental = detail::dispersion_mean(accidental);
      if (background) rec.n_background = detail::dispersion_mean(bg_counts);
      const TimestampPs t0 = tic.subsamples.front().span_begin;
      const TimestampPs t1 = tic.subsamples.back().span_end;
      const double duration = to_seconds(t1 - t0);
      if (duration > 0.0)
        rec.w_signal_mean =
            detail::poisson_count(detail::events_in(ch.signal, t0, t1)) /
            duration;
      rec.gate_duration = std::nullopt;
      break;
    }
  }
  return out;
}

inline CountsRecord acquire(const ChannelTimestamps& ch,
                            const AcquisitionSystem& sys, double gate_duration,
                            const ChannelTimestamps* background = nullptr) {
  return acquire_detailed(ch, sys, gate_duration, background).counts;
}

}  // namespace klyshko
