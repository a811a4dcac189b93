#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "klyshko/electronics.hpp"
#include "klyshko/simulation.hpp"
#include "property_checks.hpp"

using namespace klyshko;
using Catch::Approx;

namespace {

std::vector<TimestampPs> ns(std::initializer_list<double> nanos) {
  std::vector<TimestampPs> out;
  for (const double t : nanos) out.push_back(to_ps(t * 1e-9));
  return out;
}

}  // namespace

TEST_CASE("and_gate hand-checkable cases") {
  CHECK(and_gate(ns({100, 200}), ns({105, 400}), 20e-9).n_coincidence == 1);
  // identical streams: every trigger matches its own signal event
  const auto stream = ns({10, 20, 30, 40, 50});
  CHECK(and_gate(stream, stream, 1e-9).n_coincidence == stream.size());
  // each signal event consumable once
  CHECK(and_gate(ns({100, 101}), ns({100.5}), 20e-9).n_coincidence == 1);
  CHECK(and_gate({}, stream, 10e-9).n_coincidence == 0);
  CHECK_THROWS_AS(and_gate(stream, stream, 0.0), std::invalid_argument);
}

TEST_CASE("and_gate accidentals match R1*R2*w*T within 5%") {
  CHECK_NOTHROW(props::and_accidental_formula(2025, 100));
}

TEST_CASE("tac_convert state machine") {
  SECTION("single start-stop pair") {
    const auto res = tac_convert(ns({100}), ns({112.57}), 50e-9, 1e-6);
    REQUIRE(res.intervals.size() == 1);
    CHECK(res.intervals[0] == to_ps(12.57e-9));
    CHECK(res.n_valid_starts == 1);
    CHECK(res.n_timed_out == 0);
  }
  SECTION("no stops: only idle starts accepted") {
    // range 50 ns + conversion 10 ns: a timed-out start blocks 60 ns
    const auto res = tac_convert(ns({0, 10, 59, 60, 200}), {}, 50e-9, 10e-9);
    CHECK(res.intervals.empty());
    CHECK(res.n_valid_starts == 3);  // 0, 60, 200
    CHECK(res.n_timed_out == 3);
  }
  SECTION("starts ignored while converting") {
    const auto res =
        tac_convert(ns({0, 5, 100}), ns({2, 6, 102}), 50e-9, 20e-9);
    // start 0 closes at 2 (interval 2 ns), busy until 22: start 5 ignored;
    // start 100 closes at 102
    REQUIRE(res.intervals.size() == 2);
    CHECK(res.intervals[0] == to_ps(2e-9));
    CHECK(res.intervals[1] == to_ps(2e-9));
    CHECK(res.n_valid_starts == 2);
  }
  SECTION("emitted intervals never exceed the range") {
    Rng rng(3);
    const auto trigger = poisson_process(2e4, 0.01, rng);
    const auto signal = poisson_process(1e6, 0.01, rng);
    const auto res = tac_convert(trigger, signal, 50e-9, 1e-9);
    for (const TimestampPs d : res.intervals) {
      CHECK(d >= 0);
      CHECK(d <= to_ps(50e-9));
    }
    CHECK(res.n_valid_starts ==
          res.intervals.size() + res.n_timed_out);
  }
}

TEST_CASE("tac_convert pair loss reproduces 1 - alpha") {
  // correlated stream with a 12.57 ns delay buried in an uncorrelated
  // stop rate W: the fraction of pairs preempted by an early uncorrelated
  // stop must match 1 - alpha = W * t_delay within 10%
  const double w = 1.83e6, t_delay = 12.57e-9, duration = 1.0;
  Rng rng(404);
  const auto trigger = poisson_process(2e4, duration, rng);
  std::vector<TimestampPs> correlated(trigger);
  for (TimestampPs& t : correlated) t += to_ps(t_delay);
  const auto uncorrelated = poisson_process(w, duration, rng);
  const auto signal = merge_streams(correlated, uncorrelated);

  const auto res = tac_convert(trigger, signal, 50e-9, 1.06e-9);
  const auto at_peak = static_cast<double>(
      std::count(res.intervals.begin(), res.intervals.end(), to_ps(t_delay)));
  const double armed = static_cast<double>(res.n_valid_starts);
  const double lost_fraction = (armed - at_peak) / armed;
  const double predicted = 1.0 - alpha_missed(w, t_delay);
  CHECK(lost_fraction == Approx(predicted).epsilon(0.10));
}

TEST_CASE("build_histogram") {
  SECTION("empty input: all-zero bins") {
    const auto h = build_histogram({}, 100e-12, 50e-9);
    CHECK(h.counts.size() == 500);
    CHECK(std::all_of(h.counts.begin(), h.counts.end(),
                      [](std::uint64_t c) { return c == 0; }));
    CHECK(h.total_pairs == 0);
  }
  SECTION("delta peak: one nonzero bin holds everything") {
    const std::vector<TimestampPs> intervals(1000, to_ps(12.57e-9));
    const auto h = build_histogram(intervals, 100e-12, 50e-9);
    const std::size_t peak = 125;  // 12.57 ns / 100 ps
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      CHECK(h.counts[i] == (i == peak ? 1000u : 0u));
  }
  SECTION("out-of-range intervals dropped and tallied") {
    const auto h =
        build_histogram(ns({1, 2, 100, -1}), 100e-12, 50e-9);
    std::uint64_t sum = 0;
    for (const auto c : h.counts) sum += c;
    CHECK(sum == 2);
    CHECK(h.dropped == 2);
    CHECK(h.total_pairs == 4);
  }
  SECTION("uniform intervals: flat multinomial (chi-square at 1%)") {
    Rng rng(17);
    std::vector<TimestampPs> intervals;
    const TimestampPs span = to_ps(10e-9) * 100;
    for (int i = 0; i < 100000; ++i)
      intervals.push_back(
          static_cast<TimestampPs>(rng.uniform() * span));
    const auto h = build_histogram(intervals, 10e-9, 100 * 10e-9);
    const double expected = 100000.0 / 100.0;
    double chi2 = 0.0;
    for (const auto c : h.counts) {
      const double d = static_cast<double>(c) - expected;
      chi2 += d * d / expected;
    }
    CHECK(chi2 > 60.0);   // chi-square(99), two-sided 1%
    CHECK(chi2 < 140.0);
  }
  CHECK_NOTHROW(props::histogram_conservation(2026, 1500));
}

TEST_CASE("analyze_peak") {
  PeakPolicy policy;
  SECTION("delta peak on zero background") {
    const std::vector<TimestampPs> intervals(700, to_ps(12.57e-9));
    const auto h = build_histogram(intervals, 100e-12, 50e-9);
    const auto p = analyze_peak(h, policy);
    CHECK(p.n_in_peak == 700);
    CHECK(p.n_accidental.value == 0.0);
    CHECK(p.n_coincidence.value == 700.0);
    CHECK(p.low_bin <= 125);
    CHECK(p.high_bin >= 125);
  }
  SECTION("flat histogram, forced 5-bin window") {
    Rng rng(23);
    std::vector<TimestampPs> intervals;
    const TimestampPs span = to_ps(50e-9);
    for (int i = 0; i < 50000; ++i)
      intervals.push_back(static_cast<TimestampPs>(rng.uniform() * span));
    const auto h = build_histogram(intervals, 100e-12, 50e-9);
    PeakPolicy fixed;
    fixed.mode = PeakPolicy::Mode::fixed;
    fixed.fixed_low_bin = 200;
    fixed.fixed_high_bin = 204;
    const auto p = analyze_peak(h, fixed);
    CHECK(p.n_accidental.value ==
          Approx(5.0 * p.background_per_bin.value));
    // no correlated component: in-peak consistent with accidentals
    CHECK(std::abs(static_cast<double>(p.n_in_peak) - p.n_accidental.value) <
          5.0 * std::sqrt(p.n_accidental.value));
  }
  SECTION("synthetic peak over flat grass recovers injected totals") {
    // 700 correlated intervals at t_delay + Gaussian(150 ps) plus a flat
    // background of 0.2 per bin over 500 bins, averaged over 100 seeds
    const int seeds = 100;
    double net_sum = 0.0, bg_sum = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(derive_seed(31337, static_cast<std::uint64_t>(s)));
      std::vector<TimestampPs> intervals;
      for (int i = 0; i < 700; ++i)
        intervals.push_back(to_ps(12.57e-9 + rng.normal() * 150e-12));
      const int n_bg = static_cast<int>(0.2 * 500);
      for (int i = 0; i < n_bg; ++i)
        intervals.push_back(
            static_cast<TimestampPs>(rng.uniform() * to_ps(50e-9)));
      std::sort(intervals.begin(), intervals.end());
      const auto h = build_histogram(intervals, 100e-12, 50e-9);
      const auto p = analyze_peak(h, policy);
      net_sum += static_cast<double>(p.n_in_peak) - p.n_accidental.value;
      bg_sum += p.background_per_bin.value;
    }
    const double net_mean = net_sum / seeds;
    const double sigma_mean = std::sqrt(700.0 + 100.0) / std::sqrt(seeds);
    CHECK(net_mean == Approx(700.0).margin(4.0 * sigma_mean));
    CHECK(bg_sum / seeds == Approx(0.2).margin(0.02));
  }
  SECTION("all-zero histogram: no peak") {
    const auto h = build_histogram({}, 100e-12, 50e-9);
    CHECK_THROWS_AS(analyze_peak(h, policy), no_peak_error);
  }
}

TEST_CASE("tic_acquire") {
  AcquisitionSystem sys;
  sys.kind = SystemKind::tic;
  SECTION("ten thousand pairs in five subsamples of 2000") {
    Rng rng(55);
    const auto trigger = poisson_process(3e4, 1.0, rng);
    const auto signal = poisson_process(2e5, 1.0, rng);
    const auto res = tic_acquire(trigger, signal, sys);
    REQUIRE(res.subsamples.size() == 5);
    for (const TicSubsample& sub : res.subsamples) {
      CHECK(sub.pairs == 2000);
      CHECK(sub.histogram.total_pairs == 2000);
    }
    CHECK(res.aggregate.total_pairs == 10000);
    // spans tile the acquisition in order
    for (std::size_t i = 1; i < res.subsamples.size(); ++i)
      CHECK(res.subsamples[i].span_begin >=
            res.subsamples[i - 1].span_end);
  }
  SECTION("interval quantization floors to the resolution grid") {
    sys.tic_pair_target = 2;
    sys.tic_subsamples = 2;
    sys.tic_bin_width = 25e-12;  // bin index == quantized value / 25 ps
    sys.tic_hist_range = 250e-12;
    // intervals of 88 ps and 37 ps: floor to 75 ps and 25 ps
    const std::vector<TimestampPs> trigger = {1000, 2000};
    const std::vector<TimestampPs> signal = {1088, 2037};
    const auto res = tic_acquire(trigger, signal, sys);
    CHECK(res.aggregate.counts[3] == 1);  // 75 ps
    CHECK(res.aggregate.counts[1] == 1);  // 25 ps
    CHECK(res.aggregate.counts[4] == 0);  // nearest-rounding would land here
  }
  SECTION("streams exhausted: insufficient-data error carries the tally") {
    sys.tic_pair_target = 10;
    sys.tic_subsamples = 5;
    const std::vector<TimestampPs> trigger = {1000, 2000, 3000};
    const std::vector<TimestampPs> signal = {1100, 2100, 3100};
    try {
      tic_acquire(trigger, signal, sys);
      FAIL("expected insufficient_data_error");
    } catch (const insufficient_data_error& e) {
      CHECK(e.pairs_collected == 3);
    }
  }
  SECTION("subsample-to-subsample std of peak counts is Poisson-like") {
    // pooled over seeds, the dispersion-based sigma of the subsample mean
    // must sit near sqrt(mean)/sqrt(n_sub)
    sys.tic_pair_target = 10000;
    sys.tic_subsamples = 5;
    ExperimentConfig cfg;
    cfg.pair_rate = 2e6;
    cfg.gate_duration = 1.0;
    cfg.trigger_arm.efficiency = 0.4;
    cfg.trigger_arm.transmittance = 0.03;
    cfg.signal_arm.efficiency = 0.5;
    cfg.signal_arm.transmittance = 0.9;
    cfg.stop_delay = 12.57e-9;
    double var_sum = 0.0, mean_sum = 0.0;
    const int seeds = 40;
    for (int s = 0; s < seeds; ++s) {
      cfg.rng_seed = derive_seed(99, static_cast<std::uint64_t>(s));
      const auto ch = simulate_run(cfg);
      const auto rec = acquire(ch, sys, cfg.gate_duration);
      // sigma of the mean = sample std / sqrt(5), so std^2 = 5 sigma^2
      var_sum += rec.n_coincidence.sigma * rec.n_coincidence.sigma * 5.0;
      mean_sum += rec.n_coincidence.value;
    }
    const double pooled_var = var_sum / seeds;       // per-subsample variance
    const double pooled_mean = mean_sum / seeds;     // per-subsample mean
    // fixed pair count makes the in-peak tally binomial: variance/mean
    // = 1 - f with f the in-peak fraction, i.e. Poisson-like up to (1 - f)
    const double f = pooled_mean / 2000.0;
    CHECK(pooled_var / pooled_mean == Approx(1.0 - f).margin(0.25));
    const double std_ratio = std::sqrt(pooled_var / pooled_mean);
    CHECK(std_ratio > 0.5);
    CHECK(std_ratio < 1.15);
  }
}

namespace {

ExperimentConfig paper_scale_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.pair_rate = 5.86e6;
  cfg.gate_duration = 1.0;
  cfg.trigger_arm.efficiency = 0.37;
  cfg.trigger_arm.transmittance = 0.01;
  cfg.trigger_arm.background_rate = 2416.0;
  cfg.trigger_arm.dead_time = 31e-9;
  cfg.signal_arm.efficiency = 0.507;
  cfg.signal_arm.transmittance = 0.879;
  cfg.signal_arm.background_rate = 2.4e5;
  cfg.signal_arm.dead_time = 31e-9;
  cfg.jitter_sigma = 300e-12;
  cfg.rng_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("acquire: empty channels give an all-zero record") {
  const ChannelTimestamps empty;
  for (const SystemKind kind :
       {SystemKind::and_gate, SystemKind::tac_no_valid_start,
        SystemKind::tac_valid_start, SystemKind::tic}) {
    AcquisitionSystem sys;
    sys.kind = kind;
    const auto rec = acquire(empty, sys, 1.0);
    CHECK(rec.n_trigger.value == 0.0);
    CHECK(rec.n_coincidence.value == 0.0);
    CHECK(rec.w_signal_mean.value == 0.0);
  }
}

TEST_CASE("acquire: AND-gate net ratio matches eta*T*gamma in closed loop") {
  ExperimentConfig cfg = paper_scale_config(7001);
  cfg.trigger_arm.background_rate = 0.0;  // pure pair streams
  cfg.signal_arm.background_rate = 0.0;
  const auto ch = simulate_run(cfg);
  AcquisitionSystem sys;
  sys.kind = SystemKind::and_gate;
  sys.coincidence_window = 4e-9;
  const auto rec = acquire(ch, sys, cfg.gate_duration);
  const double gamma = gamma_deadtime(rec.w_signal_mean.value, 31e-9);
  const double expected = 0.507 * 0.879 * gamma;
  const double ratio =
      (rec.n_coincidence.value - rec.n_accidental.value) / rec.n_trigger.value;
  const double sigma =
      std::sqrt(expected * (1.0 - expected) / rec.n_trigger.value);
  CHECK(ratio == Approx(expected).margin(3.0 * sigma));
}

TEST_CASE("acquire: valid-start trigger count never exceeds the raw count") {
  const auto ch = simulate_run(paper_scale_config(7002));
  AcquisitionSystem vs, nvs;
  vs.kind = SystemKind::tac_valid_start;
  vs.tac_conversion_time = 1.06e-9;
  nvs = vs;
  nvs.kind = SystemKind::tac_no_valid_start;
  const auto rec_vs = acquire(ch, vs, 1.0);
  const auto rec_nvs = acquire(ch, nvs, 1.0);
  CHECK(rec_vs.n_trigger.value <= rec_nvs.n_trigger.value);
  CHECK(rec_nvs.n_trigger.value == static_cast<double>(ch.trigger.size()));
}

TEST_CASE("all four systems agree on ideal streams within 2 sigma") {
  // perfect correlation, no dead time, no background: every chain must
  // estimate eta = 1 with unit corrections
  Rng rng(606);
  const auto trigger = poisson_process(2.4e4, 1.0, rng);
  ChannelTimestamps ch;
  ch.trigger = trigger;
  ch.signal = trigger;  // identical ideal streams

  std::vector<EfficiencyEstimate> estimates;
  for (const SystemKind kind :
       {SystemKind::and_gate, SystemKind::tac_no_valid_start,
        SystemKind::tac_valid_start, SystemKind::tic}) {
    AcquisitionSystem sys;
    sys.kind = kind;
    sys.tac_conversion_time = 1.06e-9;
    const CountsRecord rec = acquire(ch, sys, 1.0);
    const Corrections corr =
        derive_corrections(TimingParameters{}, rec.w_signal_mean.value, kind);
    estimates.push_back(
        estimate_efficiency(rec, corr, Quantity{1.0, 0.0}));
  }
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    CHECK(estimates[i].eta.value == Approx(1.0).margin(0.02));
    for (std::size_t j = i + 1; j < estimates.size(); ++j) {
      const double tol = 2.0 * std::hypot(estimates[i].eta.sigma,
                                          estimates[j].eta.sigma);
      CHECK(std::abs(estimates[i].eta.value - estimates[j].eta.value) <=
            std::max(tol, 1e-9));
    }
  }
}

TEST_CASE("time-translation invariance across all systems") {
  CHECK_NOTHROW(props::time_translation_invariance(2027, 1000));
}
