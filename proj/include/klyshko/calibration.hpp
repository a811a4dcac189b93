#pragma once
// Coincidence-calibration mathematics for photon-pair efficiency
// measurements: the ideal two-detector relations, the electronics correction
// factors (missed coincidences, TAC conversion dead time, detector dead
// time), and the corrected efficiency estimate with first-order uncertainty
// propagation.
//
// Unit contract: rates in counts/second, times in seconds, wavelengths in nm.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "klyshko/quantity.hpp"

namespace klyshko {

// The four coincidence acquisition chains.
enum class SystemKind { and_gate, tac_no_valid_start, tac_valid_start, tic };

inline const char* to_string(SystemKind k) {
  switch (k) {
    case SystemKind::and_gate: return "and-gate";
    case SystemKind::tac_no_valid_start: return "tac-no-valid-start";
    case SystemKind::tac_valid_start: return "tac-valid-start";
    case SystemKind::tic: return "tic";
  }
  return "?";
}

inline std::optional<SystemKind> system_kind_from_string(std::string_view s) {
  if (s == "and-gate") return SystemKind::and_gate;
  if (s == "tac-no-valid-start") return SystemKind::tac_no_valid_start;
  if (s == "tac-valid-start") return SystemKind::tac_valid_start;
  if (s == "tic") return SystemKind::tic;
  return std::nullopt;
}

// rate x time-constant product reached 1: the electronics would be fully
// blocked, no correction factor is defined there.
class saturation_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Count bookkeeping violates the estimator's preconditions.
class inconsistent_counts_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Net trigger counts are zero or negative: nothing to calibrate against.
class no_signal_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Measured quantities of one calibration run.
struct CountsRecord {
  Quantity n_trigger;
  Quantity n_background;   // trigger counts with the pair source off
  Quantity n_coincidence;  // counts in the coincidence peak/window
  Quantity n_accidental;   // uncorrelated counts expected in that window
  Quantity w_signal_mean;  // mean signal-channel rate, counts/s
  // Counting interval; absent for fixed-pair-count acquisitions.
  std::optional<double> gate_duration;

  void validate() const {
    auto nonneg = [](const Quantity& q, const char* name) {
      if (!(q.value >= 0.0) || !(q.sigma >= 0.0))
        throw inconsistent_counts_error(std::string("CountsRecord: ") + name +
                                        " must be >= 0 with sigma >= 0");
    };
    nonneg(n_trigger, "n_trigger");
    nonneg(n_background, "n_background");
    nonneg(n_coincidence, "n_coincidence");
    nonneg(n_accidental, "n_accidental");
    nonneg(w_signal_mean, "w_signal_mean");
    if (n_background.value > n_trigger.value)
      throw inconsistent_counts_error(
          "CountsRecord: n_background exceeds n_trigger");
    if (n_accidental.value > n_coincidence.value)
      throw inconsistent_counts_error(
          "CountsRecord: n_accidental exceeds n_coincidence");
    if (gate_duration && !(*gate_duration > 0.0))
      throw inconsistent_counts_error("CountsRecord: gate_duration must be > 0");
  }
};

enum class DerivationMode { explicit_values, derived_from_parameters };

// Correction-factor shape: linear keeps 1 - x, rational uses 1/(1 + x).
// Both agree to first order in x; linear is the default.
enum class CorrectionForm { linear, rational };

// The three multiplicative corrections entering the efficiency estimate,
// together with the timing parameters they derive from.
struct Corrections {
  double alpha = 1.0;  // missed-coincidence factor, (0, 1]
  double beta = 1.0;   // trigger-count overestimate factor, (0, 1]
  double gamma = 1.0;  // signal-detector dead-time factor, (0, 1]
  double t_delay = 0.0;       // stop-channel delay line, s
  double tau_tac_mean = 0.0;  // mean TAC conversion dead time, s
  double tau_signal = 0.0;    // dead time of the detector under test, s
  DerivationMode derivation_mode = DerivationMode::explicit_values;

  void validate() const {
    auto in_unit = [](double f, const char* name) {
      if (!(f > 0.0) || !(f <= 1.0))
        throw std::invalid_argument(std::string("Corrections: ") + name +
                                    " must lie in (0, 1]");
    };
    in_unit(alpha, "alpha");
    in_unit(beta, "beta");
    in_unit(gamma, "gamma");
    if (!(t_delay >= 0.0) || !(tau_tac_mean >= 0.0) || !(tau_signal >= 0.0))
      throw std::invalid_argument("Corrections: time constants must be >= 0");
  }
};

struct ErrorContribution {
  std::string source;
  double relative;  // relative standard-uncertainty contribution
};

struct EfficiencyEstimate {
  Quantity eta_times_t;  // quantum efficiency x signal-path transmittance
  Quantity t_signal;
  Quantity eta;
  std::vector<ErrorContribution> error_budget;
};

// Wavelength of the partner photon under energy conservation,
// 1/pump = 1/signal + 1/idler. All in nm.
inline double conjugate_wavelength(double pump_nm, double signal_nm) {
  if (!(pump_nm > 0.0) || !(signal_nm > pump_nm))
    throw std::domain_error(
        "conjugate_wavelength: need 0 < pump_nm < signal_nm");
  return 1.0 / (1.0 / pump_nm - 1.0 / signal_nm);
}

// Uncorrected efficiency from raw counts, n_coincidence / n_counterpart,
// with Poisson uncertainties on both counts combined in quadrature.
inline Quantity ideal_efficiency(double n_coincidence, double n_counterpart) {
  if (!(n_coincidence >= 0.0))
    throw std::invalid_argument("ideal_efficiency: negative coincidence count");
  if (!(n_counterpart > 0.0))
    throw std::domain_error("ideal_efficiency: counterpart count must be > 0");
  const double v = n_coincidence / n_counterpart;
  const double s = std::hypot(std::sqrt(n_coincidence) / n_counterpart,
                              v * std::sqrt(n_counterpart) / n_counterpart);
  return {v, s};
}

namespace detail {

inline double correction_factor(double rate, double time_constant,
                                CorrectionForm form, const char* op) {
  if (!(rate >= 0.0) || !(time_constant >= 0.0))
    throw std::invalid_argument(std::string(op) +
                                ": rate and time constant must be >= 0");
  const double x = rate * time_constant;
  if (x >= 1.0)
    throw saturation_error(std::string(op) +
                           ": rate x time constant >= 1 (channel saturated)");
  return form == CorrectionForm::linear ? 1.0 - x : 1.0 / (1.0 + x);
}

}  // namespace detail

// Fraction of true coincidences NOT lost to an uncorrelated stop pulse that
// arrives between the start and the delayed correlated stop. Constant-rate
// evaluation: alpha = 1 - <W_signal> * t_delay.
inline double alpha_missed(double w_signal_mean, double t_delay,
                           CorrectionForm form = CorrectionForm::linear) {
  return detail::correction_factor(w_signal_mean, t_delay, form,
                                   "alpha_missed");
}

// Trigger-count overestimate when counting raw detector pulses while the TAC
// is blind during conversions: beta = 1 - <W_signal> * <tau_TAC>. A valid
// start output counts only accepted starts, so beta = 1 exactly there.
inline double beta_tac(double w_signal_mean, double tau_tac_mean,
                       bool has_valid_start,
                       CorrectionForm form = CorrectionForm::linear) {
  if (!(w_signal_mean >= 0.0) || !(tau_tac_mean >= 0.0))
    throw std::invalid_argument(
        "beta_tac: rate and time constant must be >= 0");
  if (has_valid_start) return 1.0;
  return detail::correction_factor(w_signal_mean, tau_tac_mean, form,
                                   "beta_tac");
}

// Signal-count loss from the (non-paralyzable) dead time of the detector
// under calibration: gamma = 1 - <W_signal> * tau_signal.
inline double gamma_deadtime(double w_signal_mean, double tau_signal,
                             CorrectionForm form = CorrectionForm::linear) {
  return detail::correction_factor(w_signal_mean, tau_signal, form,
                                   "gamma_deadtime");
}

// Timing parameters of one acquisition chain, as known from the instrument
// settings (delay-line length, TAC conversion time, detector dead time).
struct TimingParameters {
  double t_delay = 0.0;       // s
  double tau_tac_mean = 0.0;  // s
  double tau_signal = 0.0;    // s
  CorrectionForm form = CorrectionForm::linear;
};

// Correction set appropriate to one acquisition system at the measured mean
// signal rate. The AND gate needs neither alpha nor beta; a valid-start TAC
// and the TIC need no beta.
inline Corrections derive_corrections(const TimingParameters& p,
                                      double w_signal_mean, SystemKind system) {
  Corrections c;
  c.t_delay = p.t_delay;
  c.tau_tac_mean = p.tau_tac_mean;
  c.tau_signal = p.tau_signal;
  c.derivation_mode = DerivationMode::derived_from_parameters;
  switch (system) {
    case SystemKind::and_gate:
      c.alpha = 1.0;
      c.beta = 1.0;
      break;
    case SystemKind::tac_no_valid_start:
      c.alpha = alpha_missed(w_signal_mean, p.t_delay, p.form);
      c.beta = beta_tac(w_signal_mean, p.tau_tac_mean, false, p.form);
      break;
    case SystemKind::tac_valid_start:
    case SystemKind::tic:
      c.alpha = alpha_missed(w_signal_mean, p.t_delay, p.form);
      c.beta = 1.0;
      break;
  }
  c.gamma = gamma_deadtime(w_signal_mean, p.tau_signal, p.form);
  return c;
}

// Corrected efficiency estimate:
//
//   eta * T = (N_coincidence - N_accidental)
//             / (alpha * beta * gamma * (N_trigger - N_background))
//   eta     = (eta * T) / T_signal
//
// Uncertainties are first-order quadrature over the net coincidence count,
// the net trigger count and (for eta) T_signal. The correction factors carry
// no uncertainty of their own.
inline EfficiencyEstimate estimate_efficiency(const CountsRecord& counts,
                                              const Corrections& corr,
                                              const Quantity& t_signal) {
  const Quantity net_trigger = counts.n_trigger - counts.n_background;
  if (!(net_trigger.value > 0.0))
    throw no_signal_error(
        "estimate_efficiency: no net trigger counts (n_trigger <= n_background)");
  counts.validate();
  corr.validate();
  if (!(t_signal.value > 0.0) || !(t_signal.value <= 1.0) ||
      !(t_signal.sigma >= 0.0))
    throw std::invalid_argument(
        "estimate_efficiency: t_signal must lie in (0, 1] with sigma >= 0");

  const Quantity net_coincidence = counts.n_coincidence - counts.n_accidental;

  const double denom = corr.alpha * corr.beta * corr.gamma;

  EfficiencyEstimate est;
  est.eta_times_t = net_coincidence / (denom * net_trigger);
  est.t_signal = t_signal;
  est.eta = est.eta_times_t / t_signal;

  const double rel_nc = net_coincidence.value != 0.0
                            ? rel_sigma(net_coincidence)
                            : std::numeric_limits<double>::infinity();
  est.error_budget = {
      {"net_coincidence", rel_nc},
      {"net_trigger", rel_sigma(net_trigger)},
      {"t_signal", rel_sigma(t_signal)},
      {"eta_times_t_total", est.eta_times_t.value != 0.0
                                ? rel_sigma(est.eta_times_t)
                                : std::numeric_limits<double>::infinity()},
      {"eta_total", est.eta.value != 0.0
                        ? rel_sigma(est.eta)
                        : std::numeric_limits<double>::infinity()},
  };
  return est;
}

}  // namespace klyshko
