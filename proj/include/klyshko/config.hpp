#pragma once
// Plain-text key=value run configuration. Dotted keys group settings, '#'
// starts a comment, time values accept a unit suffix (ps, ns, us, ms, s).
// See README for the full schema.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "klyshko/calibration.hpp"
#include "klyshko/electronics.hpp"
#include "klyshko/simulation.hpp"

namespace klyshko {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One acquisition chain of a run: the electronics model, the delay cable
// ahead of its stop input, and the known timing constants its corrections
// derive from.
struct SystemSetup {
  std::string name;
  AcquisitionSystem system;
  double stop_delay = 0.0;  // s
  TimingParameters timing;
};

struct RunConfig {
  ExperimentConfig experiment;  // simulation ground truth
  Quantity t_signal{1.0, 0.0};  // known signal-path transmittance
  double estimator_tau_signal = 0.0;  // detector dead time used in gamma, s
  CorrectionForm correction_form = CorrectionForm::linear;
  std::vector<SystemSetup> systems;
  std::optional<double> pump_nm;
  std::optional<double> signal_nm;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct ConfigEntry {
  std::string value;
  int line = 0;
  mutable bool used = false;
};

class KeyValueFile {
 public:
  KeyValueFile(std::istream& in, std::string origin) : origin_(std::move(origin)) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos)
        line.resize(hash);
      const std::string text = trim(line);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos)
        fail(line_no, "expected 'key = value', got '" + text + "'");
      const std::string key = trim(text.substr(0, eq));
      const std::string value = trim(text.substr(eq + 1));
      if (key.empty() || value.empty())
        fail(line_no, "empty key or value");
      if (entries_.count(key)) fail(line_no, "duplicate key '" + key + "'");
      entries_[key] = {value, line_no, false};
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw config_error(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  const ConfigEntry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  double number(const std::string& key, double fallback) const {
    const ConfigEntry* e = find(key);
    return e ? parse_number(*e) : fallback;
  }

  // Time in seconds; a bare number means seconds, a suffix rescales.
  double time(const std::string& key, double fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) return fallback;
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(e->value, &pos);
    } catch (const std::exception&) {
      fail(e->line, "not a number: '" + e->value + "'");
    }
    const std::string unit = trim(e->value.substr(pos));
    if (unit.empty() || unit == "s") return v;
    if (unit == "ms") return v * 1e-3;
    if (unit == "us") return v * 1e-6;
    if (unit == "ns") return v * 1e-9;
    if (unit == "ps") return v * 1e-12;
    fail(e->line, "unknown time unit '" + unit + "' (use ps, ns, us, ms, s)");
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) return fallback;
    try {
      std::size_t pos = 0;
      const std::int64_t v = std::stoll(e->value, &pos);
      if (trim(e->value.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    fail(e->line, "not an integer: '" + e->value + "'");
  }

  std::uint64_t unsigned_integer(const std::string& key,
                                 std::uint64_t fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) return fallback;
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(e->value, &pos);
      if (trim(e->value.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    fail(e->line, "not an unsigned integer: '" + e->value + "'");
  }

  std::vector<std::string> list(const std::string& key,
                                std::vector<std::string> fallback) const {
    const ConfigEntry* e = find(key);
    if (!e) return fallback;
    std::vector<std::string> items;
    std::stringstream ss(e->value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(item);
    }
    if (items.empty()) fail(e->line, "empty list");
    return items;
  }

  std::string text(const std::string& key, std::string fallback) const {
    const ConfigEntry* e = find(key);
    return e ? e->value : std::move(fallback);
  }

  void reject_unused() const {
    for (const auto& [key, entry] : entries_)
      if (!entry.used) fail(entry.line, "unknown key '" + key + "'");
  }

  // Canonical serialization for digesting: sorted key=value lines.
  std::string canonical() const {
    std::string out;
    for (const auto& [key, entry] : entries_)
      out += key + "=" + entry.value + "\n";
    return out;
  }

 private:
  double parse_number(const ConfigEntry& e) const {
    try {
      std::size_t pos = 0;
      const double v = std::stod(e.value, &pos);
      if (trim(e.value.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    fail(e.line, "not a number: '" + e.value + "'");
  }

  std::string origin_;
  std::map<std::string, ConfigEntry> entries_;
};

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline void load_arm(const KeyValueFile& kv, const std::string& prefix,
                     ArmModel& arm) {
  arm.efficiency = kv.number(prefix + ".efficiency", arm.efficiency);
  arm.transmittance = kv.number(prefix + ".transmittance", arm.transmittance);
  arm.background_rate =
      kv.number(prefix + ".background_rate", arm.background_rate);
  arm.dead_time = kv.time(prefix + ".dead_time", arm.dead_time);
}

inline SystemSetup load_system(const KeyValueFile& kv, const std::string& name,
                               const RunConfig& cfg) {
  const auto kind = system_kind_from_string(name);
  if (!kind)
    throw config_error(
        "unknown acquisition system '" + name +
        "' (use and-gate, tac-no-valid-start, tac-valid-start, tic)");
  SystemSetup setup;
  setup.name = name;
  AcquisitionSystem& sys = setup.system;
  sys.kind = *kind;
  // Matched cables for the AND gate, a table-scale delay line otherwise.
  setup.stop_delay = sys.kind == SystemKind::and_gate ? 0.0 : 12.57e-9;
  setup.stop_delay = kv.time(name + ".stop_delay", setup.stop_delay);

  sys.coincidence_window = kv.time(name + ".window", sys.coincidence_window);
  sys.accidental_offset =
      kv.time(name + ".accidental_offset", sys.accidental_offset);
  sys.tac_range = kv.time(name + ".range", sys.tac_range);
  sys.tac_conversion_time =
      kv.time(name + ".conversion_time", sys.tac_conversion_time);
  sys.mca_bin_width = kv.time(name + ".bin_width", sys.mca_bin_width);
  sys.sca_low = kv.time(name + ".sca_low", sys.sca_low);
  sys.sca_high = kv.time(name + ".sca_high", sys.sca_high);
  if (sys.kind == SystemKind::tic) {
    sys.tic_resolution = kv.time("tic.resolution", sys.tic_resolution);
    sys.tic_bin_width = kv.time("tic.bin_width", sys.tic_bin_width);
    sys.tic_pair_target =
        kv.integer("tic.pair_target", sys.tic_pair_target);
    sys.tic_subsamples = static_cast<int>(
        kv.integer("tic.subsamples", sys.tic_subsamples));
    sys.tic_range = kv.time("tic.range", sys.tic_range);
    sys.tic_hist_range = kv.time("tic.hist_range", sys.tic_hist_range);
  }
  sys.peak.threshold_sigma =
      kv.number("peak.threshold_sigma", sys.peak.threshold_sigma);
  sys.peak.min_bins =
      static_cast<int>(kv.integer("peak.min_bins", sys.peak.min_bins));
  sys.peak.pad_bins =
      static_cast<int>(kv.integer("peak.pad_bins", sys.peak.pad_bins));
  sys.peak.guard_bins =
      static_cast<int>(kv.integer("peak.guard_bins", sys.peak.guard_bins));

  setup.timing.t_delay = setup.stop_delay;
  setup.timing.tau_tac_mean = sys.tac_conversion_time;
  setup.timing.tau_signal = cfg.estimator_tau_signal;
  setup.timing.form = cfg.correction_form;
  return setup;
}

}  // namespace detail

struct LoadedConfig {
  RunConfig run;
  std::uint64_t digest = 0;  // of the canonicalized key=value content
};

inline LoadedConfig load_run_config(std::istream& in,
                                    const std::string& origin) {
  detail::KeyValueFile kv(in, origin);
  LoadedConfig loaded;
  RunConfig& cfg = loaded.run;

  ExperimentConfig& exp = cfg.experiment;
  exp.pair_rate = kv.number("pair_rate", exp.pair_rate);
  exp.gate_duration = kv.time("gate_duration", exp.gate_duration);
  exp.jitter_sigma = kv.time("jitter_sigma", exp.jitter_sigma);
  exp.rng_seed = kv.unsigned_integer("rng_seed", exp.rng_seed);
  detail::load_arm(kv, "trigger", exp.trigger_arm);
  detail::load_arm(kv, "signal", exp.signal_arm);

  cfg.t_signal.value = kv.number("estimator.t_signal",
                                 exp.signal_arm.transmittance);
  cfg.t_signal.sigma = kv.number("estimator.t_signal_sigma", 0.0);
  cfg.estimator_tau_signal =
      kv.time("estimator.tau_signal", exp.signal_arm.dead_time);
  const std::string form = kv.text("estimator.correction_form", "linear");
  if (form == "linear")
    cfg.correction_form = CorrectionForm::linear;
  else if (form == "rational")
    cfg.correction_form = CorrectionForm::rational;
  else
    throw config_error(origin +
                       ": estimator.correction_form must be linear|rational");

  if (kv.find("pump_wavelength") != nullptr)
    cfg.pump_nm = kv.number("pump_wavelength", 0.0);
  if (kv.find("signal_wavelength") != nullptr)
    cfg.signal_nm = kv.number("signal_wavelength", 0.0);

  const std::vector<std::string> names = kv.list(
      "systems",
      {"and-gate", "tac-no-valid-start", "tac-valid-start", "tic"});
  for (const std::string& name : names)
    cfg.systems.push_back(detail::load_system(kv, name, cfg));

  kv.reject_unused();
  exp.validate();
  for (const SystemSetup& s : cfg.systems) s.system.validate();
  if (!(cfg.t_signal.value > 0.0) || !(cfg.t_signal.value <= 1.0))
    throw config_error(origin + ": estimator.t_signal must lie in (0, 1]");

  loaded.digest = detail::fnv1a64(kv.canonical());
  return loaded;
}

inline LoadedConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  return load_run_config(in, path);
}

}  // namespace klyshko
