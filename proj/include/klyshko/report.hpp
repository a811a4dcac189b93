#pragma once
// File formats: the counts CSV (the estimator's external input/output
// schema), histogram dumps, and number formatting helpers. Doubles are
// written with 17 significant digits so a parsed file reproduces the
// original values bit for bit.

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "klyshko/calibration.hpp"
#include "klyshko/config.hpp"
#include "klyshko/electronics.hpp"

namespace klyshko {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_quantity(const Quantity& q, const char* fmt = "%.4g") {
  char buf[80];
  std::snprintf(buf, sizeof buf, fmt, q.value);
  std::string out = buf;
  std::snprintf(buf, sizeof buf, fmt, q.sigma);
  out += " +- ";
  out += buf;
  return out;
}

// One row of a counts file: everything estimate_efficiency needs.
struct CountsRow {
  std::string system;
  CountsRecord counts;
  Corrections corrections;
  Quantity t_signal;
};

inline constexpr const char* kCountsHeader =
    "system,n_trigger,u_n_trigger,n_background,u_n_background,"
    "n_coincidence,u_n_coincidence,n_accidental,u_n_accidental,"
    "w_signal,u_w_signal,gate_duration,alpha,beta,gamma,"
    "t_delay,tau_tac_mean,tau_signal,t_signal,u_t_signal";

inline void write_counts_csv(std::ostream& os,
                             const std::vector<CountsRow>& rows) {
  os << kCountsHeader << "\n";
  for (const CountsRow& r : rows) {
    const auto q = [](const Quantity& v) {
      return format_double(v.value) + "," + format_double(v.sigma);
    };
    os << r.system << "," << q(r.counts.n_trigger) << ","
       << q(r.counts.n_background) << "," << q(r.counts.n_coincidence) << ","
       << q(r.counts.n_accidental) << "," << q(r.counts.w_signal_mean) << ","
       << (r.counts.gate_duration ? format_double(*r.counts.gate_duration)
                                  : std::string())
       << "," << format_double(r.corrections.alpha) << ","
       << format_double(r.corrections.beta) << ","
       << format_double(r.corrections.gamma) << ","
       << format_double(r.corrections.t_delay) << ","
       << format_double(r.corrections.tau_tac_mean) << ","
       << format_double(r.corrections.tau_signal) << "," << q(r.t_signal)
       << "\n";
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline double csv_number(const std::string& field, const std::string& origin,
                         int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (trim(field.substr(pos)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw config_error(origin + ":" + std::to_string(line) +
                     ": not a number: '" + field + "'");
}

}  // namespace detail

inline std::vector<CountsRow> read_counts_csv(std::istream& in,
                                              const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw config_error(origin + ":1: empty counts file");
  if (detail::trim(line) != kCountsHeader)
    throw config_error(origin + ":1: unexpected header (expected '" +
                       std::string(kCountsHeader) + "')");
  std::vector<CountsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 20)
      throw config_error(origin + ":" + std::to_string(line_no) +
                         ": expected 20 fields, got " +
                         std::to_string(f.size()));
    const auto num = [&](int i) {
      return detail::csv_number(f[static_cast<std::size_t>(i)], origin, line_no);
    };
    CountsRow r;
    r.system = f[0];
    r.counts.n_trigger = {num(1), num(2)};
    r.counts.n_background = {num(3), num(4)};
    r.counts.n_coincidence = {num(5), num(6)};
    r.counts.n_accidental = {num(7), num(8)};
    r.counts.w_signal_mean = {num(9), num(10)};
    if (!f[11].empty()) r.counts.gate_duration = num(11);
    r.corrections.alpha = num(12);
    r.corrections.beta = num(13);
    r.corrections.gamma = num(14);
    r.corrections.t_delay = num(15);
    r.corrections.tau_tac_mean = num(16);
    r.corrections.tau_signal = num(17);
    r.t_signal = {num(18), num(19)};
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw config_error(origin + ": no data rows");
  return rows;
}

inline std::vector<CountsRow> read_counts_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open counts file: " + path);
  return read_counts_csv(in, path);
}

// Histogram dump: header "bin_width_ps origin_ps n_bins", one count per line.
inline void write_histogram(std::ostream& os, const IntervalHistogram& h) {
  os << to_ps(h.bin_width) << " " << to_ps(h.origin) << " " << h.counts.size()
     << "\n";
  for (const std::uint64_t c : h.counts) os << c << "\n";
}

}  // namespace klyshko
