// klyshko - coincidence-calibration toolbox.
//
//   run             simulate a full calibration run and write reports
//   estimate        evaluate the efficiency estimator on a counts file
//   reproduce-table re-check the published measurement table
//
// Exit status is 0 iff every comparison made by the invocation passed.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "klyshko/klyshko.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  if (const char* env = std::getenv("KLYSHKO_OUT_DIR")) return env;
  return "out";
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

int cmd_run(const std::string& config_path, std::uint64_t seed, bool seed_set,
            const std::string& out_dir, bool dump_timestamps_flag,
            klyshko::CorrectionsMode mode) {
  const klyshko::LoadedConfig loaded = klyshko::load_run_config(config_path);
  const std::uint64_t effective_seed =
      seed_set ? seed : loaded.run.experiment.rng_seed;

  const klyshko::RunReport report =
      klyshko::run_pipeline(loaded.run, effective_seed, loaded.digest, mode);

  fs::create_directories(out_dir);
  {
    auto os = open_out(fs::path(out_dir) / "report.txt");
    klyshko::write_text_report(os, report, loaded.run);
  }
  {
    auto os = open_out(fs::path(out_dir) / "report.csv");
    klyshko::write_csv_report(os, report);
  }
  {
    auto os = open_out(fs::path(out_dir) / "counts.csv");
    klyshko::write_counts_csv(os, klyshko::counts_rows(report, loaded.run));
  }
  for (const klyshko::SystemOutcome& o : report.outcomes) {
    for (std::size_t i = 0; i < o.histograms.size(); ++i) {
      std::string name = "hist-" + o.name;
      if (o.histograms.size() > 1) name += "-sub" + std::to_string(i);
      auto os = open_out(fs::path(out_dir) / (name + ".txt"));
      klyshko::write_histogram(os, o.histograms[i]);
    }
    if (dump_timestamps_flag && o.ok()) {
      auto os = open_out(fs::path(out_dir) / ("timestamps-" + o.name + ".txt"));
      klyshko::dump_timestamps(os, o.channels, report.config_digest);
    }
  }

  klyshko::write_text_report(std::cout, report, loaded.run);
  std::cout << "\nreports written to " << out_dir << "\n";
  return report.all_passed() ? 0 : 1;
}

int cmd_estimate(const std::string& counts_path, klyshko::CorrectionsMode mode) {
  const std::vector<klyshko::CountsRow> rows =
      klyshko::read_counts_csv(counts_path);
  bool ok = true;
  for (const klyshko::CountsRow& row : rows) {
    try {
      const klyshko::Corrections corr = mode == klyshko::CorrectionsMode::on
                                            ? row.corrections
                                            : klyshko::Corrections{};
      const klyshko::EfficiencyEstimate est =
          klyshko::estimate_efficiency(row.counts, corr, row.t_signal);
      std::cout << row.system << ": eta*T "
                << klyshko::format_quantity(est.eta_times_t, "%.4f") << ", eta "
                << klyshko::format_quantity(est.eta, "%.4f") << "\n  budget:";
      for (const klyshko::ErrorContribution& c : est.error_budget)
        std::cout << " " << c.source << " "
                  << klyshko::format_double(c.relative);
      std::cout << "\n";
    } catch (const std::exception& e) {
      std::cout << row.system << ": error: " << e.what() << "\n";
      ok = false;
    }
  }
  return ok ? 0 : 1;
}

int cmd_reproduce(const std::string& column, double tolerance,
                  bool tolerance_set, klyshko::CorrectionsMode mode) {
  const double tol_eta_t = tolerance_set ? tolerance : 0.003;
  const double tol_eta = tolerance_set ? tolerance : 0.004;
  const klyshko::TableReport report =
      klyshko::reproduce_table(column, tol_eta_t, tol_eta, mode);
  klyshko::write_table_report(std::cout, report);
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coincidence-calibration toolbox (photon-pair method)"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "simulate and analyze a full run");
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = default_out_dir();
  bool dump_ts = false;
  bool run_corrections_off = false;
  run->add_option("--config", config_path, "run configuration file")
      ->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "output directory (env KLYSHKO_OUT_DIR)");
  run->add_flag("--dump-timestamps", dump_ts, "write raw event streams");
  run->add_flag("--corrections-off", run_corrections_off,
                "force alpha = beta = gamma = 1");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "estimate from a counts file");
  std::string counts_path;
  std::string corrections = "on";
  estimate->add_option("--counts", counts_path, "counts CSV file")->required();
  estimate->add_option("--corrections", corrections, "on|off")
      ->check(CLI::IsMember({"on", "off"}));

  // reproduce-table
  auto* reproduce =
      app.add_subcommand("reproduce-table", "re-check the published table");
  std::string column;
  double tolerance = 0.0;
  std::string table_corrections = "on";
  reproduce->add_option("--column", column,
                        "single column (and-gate, tac-no-valid-start, "
                        "tac-valid-start, tic)");
  auto* tol_opt =
      reproduce->add_option("--tolerance", tolerance, "delta tolerance");
  reproduce->add_option("--corrections", table_corrections, "on|off")
      ->check(CLI::IsMember({"on", "off"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, seed, seed_opt->count() > 0, out_dir,
                     dump_ts,
                     run_corrections_off ? klyshko::CorrectionsMode::off
                                         : klyshko::CorrectionsMode::on);
    if (estimate->parsed())
      return cmd_estimate(counts_path, corrections == "on"
                                           ? klyshko::CorrectionsMode::on
                                           : klyshko::CorrectionsMode::off);
    if (reproduce->parsed())
      return cmd_reproduce(column, tolerance, tol_opt->count() > 0,
                           table_corrections == "on"
                               ? klyshko::CorrectionsMode::on
                               : klyshko::CorrectionsMode::off);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
