#pragma once

// Multi-day scenario orchestration shared by the `ctms` command line tool,
// the acceptance binary and the integration tests.
//
// Output of one scenario, under <out>/<scenario_id>/:
//   manifest.json, day_<d>.csv   experiment store (see experiment_store.hpp)
//   metrics_<d>.json             MetricsReport of day d over [0, peak_steps]
//   trajectory_<d>.csv           full plant trajectory of day d
//   plans_<d>.csv                one row per controller solve
//   summary.csv                  one SummaryRow per stored day

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctms/config.hpp"
#include "ctms/controllers.hpp"
#include "ctms/metrics.hpp"

namespace ctms::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_config = 2,
    exit_io = 3,
    exit_solver = 4,
    exit_model = 5,
};

struct ScenarioRun {
    std::string scenario_id;
    ControllerKind kind{ControllerKind::uncontrolled};
    std::size_t days{1};
    double r_beta{1.0};
    double r_delta{1.0};
    double r_demand{1.0};
    bool write_trajectories{true};
};

struct ScenarioOutcome {
    std::filesystem::path directory;
    std::vector<SummaryRow> rows;  // one per day, in order
    TightnessReport tightness;     // accumulated over the days run now
    std::size_t resumed_days{0};   // days found in the store and not rerun
};

/// Runs (or resumes) a scenario. Days already in the store are kept; ILC
/// starts from the last stored day, and day 0 of an ILC scenario runs the
/// MPC with the estimated parameters. `baseline` holds per-day reports of a
/// reference run; day d is compared with baseline[min(d, size-1)].
ScenarioOutcome run_scenario(const ExperimentConfig& cfg, const ScenarioRun& run,
                             const std::filesystem::path& out_root,
                             const std::vector<MetricsReport>& baseline, std::ostream& log);

/// Per-day reports stored in a scenario directory, in day order.
[[nodiscard]] std::vector<MetricsReport> load_scenario_metrics(
    const std::filesystem::path& scenario_dir);

struct ComparedScenario {
    std::string scenario_id;
    std::string controller;
    std::vector<MetricsReport> days;  // with deltas filled in
};

/// Loads scenario directories and computes deltas versus `baseline_dir`.
/// Throws ConfigError when a manifest disagrees with the baseline on the
/// config hash, the metric window or the network size.
[[nodiscard]] std::vector<ComparedScenario> compare_scenarios(
    const std::vector<std::filesystem::path>& scenario_dirs,
    const std::filesystem::path& baseline_dir);

[[nodiscard]] std::vector<SummaryRow> summary_rows(const std::vector<ComparedScenario>& cmp);

/// Line chart with one panel per delta (TTT, TWT, TTS, emax) over days. With
/// `log_scale` the panels show |delta| on a decimal log axis; zero values are
/// drawn at the axis floor.
[[nodiscard]] std::string deltas_svg(const std::vector<ComparedScenario>& cmp, bool log_scale);

/// Entry point of the `ctms` executable.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctms::cli
