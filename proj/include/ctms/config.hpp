#pragma once

// Experiment configuration file (JSON). Schema, version 1:
//
// {
//   "schema_version": 1,
//   "highway": {
//     "sample_time_s": 10,
//     "cells": [ {"length_km": .., "free_flow_speed": .., "congestion_wave_speed": ..,
//                 "capacity": .., "jam_density": ..}, ... ],
//     "station": {"exit_cell": 4, "merge_cell": 6, "station_capacity": 400,
//                 "queue_capacity": 20, "ramp_capacity": 1500, "service_delay_steps": 480,
//                 "split_ratio": 0.1, "mainstream_priority": 0.9}
//   },
//   "controller": {"horizon": 90, "update_period": 30, "lambda": 0.5, "quad_scale": 1,
//                  "ilc_step": 1, "w_rho": 1, "w_e": 0.1, "w_l": 0.05, "w_r": 0.1,
//                  "upstream_length": 0.5, ...optional tuning keys...},
//   "protocol": {"peak_steps": 1080, "warmup_steps": 0, "tightness_threshold": 1e-4,
//                "scenario_mode": "one_at_a_time"},
//   "demand": {"csv": "path relative to the config"} or {"generator": {PeakShape fields}},
//   "solver": {optional SolverSettings fields}
// }
//
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctms/controllers.hpp"
#include "ctms/demand.hpp"

namespace ctms {

enum class ScenarioMode { one_at_a_time, simultaneous };

struct ExperimentConfig {
    HighwayConfig highway;
    ControllerConfig controller;
    std::size_t peak_steps{1080};
    std::size_t warmup_steps{0};
    double tightness_threshold{1e-4};
    ScenarioMode scenario_mode{ScenarioMode::one_at_a_time};
    DemandProfile demand;
    std::string demand_source;  // "csv:<path>" or "generator"

    /// Setup of one day with the given estimates.
    [[nodiscard]] DaySetup day_setup(const Estimates& estimates) const;
};

/// Throws ConfigError on schema violations and IoError when unreadable.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
[[nodiscard]] ExperimentConfig parse_config(const std::string& text,
                                            const std::filesystem::path& base_dir);

/// FNV-1a 64-bit over the canonical serialization of the physical and
/// controller parameters plus the demand values.
[[nodiscard]] std::uint64_t config_hash(const ExperimentConfig& cfg);
[[nodiscard]] std::string hash_hex(std::uint64_t hash);

/// Estimates for scaling factors. In one-at-a-time mode at most one factor may
/// differ from 1.
[[nodiscard]] Estimates scenario_estimates(const ExperimentConfig& cfg, double r_beta,
                                           double r_delta, double r_demand);

struct ScenarioSpec {
    std::string id;
    double r_beta{1.0};
    double r_delta{1.0};
    double r_demand{1.0};
};

/// Batch file: header `scenario,r_beta,r_delta,r_demand`, one scenario per row.
[[nodiscard]] std::vector<ScenarioSpec> read_scenarios_csv(const std::filesystem::path& path);

/// Under/over-estimation scenarios with factors 0.8 and 1.2: six rows varying
/// one factor at a time, or two rows scaling all factors together.
[[nodiscard]] std::vector<ScenarioSpec> table2_scenarios(ScenarioMode mode);

}  // namespace ctms
