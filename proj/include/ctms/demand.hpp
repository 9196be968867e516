#pragma once

// Demand CSV (`step,demand_veh_per_h`) and the synthetic morning-peak
// generator.

#include <cstdint>
#include <filesystem>

#include "ctms/highway.hpp"

namespace ctms {

[[nodiscard]] DemandProfile read_demand_csv(const std::filesystem::path& path);
void write_demand_csv(const std::filesystem::path& path, const DemandProfile& demand);

/// Double-plateau morning peak. Knot positions are fractions of the peak
/// window `peak_steps`; values past the window keep `base_level`.
/// The piecewise-linear curve is smoothed by a centered moving average of
/// `smoothing_steps` and optionally perturbed by Gaussian noise drawn from a
/// seeded generator.
struct PeakShape {
    double base_level{1350.0};
    double first_plateau{1900.0};
    double valley{1780.0};
    double second_plateau{1860.0};
    double rise_start{0.05};
    double first_start{0.20};
    double first_end{0.40};
    double second_start{0.50};
    double second_end{0.70};
    double fall_end{0.90};
    std::size_t peak_steps{1080};
    std::size_t smoothing_steps{31};
    double noise_std{0.0};
    std::uint64_t seed{0};

    /// Constant profile: every level equal to `level`.
    static PeakShape flat(double level);
    void validate() const;
};

[[nodiscard]] DemandProfile generate_peak_demand(const PeakShape& shape, std::size_t steps);

/// Fixed-column CSV export of a trajectory; one row per state index k.
/// Columns: k, rho_0..rho_{N-1}, l, e, prev_exit_outflow, then the step
/// outputs of interval k (empty on the final row): phi_0..phi_N, s, r,
/// phi_le, station_demand, upstream_demand, metering, D_0..D_{N-1},
/// S_0..S_{N-1}.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                          const HighwayConfig& cfg);

}  // namespace ctms
