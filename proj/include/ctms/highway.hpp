#pragma once

// CTM-s plant: a cell transmission model of a highway stretch with a single
// service station (exit at cell `exit_cell`, merge back at `merge_cell`).
//
// Units: densities veh/km, flows veh/h, lengths km, occupancies veh. The
// sample time is configured in seconds; every rate x time product uses it in
// hours.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace ctms {

struct CellParams {
    double length_km{};
    double free_flow_speed{};        // v_i [km/h]
    double congestion_wave_speed{};  // w_i [km/h]
    double capacity{};               // q_i^max [veh/h]
    double jam_density{};            // rho_i^max [veh/km]
};

struct StationParams {
    std::size_t exit_cell{};
    std::size_t merge_cell{};
    double station_capacity{};  // l^max [veh]
    double queue_capacity{};    // e^max [veh]
    double ramp_capacity{};     // r^max [veh/h]
    std::size_t service_delay_steps{};
    double split_ratio{};          // beta
    double mainstream_priority{};  // p^ms
};

/// Immutable physical description of the stretch. Validated on construction.
class HighwayConfig {
public:
    HighwayConfig(double sample_time_s, std::vector<CellParams> cells, StationParams station);

    [[nodiscard]] double sample_time_s() const noexcept { return sample_time_s_; }
    [[nodiscard]] double sample_time_h() const noexcept { return sample_time_s_ / 3600.0; }
    [[nodiscard]] std::size_t num_cells() const noexcept { return cells_.size(); }
    [[nodiscard]] const std::vector<CellParams>& cells() const noexcept { return cells_; }
    [[nodiscard]] const CellParams& cell(std::size_t i) const;
    [[nodiscard]] const StationParams& station() const noexcept { return station_; }

    /// beta_i: the split ratio at the exit cell, zero elsewhere.
    [[nodiscard]] double split_at(std::size_t i) const noexcept {
        return i == station_.exit_cell ? station_.split_ratio : 0.0;
    }

    /// Copy with a different split ratio / service delay (used by estimators
    /// and scenario scaling).
    [[nodiscard]] HighwayConfig with_station(StationParams station) const;

private:
    double sample_time_s_;
    std::vector<CellParams> cells_;
    StationParams station_;
};

/// Exogenous upstream demand D_{-1}(k), one value per step [veh/h].
class DemandProfile {
public:
    DemandProfile() = default;
    explicit DemandProfile(std::vector<double> values);

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    /// Value at step k; steps past the end reuse the last value (tail rule).
    [[nodiscard]] double at(std::size_t k) const;

    [[nodiscard]] DemandProfile scaled(double factor) const;

    friend bool operator==(const DemandProfile&, const DemandProfile&) = default;

private:
    std::vector<double> values_;
};

/// Simulated truth at one time step.
struct PlantState {
    std::vector<double> densities;
    double in_station{0.0};  // l(k)
    double exit_queue{0.0};  // e(k)
    // s(k-delta) ... s(k-1); front() is the value that leaves service now.
    std::deque<double> inflow_history;
    double prev_exit_cell_outflow{0.0};  // Phi_ell^-(k-1)

    /// Empty highway and station, zero service history.
    static PlantState empty(const HighwayConfig& cfg);

    [[nodiscard]] double service_to_queue_flow() const { return inflow_history.front(); }

    /// Vehicles on the stretch plus in the station and its queue.
    [[nodiscard]] double total_vehicles(const HighwayConfig& cfg) const;

    void validate(const HighwayConfig& cfg) const;
};

struct StepOutput {
    std::vector<double> interface_flows;  // phi_0 .. phi_N
    double station_inflow{0.0};           // s(k)
    double station_outflow{0.0};          // r(k)
    double service_to_queue_flow{0.0};    // phi_{l,e}(k)
    std::vector<double> cell_demands;     // D_i(k)
    double station_demand{0.0};           // D^s(k)
    std::vector<double> cell_supplies;    // S_i(k)
};

struct StepResult {
    PlantState state;
    StepOutput output;
};

[[nodiscard]] double cell_demand(std::size_t i, const PlantState& state, const HighwayConfig& cfg);
[[nodiscard]] double cell_supply(std::size_t i, const PlantState& state, const HighwayConfig& cfg);
[[nodiscard]] double station_demand(const PlantState& state, const HighwayConfig& cfg,
                                    std::optional<double> metering = std::nullopt);

/// One exact CTM-s step. Throws ModelFault on NaN or negative occupancies.
[[nodiscard]] StepResult step(const PlantState& state, double upstream_demand,
                              std::optional<double> metering, const HighwayConfig& cfg);

/// Metering command for step k given the current state; nullopt = no control.
using MeteringPolicy = std::function<std::optional<double>(const PlantState&, std::size_t)>;

struct Trajectory {
    std::vector<PlantState> states;   // steps + 1
    std::vector<StepOutput> outputs;  // steps
    std::vector<double> upstream_demand;
    std::vector<double> metering;  // applied r_c, r^max when uncontrolled
};

[[nodiscard]] Trajectory simulate(const HighwayConfig& cfg, const DemandProfile& demand,
                                  const MeteringPolicy& policy, PlantState initial,
                                  std::size_t steps);

/// Per-step conservation residual
/// sum_i L_i drho_i + dl + de - T (phi_0 - phi_N).
[[nodiscard]] double conservation_residual(const PlantState& before, const PlantState& after,
                                           const StepOutput& out, const HighwayConfig& cfg);

}  // namespace ctms
