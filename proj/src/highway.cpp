#include "ctms/highway.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "ctms/errors.hpp"

namespace ctms {

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ConfigError(message);
    }
}

// Tolerance below which a negative occupancy is treated as round-off.
constexpr double kRoundOff = 1e-9;

double clamp_roundoff(double value, double scale, const char* what, std::size_t index) {
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite " << what << " at index " << index;
        throw ModelFault(msg.str());
    }
    if (value < 0.0) {
        if (value < -kRoundOff * std::max(1.0, scale)) {
            std::ostringstream msg;
            msg << "negative " << what << " (" << value << ") at index " << index
                << "; the configuration violates the CTM stability conditions";
            throw ModelFault(msg.str());
        }
        return 0.0;
    }
    return value;
}

}  // namespace

HighwayConfig::HighwayConfig(double sample_time_s, std::vector<CellParams> cells,
                             StationParams station)
    : sample_time_s_(sample_time_s), cells_(std::move(cells)), station_(station) {
    require(std::isfinite(sample_time_s_) && sample_time_s_ > 0.0, "sample time must be positive");
    require(cells_.size() >= 2, "a highway needs at least two cells");
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const auto& c = cells_[i];
        const std::string where = "cell " + std::to_string(i) + ": ";
        require(c.length_km > 0.0 && c.free_flow_speed > 0.0 && c.congestion_wave_speed > 0.0 &&
                    c.capacity > 0.0 && c.jam_density > 0.0,
                where + "all parameters must be strictly positive");
        require(c.free_flow_speed * c.jam_density > c.capacity,
                where + "v * rho_max must exceed q_max (triangular diagram)");
    }
    const auto& s = station_;
    require(s.exit_cell < s.merge_cell && s.merge_cell < cells_.size(),
            "station requires 0 <= exit_cell < merge_cell < N");
    require(s.station_capacity > 0.0 && s.queue_capacity > 0.0 && s.ramp_capacity > 0.0,
            "station capacities must be strictly positive");
    require(s.service_delay_steps >= 1, "service delay must be at least one step");
    require(s.split_ratio > 0.0 && s.split_ratio < 1.0, "split ratio must lie in (0,1)");
    require(s.mainstream_priority > 0.0 && s.mainstream_priority < 1.0,
            "mainstream priority must lie in (0,1)");
}

const CellParams& HighwayConfig::cell(std::size_t i) const {
    if (i >= cells_.size()) {
        throw ConfigError("cell index " + std::to_string(i) + " out of range");
    }
    return cells_[i];
}

HighwayConfig HighwayConfig::with_station(StationParams station) const {
    return HighwayConfig(sample_time_s_, cells_, station);
}

DemandProfile::DemandProfile(std::vector<double> values) : values_(std::move(values)) {
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (!std::isfinite(values_[k]) || values_[k] < 0.0) {
            throw ConfigError("demand at step " + std::to_string(k) + " must be finite and >= 0");
        }
    }
}

double DemandProfile::at(std::size_t k) const {
    if (values_.empty()) {
        throw ConfigError("empty demand profile");
    }
    return values_[std::min(k, values_.size() - 1)];
}

DemandProfile DemandProfile::scaled(double factor) const {
    std::vector<double> out(values_);
    for (auto& v : out) {
        v *= factor;
    }
    return DemandProfile(std::move(out));
}

PlantState PlantState::empty(const HighwayConfig& cfg) {
    PlantState s;
    s.densities.assign(cfg.num_cells(), 0.0);
    s.inflow_history.assign(cfg.station().service_delay_steps, 0.0);
    return s;
}

double PlantState::total_vehicles(const HighwayConfig& cfg) const {
    double total = in_station + exit_queue;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        total += densities[i] * cfg.cells()[i].length_km;
    }
    return total;
}

void PlantState::validate(const HighwayConfig& cfg) const {
    if (densities.size() != cfg.num_cells()) {
        throw ModelFault("state has " + std::to_string(densities.size()) + " densities, expected " +
                         std::to_string(cfg.num_cells()));
    }
    for (std::size_t i = 0; i < densities.size(); ++i) {
        if (!(densities[i] >= 0.0) || densities[i] > cfg.cells()[i].jam_density * (1.0 + 1e-12)) {
            throw ModelFault("density of cell " + std::to_string(i) + " outside [0, rho_max]");
        }
    }
    if (!(in_station >= 0.0) || !(exit_queue >= 0.0) || !(prev_exit_cell_outflow >= 0.0)) {
        throw ModelFault("station occupancy and outflow memory must be >= 0");
    }
    if (inflow_history.size() != cfg.station().service_delay_steps) {
        throw ModelFault("inflow history must hold exactly delta entries");
    }
    for (double v : inflow_history) {
        if (!(v >= 0.0)) {
            throw ModelFault("inflow history entries must be >= 0");
        }
    }
}

double cell_demand(std::size_t i, const PlantState& state, const HighwayConfig& cfg) {
    const auto& c = cfg.cell(i);
    return std::min((1.0 - cfg.split_at(i)) * c.free_flow_speed * state.densities.at(i),
                    c.capacity);
}

double cell_supply(std::size_t i, const PlantState& state, const HighwayConfig& cfg) {
    const auto& c = cfg.cell(i);
    return std::min(c.congestion_wave_speed * (c.jam_density - state.densities.at(i)),
                    c.capacity);
}

double station_demand(const PlantState& state, const HighwayConfig& cfg,
                      std::optional<double> metering) {
    const double available = state.service_to_queue_flow() + state.exit_queue / cfg.sample_time_h();
    double demand = std::min(available, cfg.station().ramp_capacity);
    if (metering) {
        if (!(*metering >= 0.0)) {
            throw ConfigError("metering command must be >= 0");
        }
        demand = std::min(demand, *metering);
    }
    return demand;
}

StepResult step(const PlantState& state, double upstream_demand, std::optional<double> metering,
                const HighwayConfig& cfg) {
    const std::size_t n = cfg.num_cells();
    const auto& st = cfg.station();
    const double t_h = cfg.sample_time_h();
    if (state.densities.size() != n || state.inflow_history.size() != st.service_delay_steps) {
        throw ModelFault("plant state does not match the configuration");
    }
    if (!std::isfinite(upstream_demand) || upstream_demand < 0.0) {
        throw ModelFault("upstream demand must be finite and >= 0");
    }

    StepOutput out;
    out.station_inflow = st.split_ratio * state.prev_exit_cell_outflow;
    out.service_to_queue_flow = state.service_to_queue_flow();
    out.cell_demands.resize(n);
    out.cell_supplies.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.cell_demands[i] = cell_demand(i, state, cfg);
        out.cell_supplies[i] = cell_supply(i, state, cfg);
    }
    out.station_demand = station_demand(state, cfg, metering);

    auto& phi = out.interface_flows;
    phi.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double upstream = i == 0 ? upstream_demand : out.cell_demands[i - 1];
        const double supply = out.cell_supplies[i];
        if (i == st.merge_cell) {
            const double mainstream_supply =
                std::max(supply - out.station_demand, st.mainstream_priority * supply);
            phi[i] = std::min(upstream, mainstream_supply);
            const double station_supply =
                std::max(supply - phi[i], (1.0 - st.mainstream_priority) * supply);
            out.station_outflow = std::min(out.station_demand, station_supply);
        } else {
            phi[i] = std::min(upstream, supply);
        }
    }
    // S_N = +inf: the last interface is demand limited only.
    phi[n] = out.cell_demands[n - 1];

    StepResult result{state, std::move(out)};
    auto& next = result.state;
    const auto& o = result.output;
    const auto& flows = o.interface_flows;
    for (std::size_t i = 0; i < n; ++i) {
        const double inflow = flows[i] + (i == st.merge_cell ? o.station_outflow : 0.0);
        const double outflow = flows[i + 1] + (i == st.exit_cell ? o.station_inflow : 0.0);
        const double updated =
            state.densities[i] + t_h / cfg.cells()[i].length_km * (inflow - outflow);
        next.densities[i] = clamp_roundoff(updated, cfg.cells()[i].jam_density, "density", i);
    }
    next.in_station = clamp_roundoff(
        state.in_station + t_h * (o.station_inflow - o.service_to_queue_flow),
        std::max(1.0, state.in_station), "station occupancy", st.exit_cell);
    next.exit_queue = clamp_roundoff(
        state.exit_queue + t_h * (o.service_to_queue_flow - o.station_outflow),
        std::max(1.0, state.exit_queue), "exit queue", st.merge_cell);
    next.inflow_history.pop_front();
    next.inflow_history.push_back(o.station_inflow);
    next.prev_exit_cell_outflow = flows[st.exit_cell + 1] + o.station_inflow;
    return result;
}

Trajectory simulate(const HighwayConfig& cfg, const DemandProfile& demand,
                    const MeteringPolicy& policy, PlantState initial, std::size_t steps) {
    if (demand.size() < steps) {
        throw ConfigError("demand profile has " + std::to_string(demand.size()) +
                          " entries, simulation needs " + std::to_string(steps));
    }
    initial.validate(cfg);
    Trajectory traj;
    traj.states.reserve(steps + 1);
    traj.outputs.reserve(steps);
    traj.states.push_back(std::move(initial));
    for (std::size_t k = 0; k < steps; ++k) {
        const auto& current = traj.states.back();
        const std::optional<double> command = policy ? policy(current, k) : std::nullopt;
        auto [next, out] = step(current, demand.values()[k], command, cfg);
        traj.upstream_demand.push_back(demand.values()[k]);
        traj.metering.push_back(command.value_or(cfg.station().ramp_capacity));
        traj.outputs.push_back(std::move(out));
        traj.states.push_back(std::move(next));
    }
    return traj;
}

double conservation_residual(const PlantState& before, const PlantState& after,
                             const StepOutput& out, const HighwayConfig& cfg) {
    double change = (after.in_station - before.in_station) + (after.exit_queue - before.exit_queue);
    for (std::size_t i = 0; i < cfg.num_cells(); ++i) {
        change += cfg.cells()[i].length_km * (after.densities[i] - before.densities[i]);
    }
    const double boundary =
        cfg.sample_time_h() * (out.interface_flows.front() - out.interface_flows.back());
    return change - boundary;
}

}  // namespace ctms
