#include "ctms/demand.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include "ctms/csv.hpp"
#include "ctms/errors.hpp"

namespace ctms {

DemandProfile read_demand_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open demand file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("demand file " + path.string() + " is empty");
    }
    const auto header = csv::split(line);
    if (header.size() != 2 || header[0] != "step" || header[1] != "demand_veh_per_h") {
        throw IoError("demand file must start with header 'step,demand_veh_per_h'");
    }
    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = csv::split(line);
        if (fields.size() != 2) {
            throw IoError("demand file row " + std::to_string(row) + ": expected two columns");
        }
        const double step = csv::parse_number(fields[0]);
        if (step != static_cast<double>(values.size())) {
            throw IoError("demand file row " + std::to_string(row) +
                          ": steps must be contiguous from 0");
        }
        values.push_back(csv::parse_number(fields[1]));
    }
    try {
        return DemandProfile(std::move(values));
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_demand_csv(const std::filesystem::path& path, const DemandProfile& demand) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write demand file " + path.string());
    }
    out << "step,demand_veh_per_h\n";
    for (std::size_t k = 0; k < demand.size(); ++k) {
        out << k << ',' << csv::format_number(demand.values()[k]) << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

PeakShape PeakShape::flat(double level) {
    PeakShape s;
    s.base_level = s.first_plateau = s.valley = s.second_plateau = level;
    s.smoothing_steps = 1;
    return s;
}

void PeakShape::validate() const {
    for (double level : {base_level, first_plateau, valley, second_plateau}) {
        if (!(level >= 0.0) || !std::isfinite(level)) {
            throw ConfigError("demand levels must be finite and >= 0");
        }
    }
    const double knots[] = {rise_start, first_start, first_end, second_start, second_end, fall_end};
    for (std::size_t i = 0; i < 6; ++i) {
        if (!(knots[i] >= 0.0 && knots[i] <= 1.0) || (i > 0 && knots[i] < knots[i - 1])) {
            throw ConfigError("peak knots must be nondecreasing fractions in [0,1]");
        }
    }
    if (peak_steps == 0 || smoothing_steps == 0) {
        throw ConfigError("peak_steps and smoothing_steps must be positive");
    }
    if (!(noise_std >= 0.0)) {
        throw ConfigError("noise_std must be >= 0");
    }
}

DemandProfile generate_peak_demand(const PeakShape& shape, std::size_t steps) {
    shape.validate();
    if (steps == 0) {
        throw ConfigError("demand generator needs steps > 0");
    }
    const double span = static_cast<double>(shape.peak_steps);
    const std::vector<std::pair<double, double>> knots = {
        {0.0, shape.base_level},
        {shape.rise_start * span, shape.base_level},
        {shape.first_start * span, shape.first_plateau},
        {shape.first_end * span, shape.first_plateau},
        {0.5 * (shape.first_end + shape.second_start) * span, shape.valley},
        {shape.second_start * span, shape.second_plateau},
        {shape.second_end * span, shape.second_plateau},
        {shape.fall_end * span, shape.base_level},
    };
    auto piecewise = [&](double t) {
        if (t <= knots.front().first) {
            return knots.front().second;
        }
        for (std::size_t i = 1; i < knots.size(); ++i) {
            const auto [t1, v1] = knots[i];
            if (t <= t1) {
                const auto [t0, v0] = knots[i - 1];
                return t1 > t0 ? v0 + (v1 - v0) * (t - t0) / (t1 - t0) : v1;
            }
        }
        return knots.back().second;
    };

    std::vector<double> raw(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        raw[k] = piecewise(static_cast<double>(k));
    }
    std::vector<double> values(steps);
    const auto half = static_cast<std::ptrdiff_t>(shape.smoothing_steps / 2);
    const auto last = static_cast<std::ptrdiff_t>(steps) - 1;
    for (std::ptrdiff_t k = 0; k <= last; ++k) {
        double sum = 0.0;
        for (std::ptrdiff_t m = k - half; m <= k + half; ++m) {
            sum += raw[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(m, 0, last))];
        }
        values[static_cast<std::size_t>(k)] = sum / static_cast<double>(2 * half + 1);
    }
    if (shape.noise_std > 0.0) {
        std::mt19937_64 rng(shape.seed);
        std::normal_distribution<double> noise(0.0, shape.noise_std);
        for (auto& v : values) {
            v = std::max(0.0, v + noise(rng));
        }
    }
    return DemandProfile(std::move(values));
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                          const HighwayConfig& cfg) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write trajectory file " + path.string());
    }
    const std::size_t n = cfg.num_cells();
    std::vector<std::string> header{"k"};
    for (std::size_t i = 0; i < n; ++i) header.push_back("rho_" + std::to_string(i));
    header.insert(header.end(), {"l", "e", "prev_exit_outflow"});
    for (std::size_t i = 0; i <= n; ++i) header.push_back("phi_" + std::to_string(i));
    header.insert(header.end(),
                  {"s", "r", "phi_le", "station_demand", "upstream_demand", "metering"});
    for (std::size_t i = 0; i < n; ++i) header.push_back("D_" + std::to_string(i));
    for (std::size_t i = 0; i < n; ++i) header.push_back("S_" + std::to_string(i));
    out << csv::join(header) << '\n';

    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const auto& x = traj.states[k];
        std::vector<std::string> row{std::to_string(k)};
        for (double rho : x.densities) row.push_back(csv::format_number(rho));
        row.push_back(csv::format_number(x.in_station));
        row.push_back(csv::format_number(x.exit_queue));
        row.push_back(csv::format_number(x.prev_exit_cell_outflow));
        if (k < traj.outputs.size()) {
            const auto& o = traj.outputs[k];
            for (double f : o.interface_flows) row.push_back(csv::format_number(f));
            row.push_back(csv::format_number(o.station_inflow));
            row.push_back(csv::format_number(o.station_outflow));
            row.push_back(csv::format_number(o.service_to_queue_flow));
            row.push_back(csv::format_number(o.station_demand));
            row.push_back(csv::format_number(traj.upstream_demand[k]));
            row.push_back(csv::format_number(traj.metering[k]));
            for (double d : o.cell_demands) row.push_back(csv::format_number(d));
            for (double s : o.cell_supplies) row.push_back(csv::format_number(s));
        } else {
            row.resize(header.size());
        }
        out << csv::join(row) << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

}  // namespace ctms
