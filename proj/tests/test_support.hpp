#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ctms/config.hpp"
#include "ctms/highway.hpp"

namespace ctms::test {

inline std::filesystem::path source_dir() { return CTMS_SOURCE_DIR; }

inline ExperimentConfig table3() { return load_config(source_dir() / "configs" / "table3.cfg"); }

/// Uniform 3-cell stretch: L = 1 km, v = 100, w = 25, q = 2000, rho_max = 100,
/// exit at cell 0, merge at cell 2, beta 0.1, p_ms 0.9, delta 5, T = 36 s.
inline HighwayConfig three_cell() {
    std::vector<CellParams> cells(3, CellParams{1.0, 100.0, 25.0, 2000.0, 100.0});
    StationParams st{0, 2, 400.0, 20.0, 1500.0, 5, 0.1, 0.9};
    return HighwayConfig(36.0, std::move(cells), st);
}

/// Random stretch that satisfies v T / L <= 1 and w T / L <= 1 in every cell.
inline HighwayConfig random_config(std::mt19937_64& rng, std::size_t n, std::size_t delta) {
    std::uniform_real_distribution<double> len(0.3, 0.8);
    std::uniform_real_distribution<double> v(80.0, 105.0);
    std::uniform_real_distribution<double> w(20.0, 40.0);
    std::uniform_real_distribution<double> q(1600.0, 2100.0);
    std::uniform_real_distribution<double> rho(65.0, 90.0);
    std::vector<CellParams> cells;
    for (std::size_t i = 0; i < n; ++i) {
        cells.push_back({len(rng), v(rng), w(rng), q(rng), rho(rng)});
    }
    std::uniform_int_distribution<std::size_t> exit_cell(0, n - 2);
    const std::size_t ell = exit_cell(rng);
    std::uniform_int_distribution<std::size_t> merge_cell(ell + 1, n - 1);
    std::uniform_real_distribution<double> beta(0.05, 0.3);
    std::uniform_real_distribution<double> pms(0.6, 0.95);
    StationParams st{ell, merge_cell(rng), 400.0, 20.0, 1500.0, delta, beta(rng), pms(rng)};
    return HighwayConfig(10.0, std::move(cells), st);
}

/// Plant trajectory of a random configuration under random metering.
inline Trajectory random_run(std::mt19937_64& rng, const HighwayConfig& cfg, std::size_t steps) {
    std::uniform_real_distribution<double> dem(600.0, 2400.0);
    std::uniform_real_distribution<double> meter(0.0, 1500.0);
    std::vector<double> demand(steps);
    std::vector<double> commands(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        demand[k] = dem(rng);
        commands[k] = meter(rng);
    }
    return simulate(cfg, DemandProfile(demand),
                    [&](const PlantState&, std::size_t k) { return commands[k]; },
                    PlantState::empty(cfg), steps);
}

inline std::vector<double> prev_exit_of(const Trajectory& traj) {
    std::vector<double> out;
    for (const auto& s : traj.states) {
        out.push_back(s.prev_exit_cell_outflow);
    }
    return out;
}

/// Fresh temporary directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("ctms_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace ctms::test
