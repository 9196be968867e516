#pragma once

// On-disk experiment layout:
//
//   <root>/<scenario_id>/manifest.json
//   <root>/<scenario_id>/day_<d>.csv        d = 0 .. day_count-1
//
// manifest.json (schema_version 1) holds the scenario id, the config hash,
// the scaling factors, the controller, the protocol window (t_s, t_e, K, p),
// the number of cells and the day count. A day file has one row per state
// index k with columns
//   k, rho_0..rho_{N-1}, l, e, prev_exit_outflow,
//   phi_0..phi_N, r, s, phi_le, upstream_demand, metering
// where the step columns of the final row are empty. Numbers are written in
// shortest round-trip form, so a save/load cycle is bit-exact.
//
// Days are append-only: a saved day is never rewritten, and every write goes
// to a temporary file that is renamed into place.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "ctms/controllers.hpp"

namespace ctms {

struct ExperimentLayout {
    std::filesystem::path root;
    std::string scenario_id;

    [[nodiscard]] std::filesystem::path directory() const { return root / scenario_id; }
    [[nodiscard]] std::filesystem::path manifest_path() const {
        return directory() / "manifest.json";
    }
    [[nodiscard]] std::filesystem::path day_path(std::size_t day) const {
        return directory() / ("day_" + std::to_string(day) + ".csv");
    }
};

struct Manifest {
    int schema_version{1};
    std::string scenario_id;
    std::string config_hash;  // 16 hex digits
    double r_beta{1.0};
    double r_delta{1.0};
    double r_demand{1.0};
    std::string controller;
    std::size_t day_count{0};
    std::size_t t_s{0};
    std::size_t t_e{0};
    std::size_t horizon{0};
    std::size_t update_period{0};
    std::size_t num_cells{0};

    /// Equal except for day_count.
    [[nodiscard]] bool same_experiment(const Manifest& other) const;
    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Creates the scenario directory and an empty manifest, or reopens an
/// existing one when it describes the same experiment. Throws ConfigError
/// when an existing manifest disagrees (config hash or parameters).
Manifest open_experiment(const ExperimentLayout& layout, const Manifest& expected);

[[nodiscard]] Manifest read_manifest(const ExperimentLayout& layout);

/// Appends `record` as the next day. Throws ConfigError when the day index is
/// not the next expected one or the hash differs from the manifest, and
/// IoError when the day file already exists or cannot be written.
void save_day(const ExperimentLayout& layout, const IterationRecord& record,
              const std::string& config_hash);

[[nodiscard]] IterationRecord load_day(const ExperimentLayout& layout, std::size_t day);

/// Slice of day `day` over [k0, k0+K] (tail rule past the record, flagged).
[[nodiscard]] RecordWindow load_window(const ExperimentLayout& layout, std::size_t day,
                                       std::size_t k0, std::size_t K);

void write_record_csv(const std::filesystem::path& path, const IterationRecord& record);
[[nodiscard]] IterationRecord read_record_csv(const std::filesystem::path& path,
                                              std::size_t day_index);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace ctms
