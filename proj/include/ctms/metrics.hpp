#pragma once

// Congestion and queue metrics over a closed step interval [t_s, t_e].
// Every sum is multiplied by T in hours, so TTT and TWT come out in veh h.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctms/highway.hpp"

namespace ctms {

/// T sum_{k=t_s}^{t_e} sum_i L_i rho_i(k).
[[nodiscard]] double ttt(const Trajectory& traj, std::size_t t_s, std::size_t t_e,
                         const HighwayConfig& cfg);
/// T sum_{k=t_s}^{t_e} e(k).
[[nodiscard]] double twt(const Trajectory& traj, std::size_t t_s, std::size_t t_e,
                         const HighwayConfig& cfg);
/// max_k max(e(k) - e_max, 0) / e_max.
[[nodiscard]] double delta_emax(const Trajectory& traj, std::size_t t_s, std::size_t t_e,
                                const HighwayConfig& cfg);

struct MetricsDeltas {
    double ttt{0.0};
    double twt{0.0};
    double tts{0.0};
};

struct MetricsReport {
    double ttt{0.0};
    double twt{0.0};
    double tts{0.0};  // ttt + twt
    double delta_emax{0.0};
    std::optional<MetricsDeltas> deltas;  // versus a baseline run

    [[nodiscard]] static MetricsReport from(double ttt, double twt, double delta_emax);
};

[[nodiscard]] MetricsReport evaluate(const Trajectory& traj, std::size_t t_s, std::size_t t_e,
                                     const HighwayConfig& cfg);

/// Componentwise report minus baseline.
[[nodiscard]] MetricsDeltas compare(const MetricsReport& report, const MetricsReport& baseline);

/// Fixed field names: ttt, twt, tts, delta_emax and, when present,
/// delta_ttt, delta_twt, delta_tts. Numbers use shortest round-trip form.
[[nodiscard]] std::string to_json(const MetricsReport& report);
[[nodiscard]] MetricsReport metrics_from_json(const std::string& text);

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);
[[nodiscard]] MetricsReport read_metrics_json(const std::filesystem::path& path);

struct SummaryRow {
    std::string scenario;
    std::string controller;
    std::size_t day{0};
    MetricsReport report;
};

/// Header: scenario,controller,day,ttt,twt,tts,delta_emax,delta_ttt,delta_twt,delta_tts
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
[[nodiscard]] std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

}  // namespace ctms
