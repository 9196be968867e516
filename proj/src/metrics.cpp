#include "ctms/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctms/csv.hpp"
#include "ctms/errors.hpp"

namespace ctms {

namespace {

void check_range(const Trajectory& traj, std::size_t t_s, std::size_t t_e) {
    if (t_s > t_e) {
        throw ConfigError("metric window requires t_s <= t_e");
    }
    if (t_e >= traj.states.size()) {
        throw ConfigError("metric window end " + std::to_string(t_e) +
                          " beyond trajectory of " + std::to_string(traj.states.size()) +
                          " states");
    }
}

const char* const kSummaryHeader =
    "scenario,controller,day,ttt,twt,tts,delta_emax,delta_ttt,delta_twt,delta_tts";

}  // namespace

double ttt(const Trajectory& traj, std::size_t t_s, std::size_t t_e, const HighwayConfig& cfg) {
    check_range(traj, t_s, t_e);
    double vehicles = 0.0;
    for (std::size_t k = t_s; k <= t_e; ++k) {
        const auto& rho = traj.states[k].densities;
        for (std::size_t i = 0; i < rho.size(); ++i) {
            vehicles += rho[i] * cfg.cells()[i].length_km;
        }
    }
    return cfg.sample_time_h() * vehicles;
}

double twt(const Trajectory& traj, std::size_t t_s, std::size_t t_e, const HighwayConfig& cfg) {
    check_range(traj, t_s, t_e);
    double queued = 0.0;
    for (std::size_t k = t_s; k <= t_e; ++k) {
        queued += traj.states[k].exit_queue;
    }
    return cfg.sample_time_h() * queued;
}

double delta_emax(const Trajectory& traj, std::size_t t_s, std::size_t t_e,
                  const HighwayConfig& cfg) {
    check_range(traj, t_s, t_e);
    const double cap = cfg.station().queue_capacity;
    double worst = 0.0;
    for (std::size_t k = t_s; k <= t_e; ++k) {
        worst = std::max(worst, (traj.states[k].exit_queue - cap) / cap);
    }
    return worst;
}

MetricsReport MetricsReport::from(double ttt_value, double twt_value, double delta_emax_value) {
    MetricsReport r;
    r.ttt = ttt_value;
    r.twt = twt_value;
    r.tts = ttt_value + twt_value;
    r.delta_emax = delta_emax_value;
    return r;
}

MetricsReport evaluate(const Trajectory& traj, std::size_t t_s, std::size_t t_e,
                       const HighwayConfig& cfg) {
    return MetricsReport::from(ttt(traj, t_s, t_e, cfg), twt(traj, t_s, t_e, cfg),
                               delta_emax(traj, t_s, t_e, cfg));
}

MetricsDeltas compare(const MetricsReport& report, const MetricsReport& baseline) {
    return {report.ttt - baseline.ttt, report.twt - baseline.twt, report.tts - baseline.tts};
}

std::string to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["ttt"] = report.ttt;
    j["twt"] = report.twt;
    j["tts"] = report.tts;
    j["delta_emax"] = report.delta_emax;
    if (report.deltas) {
        j["delta_ttt"] = report.deltas->ttt;
        j["delta_twt"] = report.deltas->twt;
        j["delta_tts"] = report.deltas->tts;
    }
    return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        MetricsReport r;
        r.ttt = j.at("ttt").get<double>();
        r.twt = j.at("twt").get<double>();
        r.tts = j.at("tts").get<double>();
        r.delta_emax = j.at("delta_emax").get<double>();
        if (j.contains("delta_ttt")) {
            r.deltas = MetricsDeltas{j.at("delta_ttt").get<double>(),
                                     j.at("delta_twt").get<double>(),
                                     j.at("delta_tts").get<double>()};
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed metrics JSON: ") + e.what());
    }
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path, std::ios::binary);
    out << to_json(report);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

MetricsReport read_metrics_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return metrics_from_json(buf.str());
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    out << kSummaryHeader << '\n';
    for (const auto& row : rows) {
        const auto& r = row.report;
        std::vector<std::string> fields{row.scenario,
                                        row.controller,
                                        std::to_string(row.day),
                                        csv::format_number(r.ttt),
                                        csv::format_number(r.twt),
                                        csv::format_number(r.tts),
                                        csv::format_number(r.delta_emax)};
        for (double v : {r.deltas ? r.deltas->ttt : 0.0, r.deltas ? r.deltas->twt : 0.0,
                         r.deltas ? r.deltas->tts : 0.0}) {
            fields.push_back(r.deltas ? csv::format_number(v) : std::string{});
        }
        out << csv::join(fields) << '\n';
    }
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kSummaryHeader) {
        throw IoError(path.string() + ": unexpected summary header");
    }
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = csv::split(line);
        if (f.size() != 10) {
            throw IoError(path.string() + ": summary row needs 10 fields");
        }
        SummaryRow row;
        row.scenario = std::string(f[0]);
        row.controller = std::string(f[1]);
        row.day = static_cast<std::size_t>(csv::parse_number(f[2]));
        row.report.ttt = csv::parse_number(f[3]);
        row.report.twt = csv::parse_number(f[4]);
        row.report.tts = csv::parse_number(f[5]);
        row.report.delta_emax = csv::parse_number(f[6]);
        if (!f[7].empty()) {
            row.report.deltas = MetricsDeltas{csv::parse_number(f[7]), csv::parse_number(f[8]),
                                              csv::parse_number(f[9])};
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace ctms
