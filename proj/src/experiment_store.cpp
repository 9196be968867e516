#include "ctms/experiment_store.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctms/csv.hpp"
#include "ctms/errors.hpp"

namespace ctms {

namespace {

using nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string manifest_json(const Manifest& m) {
    ordered_json j;
    j["schema_version"] = m.schema_version;
    j["scenario_id"] = m.scenario_id;
    j["config_hash"] = m.config_hash;
    j["r_beta"] = m.r_beta;
    j["r_delta"] = m.r_delta;
    j["r_demand"] = m.r_demand;
    j["controller"] = m.controller;
    j["day_count"] = m.day_count;
    j["t_s"] = m.t_s;
    j["t_e"] = m.t_e;
    j["horizon"] = m.horizon;
    j["update_period"] = m.update_period;
    j["num_cells"] = m.num_cells;
    return j.dump(2) + "\n";
}

std::string header(std::size_t n) {
    std::vector<std::string> cols{"k"};
    for (std::size_t i = 0; i < n; ++i) {
        cols.push_back("rho_" + std::to_string(i));
    }
    cols.insert(cols.end(), {"l", "e", "prev_exit_outflow"});
    for (std::size_t i = 0; i <= n; ++i) {
        cols.push_back("phi_" + std::to_string(i));
    }
    cols.insert(cols.end(), {"r", "s", "phi_le", "upstream_demand", "metering"});
    return csv::join(cols);
}

}  // namespace

bool Manifest::same_experiment(const Manifest& other) const {
    Manifest a = *this;
    Manifest b = other;
    a.day_count = b.day_count = 0;
    return a == b;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        out.flush();
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
    }
}

Manifest read_manifest(const ExperimentLayout& layout) {
    const auto text = read_file(layout.manifest_path());
    try {
        const auto j = nlohmann::json::parse(text);
        Manifest m;
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != 1) {
            throw IoError("unsupported manifest schema_version");
        }
        m.scenario_id = j.at("scenario_id").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.r_beta = j.at("r_beta").get<double>();
        m.r_delta = j.at("r_delta").get<double>();
        m.r_demand = j.at("r_demand").get<double>();
        m.controller = j.at("controller").get<std::string>();
        m.day_count = j.at("day_count").get<std::size_t>();
        m.t_s = j.at("t_s").get<std::size_t>();
        m.t_e = j.at("t_e").get<std::size_t>();
        m.horizon = j.at("horizon").get<std::size_t>();
        m.update_period = j.at("update_period").get<std::size_t>();
        m.num_cells = j.at("num_cells").get<std::size_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(layout.manifest_path().string() + ": malformed manifest: " + e.what());
    }
}

Manifest open_experiment(const ExperimentLayout& layout, const Manifest& expected) {
    if (layout.scenario_id.empty() ||
        layout.scenario_id.find_first_of("/\\") != std::string::npos) {
        throw ConfigError("scenario id must be a plain directory name");
    }
    if (std::filesystem::exists(layout.manifest_path())) {
        Manifest existing = read_manifest(layout);
        if (!existing.same_experiment(expected)) {
            throw ConfigError("existing manifest in " + layout.directory().string() +
                              " describes a different experiment (config hash " +
                              existing.config_hash + "); use a new scenario id");
        }
        return existing;
    }
    std::error_code ec;
    std::filesystem::create_directories(layout.directory(), ec);
    if (ec) {
        throw IoError("cannot create " + layout.directory().string() + ": " + ec.message());
    }
    Manifest fresh = expected;
    fresh.day_count = 0;
    write_file_atomic(layout.manifest_path(), manifest_json(fresh));
    return fresh;
}

void write_record_csv(const std::filesystem::path& path, const IterationRecord& record) {
    record.validate();
    const std::size_t n = record.num_cells;
    const std::size_t w = record.width();
    std::string out = header(n) + "\n";
    for (std::size_t k = 0; k <= record.steps(); ++k) {
        std::vector<std::string> f{std::to_string(k)};
        for (double v : record.state(k)) {
            f.push_back(csv::format_number(v));
        }
        f.push_back(csv::format_number(record.prev_exit_outflow[k]));
        if (k < record.steps()) {
            for (double v : record.input(k)) {
                f.push_back(csv::format_number(v));
            }
            for (double v : {record.station_inflow[k], record.phi_le[k],
                             record.upstream_demand[k], record.metering[k]}) {
                f.push_back(csv::format_number(v));
            }
        } else {
            f.resize(f.size() + w + 4);
        }
        out += csv::join(f);
        out += '\n';
    }
    write_file_atomic(path, out);
}

IterationRecord read_record_csv(const std::filesystem::path& path, std::size_t day_index) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError(path.string() + ": empty record file");
    }
    const auto cols = csv::split(line);
    // k + N densities + l, e, prev + (N+1) flows + r, s, phi_le, demand, metering
    if (cols.size() < 12 || (cols.size() - 10) % 2 != 0) {
        throw IoError(path.string() + ": unexpected record header");
    }
    const std::size_t n = (cols.size() - 10) / 2;
    if (line != header(n)) {
        throw IoError(path.string() + ": unexpected record header");
    }
    IterationRecord rec(day_index, n);
    const std::size_t w = rec.width();
    std::vector<std::vector<std::string>> rows;
    std::size_t expected_k = 0;
    bool final_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (final_seen) {
            throw IoError(path.string() + ": rows after the final state row");
        }
        const auto f = csv::split(line);
        if (f.size() != cols.size()) {
            throw IoError(path.string() + ": row " + std::to_string(expected_k) +
                          " has the wrong number of fields");
        }
        if (csv::parse_number(f[0]) != static_cast<double>(expected_k)) {
            throw IoError(path.string() + ": non-contiguous step index");
        }
        for (std::size_t c = 1; c <= w; ++c) {
            rec.states.push_back(csv::parse_number(f[c]));
        }
        rec.prev_exit_outflow.push_back(csv::parse_number(f[w + 1]));
        const std::size_t first = w + 2;
        if (f[first].empty()) {
            final_seen = true;
        } else {
            for (std::size_t c = first; c < first + w; ++c) {
                rec.inputs.push_back(csv::parse_number(f[c]));
            }
            rec.station_inflow.push_back(csv::parse_number(f[first + w]));
            rec.phi_le.push_back(csv::parse_number(f[first + w + 1]));
            rec.upstream_demand.push_back(csv::parse_number(f[first + w + 2]));
            rec.metering.push_back(csv::parse_number(f[first + w + 3]));
        }
        ++expected_k;
    }
    if (!final_seen) {
        throw IoError(path.string() + ": missing final state row");
    }
    try {
        rec.validate();
    } catch (const ModelFault& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return rec;
}

void save_day(const ExperimentLayout& layout, const IterationRecord& record,
              const std::string& config_hash) {
    Manifest m = read_manifest(layout);
    if (m.config_hash != config_hash) {
        throw ConfigError("config hash " + config_hash + " does not match manifest hash " +
                          m.config_hash + "; refusing to mix configurations");
    }
    if (record.day_index != m.day_count) {
        throw ConfigError("expected day " + std::to_string(m.day_count) + ", got day " +
                          std::to_string(record.day_index));
    }
    if (record.num_cells != m.num_cells) {
        throw ConfigError("record width does not match the manifest");
    }
    const auto path = layout.day_path(record.day_index);
    if (std::filesystem::exists(path)) {
        throw IoError(path.string() + " already exists; saved days are immutable");
    }
    write_record_csv(path, record);
    ++m.day_count;
    write_file_atomic(layout.manifest_path(), manifest_json(m));
}

IterationRecord load_day(const ExperimentLayout& layout, std::size_t day) {
    const Manifest m = read_manifest(layout);
    if (day >= m.day_count) {
        throw IoError("day " + std::to_string(day) + " not stored in " +
                      layout.directory().string() + " (" + std::to_string(m.day_count) +
                      " days)");
    }
    return read_record_csv(layout.day_path(day), day);
}

RecordWindow load_window(const ExperimentLayout& layout, std::size_t day, std::size_t k0,
                         std::size_t K) {
    return slice_window(load_day(layout, day), k0, K);
}

}  // namespace ctms
