#include "ctms/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctms/csv.hpp"
#include "ctms/errors.hpp"

namespace ctms {

namespace {

using nlohmann::json;

void allow_keys(const json& obj, const std::string& where, const std::set<std::string>& keys) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (!keys.contains(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

double number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) {
        throw ConfigError("missing '" + key + "' in " + where);
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) {
        throw ConfigError("'" + key + "' in " + where + " must be a number");
    }
    return v.get<double>();
}

std::size_t count(const json& obj, const std::string& key, const std::string& where) {
    const double v = number(obj, key, where);
    if (!(v >= 0.0) || v != std::floor(v)) {
        throw ConfigError("'" + key + "' in " + where + " must be a nonnegative integer");
    }
    return static_cast<std::size_t>(v);
}

template <typename T>
void optional_number(const json& obj, const std::string& key, const std::string& where, T& out) {
    if (obj.contains(key)) {
        if constexpr (std::is_integral_v<T>) {
            out = static_cast<T>(count(obj, key, where));
        } else {
            out = number(obj, key, where);
        }
    }
}

void optional_bool(const json& obj, const std::string& key, const std::string& where, bool& out) {
    if (obj.contains(key)) {
        if (!obj.at(key).is_boolean()) {
            throw ConfigError("'" + key + "' in " + where + " must be a boolean");
        }
        out = obj.at(key).get<bool>();
    }
}

HighwayConfig parse_highway(const json& h) {
    allow_keys(h, "highway", {"sample_time_s", "cells", "station"});
    if (!h.contains("cells") || !h.at("cells").is_array()) {
        throw ConfigError("highway.cells must be an array");
    }
    std::vector<CellParams> cells;
    for (std::size_t i = 0; i < h.at("cells").size(); ++i) {
        const auto& c = h.at("cells")[i];
        const std::string where = "highway.cells[" + std::to_string(i) + "]";
        allow_keys(c, where,
                   {"length_km", "free_flow_speed", "congestion_wave_speed", "capacity",
                    "jam_density"});
        cells.push_back({number(c, "length_km", where), number(c, "free_flow_speed", where),
                         number(c, "congestion_wave_speed", where), number(c, "capacity", where),
                         number(c, "jam_density", where)});
    }
    if (!h.contains("station")) {
        throw ConfigError("missing highway.station");
    }
    const auto& s = h.at("station");
    const std::string where = "highway.station";
    allow_keys(s, where,
               {"exit_cell", "merge_cell", "station_capacity", "queue_capacity", "ramp_capacity",
                "service_delay_steps", "split_ratio", "mainstream_priority"});
    StationParams st;
    st.exit_cell = count(s, "exit_cell", where);
    st.merge_cell = count(s, "merge_cell", where);
    st.station_capacity = number(s, "station_capacity", where);
    st.queue_capacity = number(s, "queue_capacity", where);
    st.ramp_capacity = number(s, "ramp_capacity", where);
    st.service_delay_steps = count(s, "service_delay_steps", where);
    st.split_ratio = number(s, "split_ratio", where);
    st.mainstream_priority = number(s, "mainstream_priority", where);
    return HighwayConfig(number(h, "sample_time_s", "highway"), std::move(cells), st);
}

ControllerConfig parse_controller(const json& c) {
    const std::string where = "controller";
    allow_keys(c, where,
               {"horizon", "update_period", "lambda", "quad_scale", "ilc_step", "w_rho", "w_e",
                "w_l", "w_r", "upstream_length", "state_reference", "ilc_regularization",
                "queue_backoff", "soft_fallback", "soft_penalty"});
    ControllerConfig ctrl;
    ctrl.horizon = count(c, "horizon", where);
    ctrl.update_period = count(c, "update_period", where);
    ctrl.weights.lambda = number(c, "lambda", where);
    ctrl.weights.quad_scale = number(c, "quad_scale", where);
    ctrl.ilc_step = number(c, "ilc_step", where);
    ctrl.weights.w_rho = number(c, "w_rho", where);
    ctrl.weights.w_e = number(c, "w_e", where);
    ctrl.weights.w_l = number(c, "w_l", where);
    ctrl.weights.w_r = number(c, "w_r", where);
    ctrl.weights.upstream_length = number(c, "upstream_length", where);
    optional_number(c, "state_reference", where, ctrl.weights.state_reference);
    optional_number(c, "ilc_regularization", where, ctrl.ilc_regularization);
    optional_number(c, "queue_backoff", where, ctrl.queue_backoff);
    optional_bool(c, "soft_fallback", where, ctrl.soft_fallback);
    optional_number(c, "soft_penalty", where, ctrl.soft_penalty);
    return ctrl;
}

void parse_solver(const json& s, qp::SolverSettings& out) {
    const std::string where = "solver";
    allow_keys(s, where,
               {"method", "interior_max_iterations", "eps_abs", "eps_rel", "eps_infeasible", "max_iterations", "rho", "sigma", "alpha",
                "adaptive_rho", "adaptive_rho_interval", "adaptive_rho_tolerance",
                "scaling_iterations", "check_interval", "polish", "polish_trigger",
                "polish_refinement"});
    if (s.contains("method")) {
        if (!s.at("method").is_string()) {
            throw ConfigError("solver.method must be a string");
        }
        try {
            out.method = qp::parse_method(s.at("method").get<std::string>());
        } catch (const SolverError& e) {
            throw ConfigError(e.what());
        }
    }
    optional_number(s, "interior_max_iterations", where, out.interior_max_iterations);
    optional_number(s, "eps_abs", where, out.eps_abs);
    optional_number(s, "eps_rel", where, out.eps_rel);
    optional_number(s, "eps_infeasible", where, out.eps_infeasible);
    optional_number(s, "max_iterations", where, out.max_iterations);
    optional_number(s, "rho", where, out.rho);
    optional_number(s, "sigma", where, out.sigma);
    optional_number(s, "alpha", where, out.alpha);
    optional_bool(s, "adaptive_rho", where, out.adaptive_rho);
    optional_number(s, "adaptive_rho_interval", where, out.adaptive_rho_interval);
    optional_number(s, "adaptive_rho_tolerance", where, out.adaptive_rho_tolerance);
    optional_number(s, "scaling_iterations", where, out.scaling_iterations);
    optional_number(s, "check_interval", where, out.check_interval);
    optional_bool(s, "polish", where, out.polish);
    optional_number(s, "polish_trigger", where, out.polish_trigger);
    optional_number(s, "polish_refinement", where, out.polish_refinement);
}

PeakShape parse_shape(const json& g) {
    const std::string where = "demand.generator";
    allow_keys(g, where,
               {"base_level", "first_plateau", "valley", "second_plateau", "rise_start",
                "first_start", "first_end", "second_start", "second_end", "fall_end",
                "peak_steps", "smoothing_steps", "noise_std", "seed"});
    PeakShape shape;
    optional_number(g, "base_level", where, shape.base_level);
    optional_number(g, "first_plateau", where, shape.first_plateau);
    optional_number(g, "valley", where, shape.valley);
    optional_number(g, "second_plateau", where, shape.second_plateau);
    optional_number(g, "rise_start", where, shape.rise_start);
    optional_number(g, "first_start", where, shape.first_start);
    optional_number(g, "first_end", where, shape.first_end);
    optional_number(g, "second_start", where, shape.second_start);
    optional_number(g, "second_end", where, shape.second_end);
    optional_number(g, "fall_end", where, shape.fall_end);
    optional_number(g, "peak_steps", where, shape.peak_steps);
    optional_number(g, "smoothing_steps", where, shape.smoothing_steps);
    optional_number(g, "noise_std", where, shape.noise_std);
    optional_number(g, "seed", where, shape.seed);
    shape.validate();
    return shape;
}

void hash_bytes(std::uint64_t& h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

DaySetup ExperimentConfig::day_setup(const Estimates& estimates) const {
    return DaySetup{highway, demand, controller, estimates, peak_steps, warmup_steps,
                    tightness_threshold};
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    allow_keys(root, "config",
               {"schema_version", "highway", "controller", "protocol", "demand", "solver"});
    if (count(root, "schema_version", "config") != 1) {
        throw ConfigError("unsupported config schema_version (expected 1)");
    }
    for (const char* key : {"highway", "controller", "protocol", "demand"}) {
        if (!root.contains(key)) {
            throw ConfigError(std::string("missing section '") + key + "'");
        }
    }
    ExperimentConfig cfg{parse_highway(root.at("highway")),
                         parse_controller(root.at("controller")),
                         1080,
                         0,
                         1e-4,
                         ScenarioMode::one_at_a_time,
                         {},
                         {}};
    const auto& proto = root.at("protocol");
    allow_keys(proto, "protocol",
               {"peak_steps", "warmup_steps", "tightness_threshold", "scenario_mode"});
    cfg.peak_steps = count(proto, "peak_steps", "protocol");
    optional_number(proto, "warmup_steps", "protocol", cfg.warmup_steps);
    optional_number(proto, "tightness_threshold", "protocol", cfg.tightness_threshold);
    if (proto.contains("scenario_mode")) {
        const auto mode = proto.at("scenario_mode").get<std::string>();
        if (mode == "one_at_a_time") {
            cfg.scenario_mode = ScenarioMode::one_at_a_time;
        } else if (mode == "simultaneous") {
            cfg.scenario_mode = ScenarioMode::simultaneous;
        } else {
            throw ConfigError("protocol.scenario_mode must be one_at_a_time or simultaneous");
        }
    }
    if (cfg.peak_steps == 0) {
        throw ConfigError("protocol.peak_steps must be positive");
    }
    if (root.contains("solver")) {
        parse_solver(root.at("solver"), cfg.controller.solver);
    }
    cfg.controller.validate(cfg.highway);

    const auto& demand = root.at("demand");
    allow_keys(demand, "demand", {"csv", "generator"});
    if (demand.contains("csv") == demand.contains("generator")) {
        throw ConfigError("demand needs exactly one of 'csv' or 'generator'");
    }
    if (demand.contains("csv")) {
        const std::filesystem::path p = demand.at("csv").get<std::string>();
        const auto resolved = p.is_absolute() ? p : base_dir / p;
        cfg.demand = read_demand_csv(resolved);
        cfg.demand_source = "csv:" + p.generic_string();
    } else {
        const PeakShape shape = parse_shape(demand.at("generator"));
        cfg.demand = generate_peak_demand(shape, cfg.peak_steps + cfg.controller.horizon);
        cfg.demand_source = "generator";
    }
    if (cfg.demand.empty()) {
        throw ConfigError("demand profile is empty");
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read config " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto put = [&](double v) {
        hash_bytes(h, csv::format_number(v));
        hash_bytes(h, ";");
    };
    const auto& hw = cfg.highway;
    put(hw.sample_time_s());
    for (const auto& c : hw.cells()) {
        for (double v : {c.length_km, c.free_flow_speed, c.congestion_wave_speed, c.capacity,
                         c.jam_density}) {
            put(v);
        }
    }
    const auto& st = hw.station();
    for (double v : {static_cast<double>(st.exit_cell), static_cast<double>(st.merge_cell),
                     st.station_capacity, st.queue_capacity, st.ramp_capacity,
                     static_cast<double>(st.service_delay_steps), st.split_ratio,
                     st.mainstream_priority}) {
        put(v);
    }
    const auto& c = cfg.controller;
    const auto& w = c.weights;
    for (double v : {static_cast<double>(c.horizon), static_cast<double>(c.update_period), w.lambda,
                     w.quad_scale, c.ilc_step, w.w_rho, w.w_l, w.w_e, w.w_r, w.upstream_length,
                     w.state_reference, c.ilc_regularization, c.queue_backoff,
                     c.soft_fallback ? 1.0 : 0.0, c.soft_penalty}) {
        put(v);
    }
    const auto& s = c.solver;
    for (double v : {s.method == qp::Method::admm ? 0.0 : 1.0,
                     static_cast<double>(s.interior_max_iterations), s.eps_abs, s.eps_rel, s.eps_infeasible, static_cast<double>(s.max_iterations),
                     s.rho, s.sigma, s.alpha, s.adaptive_rho ? 1.0 : 0.0,
                     static_cast<double>(s.adaptive_rho_interval), s.adaptive_rho_tolerance,
                     static_cast<double>(s.scaling_iterations),
                     static_cast<double>(s.check_interval), s.polish ? 1.0 : 0.0,
                     s.polish_trigger, static_cast<double>(s.polish_refinement)}) {
        put(v);
    }
    put(static_cast<double>(cfg.peak_steps));
    put(static_cast<double>(cfg.warmup_steps));
    put(cfg.tightness_threshold);
    for (double v : cfg.demand.values()) {
        put(v);
    }
    return h;
}

std::string hash_hex(std::uint64_t hash) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[hash & 0xF];
        hash >>= 4;
    }
    return out;
}

Estimates scenario_estimates(const ExperimentConfig& cfg, double r_beta, double r_delta,
                             double r_demand) {
    if (cfg.scenario_mode == ScenarioMode::one_at_a_time) {
        const int perturbed = (r_beta != 1.0) + (r_delta != 1.0) + (r_demand != 1.0);
        if (perturbed > 1) {
            throw ConfigError(
                "one_at_a_time scenario mode allows a single scaling factor different from 1");
        }
    }
    return Estimates::scaled(cfg.highway, cfg.demand, r_beta, r_delta, r_demand);
}

std::vector<ScenarioSpec> read_scenarios_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read scenario file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "scenario,r_beta,r_delta,r_demand") {
        throw IoError(path.string() + ": header must be scenario,r_beta,r_delta,r_demand");
    }
    std::vector<ScenarioSpec> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = csv::split(line);
        if (f.size() != 4 || f[0].empty()) {
            throw IoError(path.string() + ": malformed scenario row '" + line + "'");
        }
        out.push_back({std::string(f[0]), csv::parse_number(f[1]), csv::parse_number(f[2]),
                       csv::parse_number(f[3])});
    }
    return out;
}

std::vector<ScenarioSpec> table2_scenarios(ScenarioMode mode) {
    if (mode == ScenarioMode::simultaneous) {
        return {{"all_0.8", 0.8, 0.8, 0.8}, {"all_1.2", 1.2, 1.2, 1.2}};
    }
    return {{"beta_0.8", 0.8, 1.0, 1.0},  {"beta_1.2", 1.2, 1.0, 1.0},
            {"delta_0.8", 1.0, 0.8, 1.0}, {"delta_1.2", 1.0, 1.2, 1.0},
            {"demand_0.8", 1.0, 1.0, 0.8}, {"demand_1.2", 1.0, 1.0, 1.2}};
}

}  // namespace ctms
