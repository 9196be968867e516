#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ctms/csv.hpp"
#include "ctms/demand.hpp"
#include "ctms/errors.hpp"
#include "ctms/experiment_store.hpp"

namespace ctms::cli {

namespace fs = std::filesystem;

namespace {

ExperimentLayout layout_of(const fs::path& scenario_dir) {
    fs::path dir = scenario_dir.lexically_normal();
    if (dir.filename().empty()) {
        dir = dir.parent_path();
    }
    return {dir.parent_path(), dir.filename().string()};
}

fs::path metrics_path(const fs::path& dir, std::size_t day) {
    return dir / ("metrics_" + std::to_string(day) + ".json");
}

void write_plans_csv(const fs::path& path, const std::vector<PlanLogEntry>& plans) {
    std::string out =
        "window_start,program,status,iterations,polished,soft_constraints_used,objective,"
        "primal_residual,dual_residual,first_command,solve_seconds\n";
    for (const auto& p : plans) {
        out += csv::join({std::to_string(p.window_start), p.program, qp::to_string(p.status),
                          std::to_string(p.iterations), p.polished ? "1" : "0",
                          p.soft_constraints_used ? "1" : "0", csv::format_number(p.objective),
                          csv::format_number(p.primal_residual),
                          csv::format_number(p.dual_residual),
                          csv::format_number(p.first_command),
                          csv::format_number(p.solve_seconds)});
        out += '\n';
    }
    write_file_atomic(path, out);
}

void attach_deltas(MetricsReport& report, const std::vector<MetricsReport>& baseline,
                   std::size_t day) {
    if (baseline.empty()) {
        report.deltas.reset();
        return;
    }
    report.deltas = compare(report, baseline[std::min(day, baseline.size() - 1)]);
}

std::string scenario_label(double r_beta, double r_delta, double r_demand) {
    std::string label;
    const std::pair<const char*, double> factors[] = {
        {"beta", r_beta}, {"delta", r_delta}, {"demand", r_demand}};
    for (const auto& [name, value] : factors) {
        if (value != 1.0) {
            label += std::string(label.empty() ? "" : "_") + name + "_" + csv::format_number(value);
        }
    }
    return label;
}

}  // namespace

ScenarioOutcome run_scenario(const ExperimentConfig& cfg, const ScenarioRun& run,
                             const fs::path& out_root, const std::vector<MetricsReport>& baseline,
                             std::ostream& log) {
    if (run.days == 0) {
        throw ConfigError("days must be at least 1");
    }
    const bool uses_estimates =
        run.kind == ControllerKind::mpc_est || run.kind == ControllerKind::ilc;
    if (!uses_estimates && (run.r_beta != 1.0 || run.r_delta != 1.0 || run.r_demand != 1.0)) {
        throw ConfigError(to_string(run.kind) +
                          " does not use parameter estimates; scaling factors must be 1");
    }
    const Estimates estimates = scenario_estimates(cfg, run.r_beta, run.r_delta, run.r_demand);
    const DaySetup setup = cfg.day_setup(estimates);
    const std::string hash = hash_hex(config_hash(cfg));

    const ExperimentLayout layout{out_root, run.scenario_id};
    Manifest expected;
    expected.scenario_id = run.scenario_id;
    expected.config_hash = hash;
    expected.r_beta = run.r_beta;
    expected.r_delta = run.r_delta;
    expected.r_demand = run.r_demand;
    expected.controller = to_string(run.kind);
    expected.t_s = 0;
    expected.t_e = cfg.peak_steps;
    expected.horizon = cfg.controller.horizon;
    expected.update_period = cfg.controller.update_period;
    expected.num_cells = cfg.highway.num_cells();
    const Manifest manifest = open_experiment(layout, expected);

    ScenarioOutcome outcome;
    outcome.directory = layout.directory();
    outcome.resumed_days = std::min(manifest.day_count, run.days);
    for (std::size_t d = 0; d < outcome.resumed_days; ++d) {
        MetricsReport report = read_metrics_json(metrics_path(outcome.directory, d));
        attach_deltas(report, baseline, d);
        outcome.rows.push_back({run.scenario_id, expected.controller, d, report});
    }

    std::optional<IterationRecord> prev;
    if (manifest.day_count > 0 && manifest.day_count < run.days) {
        prev = load_day(layout, manifest.day_count - 1);
    }
    // Rows of stored days survive a resume.
    std::string tightness_csv;
    const auto tightness_path = outcome.directory / "tightness.csv";
    if (manifest.day_count > 0 && fs::exists(tightness_path)) {
        std::ifstream in(tightness_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto fields = csv::split(line);
            if (!fields.empty() && csv::parse_number(fields[0]) <
                                       static_cast<double>(manifest.day_count)) {
                tightness_csv += line + "\n";
            }
        }
    }
    for (std::size_t d = manifest.day_count; d < run.days; ++d) {
        ControllerKind kind = run.kind;
        if (kind == ControllerKind::ilc && d == 0) {
            kind = ControllerKind::mpc_est;
        }
        DayResult result = run_day(setup, kind, d, prev ? &*prev : nullptr);
        MetricsReport report = evaluate(result.trajectory, 0, cfg.peak_steps, cfg.highway);
        attach_deltas(report, baseline, d);

        write_file_atomic(metrics_path(outcome.directory, d), to_json(report));
        write_plans_csv(outcome.directory / ("plans_" + std::to_string(d) + ".csv"),
                        result.plans);
        if (run.write_trajectories) {
            write_trajectory_csv(outcome.directory / ("trajectory_" + std::to_string(d) + ".csv"),
                                 result.trajectory, cfg.highway);
        }
        // The record is the commit point: a day counts once the manifest
        // lists it.
        save_day(layout, result.record, hash);

        std::size_t soft = 0;
        for (const auto& p : result.plans) {
            soft += p.soft_constraints_used ? 1 : 0;
        }
        log << run.scenario_id << " day " << d << " (" << to_string(kind) << "): TTT "
            << report.ttt << " TWT " << report.twt << " TTS " << report.tts << " delta_emax "
            << report.delta_emax;
        if (report.deltas) {
            log << " delta_TTT " << report.deltas->ttt;
        }
        if (kind == ControllerKind::mpc_est || kind == ControllerKind::mpc_gt) {
            log << " tightness " << result.tightness.fraction() << " ("
                << result.tightness.tight_pairs << "/" << result.tightness.positive_pairs << ")";
            tightness_csv += std::to_string(d) + "," +
                             std::to_string(result.tightness.positive_pairs) + "," +
                             std::to_string(result.tightness.tight_pairs) + "," +
                             csv::format_number(result.tightness.fraction()) + "\n";
        }
        if (soft > 0) {
            log << " soft_fallbacks " << soft;
        }
        log << std::endl;

        outcome.tightness += result.tightness;
        outcome.rows.push_back({run.scenario_id, expected.controller, d, report});
        prev = std::move(result.record);
    }
    if (!tightness_csv.empty()) {
        write_file_atomic(tightness_path,
                          "day,positive_pairs,tight_pairs,fraction\n" + tightness_csv);
    }
    write_summary_csv(outcome.directory / "summary.csv", outcome.rows);
    return outcome;
}

std::vector<MetricsReport> load_scenario_metrics(const fs::path& scenario_dir) {
    if (!fs::is_directory(scenario_dir)) {
        throw IoError("scenario directory " + scenario_dir.string() + " does not exist");
    }
    const ExperimentLayout layout = layout_of(scenario_dir);
    const Manifest m = read_manifest(layout);
    std::vector<MetricsReport> days;
    for (std::size_t d = 0; d < m.day_count; ++d) {
        days.push_back(read_metrics_json(metrics_path(layout.directory(), d)));
    }
    return days;
}

std::vector<ComparedScenario> compare_scenarios(const std::vector<fs::path>& scenario_dirs,
                                                const fs::path& baseline_dir) {
    if (!fs::is_directory(baseline_dir)) {
        throw IoError("baseline directory " + baseline_dir.string() + " does not exist");
    }
    const Manifest base = read_manifest(layout_of(baseline_dir));
    const auto base_days = load_scenario_metrics(baseline_dir);
    if (base_days.empty()) {
        throw IoError("baseline " + baseline_dir.string() + " has no stored days");
    }
    std::vector<ComparedScenario> out;
    for (const auto& dir : scenario_dirs) {
        const auto layout = layout_of(dir);
        const Manifest m = read_manifest(layout);
        if (m.config_hash != base.config_hash) {
            throw ConfigError(dir.string() + ": config hash " + m.config_hash +
                              " differs from the baseline's " + base.config_hash);
        }
        if (m.t_s != base.t_s || m.t_e != base.t_e || m.num_cells != base.num_cells) {
            throw ConfigError(dir.string() + ": metric window or network differs from the baseline");
        }
        ComparedScenario c{m.scenario_id, m.controller, load_scenario_metrics(dir)};
        for (std::size_t d = 0; d < c.days.size(); ++d) {
            attach_deltas(c.days[d], base_days, d);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<SummaryRow> summary_rows(const std::vector<ComparedScenario>& cmp) {
    std::vector<SummaryRow> rows;
    for (const auto& c : cmp) {
        for (std::size_t d = 0; d < c.days.size(); ++d) {
            rows.push_back({c.scenario_id, c.controller, d, c.days[d]});
        }
    }
    return rows;
}

std::string deltas_svg(const std::vector<ComparedScenario>& cmp, bool log_scale) {
    constexpr double panel_w = 440.0;
    constexpr double panel_h = 260.0;
    constexpr double margin_l = 70.0;
    constexpr double margin_r = 20.0;
    constexpr double margin_t = 30.0;
    constexpr double margin_b = 40.0;
    constexpr double legend_h = 24.0;
    static const char* const palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    struct Panel {
        const char* title;
        double (*value)(const MetricsReport&);
    };
    const Panel panels[] = {
        {"delta TTT [veh h]", [](const MetricsReport& r) { return r.deltas ? r.deltas->ttt : 0.0; }},
        {"delta TWT [veh h]", [](const MetricsReport& r) { return r.deltas ? r.deltas->twt : 0.0; }},
        {"delta TTS [veh h]", [](const MetricsReport& r) { return r.deltas ? r.deltas->tts : 0.0; }},
        {"delta e_max [-]", [](const MetricsReport& r) { return r.delta_emax; }},
    };
    std::size_t max_days = 1;
    for (const auto& c : cmp) {
        max_days = std::max(max_days, c.days.size());
    }

    std::ostringstream svg;
    svg << std::setprecision(6);
    const double width = 2 * panel_w;
    const double height = 2 * panel_h + legend_h * static_cast<double>((cmp.size() + 3) / 4) + 10;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (std::size_t p = 0; p < 4; ++p) {
        const double ox = static_cast<double>(p % 2) * panel_w;
        const double oy = static_cast<double>(p / 2) * panel_h;
        const double x0 = ox + margin_l;
        const double x1 = ox + panel_w - margin_r;
        const double y0 = oy + panel_h - margin_b;
        const double y1 = oy + margin_t;

        // Transformed values, then the axis range.
        double smallest_positive = HUGE_VAL;
        for (const auto& c : cmp) {
            for (const auto& r : c.days) {
                const double v = std::abs(panels[p].value(r));
                if (v > 0.0) {
                    smallest_positive = std::min(smallest_positive, v);
                }
            }
        }
        const double floor_value =
            std::isfinite(smallest_positive) ? std::pow(10.0, std::floor(std::log10(smallest_positive)) - 1)
                                             : 1e-6;
        auto transform = [&](double v) {
            return log_scale ? std::log10(std::max(std::abs(v), floor_value)) : v;
        };
        double lo = HUGE_VAL;
        double hi = -HUGE_VAL;
        for (const auto& c : cmp) {
            for (const auto& r : c.days) {
                const double t = transform(panels[p].value(r));
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            }
        }
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (log_scale) {
            lo = std::floor(lo);
            hi = std::ceil(hi);
        }
        if (hi - lo < 1e-12) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double xspan = static_cast<double>(std::max<std::size_t>(max_days - 1, 1));
        auto px = [&](std::size_t d) { return x0 + (x1 - x0) * static_cast<double>(d) / xspan; };
        auto py = [&](double t) { return y0 - (y0 - y1) * (t - lo) / (hi - lo); };

        svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << oy + 18
            << "\" text-anchor=\"middle\" font-size=\"13\">" << panels[p].title
            << (log_scale ? " (|value|, log scale)" : "") << "</text>\n";
        svg << "<polyline fill=\"none\" stroke=\"black\" points=\"" << x0 << ',' << y1 << ' ' << x0
            << ',' << y0 << ' ' << x1 << ',' << y0 << "\"/>\n";
        const int ticks = log_scale ? static_cast<int>(hi - lo) : 4;
        for (int t = 0; t <= ticks; ++t) {
            const double tv = lo + (hi - lo) * t / ticks;
            const double y = py(tv);
            svg << "<line x1=\"" << x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
                << "\" stroke=\"#dddddd\"/>\n";
            svg << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">";
            if (log_scale) {
                svg << "1e" << static_cast<int>(std::lround(tv));
            } else {
                svg << tv;
            }
            svg << "</text>\n";
        }
        for (std::size_t d = 0; d < max_days; ++d) {
            svg << "<text x=\"" << px(d) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
                << d << "</text>\n";
        }
        svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y0 + 32
            << "\" text-anchor=\"middle\">day</text>\n";

        for (std::size_t s = 0; s < cmp.size(); ++s) {
            const char* color = palette[s % std::size(palette)];
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t d = 0; d < cmp[s].days.size(); ++d) {
                svg << px(d) << ',' << py(transform(panels[p].value(cmp[s].days[d]))) << ' ';
            }
            svg << "\"/>\n";
            for (std::size_t d = 0; d < cmp[s].days.size(); ++d) {
                svg << "<circle r=\"2.5\" fill=\"" << color << "\" cx=\"" << px(d) << "\" cy=\""
                    << py(transform(panels[p].value(cmp[s].days[d]))) << "\"/>\n";
            }
        }
    }
    for (std::size_t s = 0; s < cmp.size(); ++s) {
        const double lx = 20.0 + static_cast<double>(s % 4) * (width - 40.0) / 4.0;
        const double ly = 2 * panel_h + 16.0 + legend_h * static_cast<double>(s / 4);
        svg << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"14\" height=\"4\" fill=\""
            << palette[s % std::size(palette)] << "\"/>\n";
        svg << "<text x=\"" << lx + 20 << "\" y=\"" << ly << "\">" << cmp[s].scenario_id << " ("
            << cmp[s].controller << ")</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

namespace {

struct SimulateArgs {
    std::string config;
    std::string demand;
    std::string controller;
    std::size_t days{1};
    double r_beta{1.0};
    double r_delta{1.0};
    double r_demand{1.0};
    std::string out;
    std::string scenario;
    std::string baseline;
    bool no_trajectories{false};
};

struct CompareArgs {
    std::vector<std::string> scenarios;
    std::string baseline;
    std::string out;
    bool log_scale{false};
};

struct GenDemandArgs {
    PeakShape shape;
    std::optional<double> flat;
    std::size_t steps{1170};
    std::string out;
};

struct BatchArgs {
    std::string config;
    std::string demand;
    std::string scenarios;
    std::string controller{"ilc"};
    std::size_t days{5};
    std::string out;
    bool no_trajectories{false};
    bool linear{false};
};

ExperimentConfig load_with_demand(const std::string& config, const std::string& demand) {
    ExperimentConfig cfg = load_config(config);
    if (!demand.empty()) {
        cfg.demand = read_demand_csv(demand);
        cfg.demand_source = "csv:" + demand;
    }
    return cfg;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    const ExperimentConfig cfg = load_with_demand(a.config, a.demand);
    ScenarioRun run;
    run.kind = parse_controller_kind(a.controller);
    run.days = a.days;
    run.r_beta = a.r_beta;
    run.r_delta = a.r_delta;
    run.r_demand = a.r_demand;
    run.write_trajectories = !a.no_trajectories;
    run.scenario_id = a.scenario;
    if (run.scenario_id.empty()) {
        const std::string label = scenario_label(a.r_beta, a.r_delta, a.r_demand);
        run.scenario_id = a.controller + (label.empty() ? "" : "_" + label);
    }
    std::vector<MetricsReport> baseline;
    if (!a.baseline.empty()) {
        baseline = load_scenario_metrics(a.baseline);
        if (baseline.empty()) {
            throw IoError("baseline " + a.baseline + " has no stored days");
        }
    }
    ensure_directory(a.out);
    const auto outcome = run_scenario(cfg, run, a.out, baseline, out);
    if (outcome.resumed_days > 0) {
        out << "resumed " << outcome.resumed_days << " stored day(s)\n";
    }
    out << "wrote " << (outcome.directory / "summary.csv").string() << '\n';
    return exit_ok;
}

int write_comparison(const std::vector<ComparedScenario>& cmp, const fs::path& out_dir,
                     bool log_scale, std::ostream& out) {
    ensure_directory(out_dir);
    write_summary_csv(out_dir / "deltas.csv", summary_rows(cmp));
    write_file_atomic(out_dir / "deltas.svg", deltas_svg(cmp, log_scale));
    out << "wrote " << (out_dir / "deltas.csv").string() << " and "
        << (out_dir / "deltas.svg").string() << '\n';
    return exit_ok;
}

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    std::vector<fs::path> dirs(a.scenarios.begin(), a.scenarios.end());
    return write_comparison(compare_scenarios(dirs, a.baseline), a.out, a.log_scale, out);
}

int cmd_gen_demand(const GenDemandArgs& a, std::ostream& out) {
    if (a.steps == 0) {
        throw ConfigError("steps must be positive");
    }
    PeakShape shape = a.shape;
    if (a.flat) {
        PeakShape flat = PeakShape::flat(*a.flat);
        flat.peak_steps = shape.peak_steps;
        flat.noise_std = shape.noise_std;
        flat.seed = shape.seed;
        shape = flat;
    }
    write_demand_csv(a.out, generate_peak_demand(shape, a.steps));
    out << "wrote " << a.steps << " demand steps to " << a.out << '\n';
    return exit_ok;
}

int cmd_batch(const BatchArgs& a, std::ostream& out) {
    const ExperimentConfig cfg = load_with_demand(a.config, a.demand);
    const auto specs =
        a.scenarios.empty() ? table2_scenarios(cfg.scenario_mode) : read_scenarios_csv(a.scenarios);
    const ControllerKind kind = parse_controller_kind(a.controller);
    ensure_directory(a.out);

    // GT-MPC does not depend on earlier days, so one day is the baseline of
    // every day.
    ScenarioRun base_run;
    base_run.scenario_id = "gt_mpc";
    base_run.kind = ControllerKind::mpc_gt;
    base_run.write_trajectories = !a.no_trajectories;
    const auto base = run_scenario(cfg, base_run, a.out, {}, out);
    std::vector<MetricsReport> baseline;
    for (const auto& row : base.rows) {
        baseline.push_back(row.report);
    }

    std::vector<fs::path> dirs;
    std::vector<SummaryRow> finals;
    for (const auto& spec : specs) {
        ScenarioRun run;
        run.scenario_id = spec.id;
        run.kind = kind;
        run.days = a.days;
        run.r_beta = spec.r_beta;
        run.r_delta = spec.r_delta;
        run.r_demand = spec.r_demand;
        run.write_trajectories = !a.no_trajectories;
        const auto outcome = run_scenario(cfg, run, a.out, baseline, out);
        dirs.push_back(outcome.directory);
        finals.push_back(outcome.rows.back());
    }
    write_summary_csv(fs::path(a.out) / "batch_summary.csv", finals);
    return write_comparison(compare_scenarios(dirs, base.directory), a.out, !a.linear, out);
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Freeway CTM-s simulator with MPC and iterative learning ramp metering", "ctms"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run one scenario for a number of days");
    simulate->add_option("-c,--config", sim.config, "Experiment config (JSON)")->required();
    simulate->add_option("--demand", sim.demand, "Demand CSV overriding the config's demand");
    simulate->add_option("-k,--controller", sim.controller,
                         "uncontrolled, mpc_est, mpc_gt or ilc (day 0 of ilc runs mpc_est)")
        ->required();
    simulate->add_option("-d,--days", sim.days, "Number of days")->check(CLI::PositiveNumber);
    simulate->add_option("--r-beta", sim.r_beta, "Split ratio estimate factor")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--r-delta", sim.r_delta, "Service delay estimate factor")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--r-demand", sim.r_demand, "Upstream demand estimate factor")
        ->check(CLI::PositiveNumber);
    simulate->add_option("-o,--out", sim.out, "Output root directory")->required();
    simulate->add_option("--scenario", sim.scenario,
                         "Scenario id (default: controller and scaling factors)");
    simulate->add_option("--baseline", sim.baseline,
                         "Stored scenario directory whose metrics give the deltas");
    simulate->add_flag("--no-trajectories", sim.no_trajectories, "Skip trajectory CSV files");

    CompareArgs cmp;
    auto* compare_cmd = app.add_subcommand("compare", "Tabulate and plot deltas versus a baseline");
    compare_cmd->add_option("scenarios", cmp.scenarios, "Scenario directories")->required();
    compare_cmd->add_option("-b,--baseline", cmp.baseline, "Baseline scenario directory")
        ->required();
    compare_cmd->add_option("-o,--out", cmp.out, "Output directory")->required();
    compare_cmd->add_flag("--log", cmp.log_scale, "Plot |delta| on a log scale");

    GenDemandArgs gen;
    auto* gen_demand = app.add_subcommand("gen-demand", "Write a synthetic peak demand CSV");
    gen_demand->add_option("-n,--steps", gen.steps, "Number of steps");
    gen_demand->add_option("-o,--out", gen.out, "Output CSV")->required();
    gen_demand->add_option("--flat", gen.flat, "Constant level instead of a peak [veh/h]");
    gen_demand->add_option("--base", gen.shape.base_level, "Off-peak level [veh/h]");
    gen_demand->add_option("--first-plateau", gen.shape.first_plateau, "First plateau [veh/h]");
    gen_demand->add_option("--valley", gen.shape.valley, "Level between plateaus [veh/h]");
    gen_demand->add_option("--second-plateau", gen.shape.second_plateau, "Second plateau [veh/h]");
    gen_demand->add_option("--rise-start", gen.shape.rise_start, "Start of the rise (fraction)");
    gen_demand->add_option("--first-start", gen.shape.first_start, "First plateau start");
    gen_demand->add_option("--first-end", gen.shape.first_end, "First plateau end");
    gen_demand->add_option("--second-start", gen.shape.second_start, "Second plateau start");
    gen_demand->add_option("--second-end", gen.shape.second_end, "Second plateau end");
    gen_demand->add_option("--fall-end", gen.shape.fall_end, "End of the fall (fraction)");
    gen_demand->add_option("--peak-steps", gen.shape.peak_steps, "Steps the fractions refer to");
    gen_demand->add_option("--smoothing", gen.shape.smoothing_steps, "Moving average width");
    gen_demand->add_option("--noise-std", gen.shape.noise_std, "Gaussian noise [veh/h]");
    gen_demand->add_option("--seed", gen.shape.seed, "Noise seed");

    BatchArgs batch;
    auto* batch_cmd =
        app.add_subcommand("batch", "Run the GT-MPC baseline and every scenario of a batch file");
    batch_cmd->add_option("-c,--config", batch.config, "Experiment config (JSON)")->required();
    batch_cmd->add_option("--demand", batch.demand, "Demand CSV overriding the config's demand");
    batch_cmd->add_option("-s,--scenarios", batch.scenarios,
                          "Scenario CSV (default: the 0.8/1.2 scaling set of the config's mode)");
    batch_cmd->add_option("-k,--controller", batch.controller, "Controller of the scenarios");
    batch_cmd->add_option("-d,--days", batch.days, "Days per scenario")
        ->check(CLI::PositiveNumber);
    batch_cmd->add_option("-o,--out", batch.out, "Output root directory")->required();
    batch_cmd->add_flag("--no-trajectories", batch.no_trajectories, "Skip trajectory CSV files");
    batch_cmd->add_flag("--linear", batch.linear, "Linear axes in the delta plot");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "ctms: " << e.what() << "\nRun with --help for usage.\n";
        return exit_usage;
    }

    try {
        if (simulate->parsed()) {
            return cmd_simulate(sim, out);
        }
        if (compare_cmd->parsed()) {
            return cmd_compare(cmp, out);
        }
        if (gen_demand->parsed()) {
            return cmd_gen_demand(gen, out);
        }
        return cmd_batch(batch, out);
    } catch (const ConfigError& e) {
        err << "ctms: configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const IoError& e) {
        err << "ctms: I/O error: " << e.what() << '\n';
        return exit_io;
    } catch (const SolverError& e) {
        err << "ctms: solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const ModelFault& e) {
        err << "ctms: model fault: " << e.what() << '\n';
        return exit_model;
    }
}

}  // namespace ctms::cli
