// Warm versus cold start of the ADMM backend on the QPs of a closed-loop day.
//
// The day is driven by the configured solver; every program it solves is
// recorded together with the shifted previous solution the controller offers
// as warm start. Each recorded program is then solved by ADMM twice, cold and
// warm, and the iteration counts are compared.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctms/config.hpp"
#include "ctms/errors.hpp"

namespace {

using namespace ctms;

struct Recorded {
    qp::QPProblem problem;
    qp::SolverSettings settings;
};

class RecordingBackend final : public qp::QpBackend {
public:
    [[nodiscard]] qp::QPSolution solve(const qp::QPProblem& problem,
                                       const qp::SolverSettings& settings) const override {
        records_.push_back({problem, settings});
        return inner_.solve(problem, settings);
    }
    [[nodiscard]] const std::vector<Recorded>& records() const { return records_; }

private:
    qp::DefaultSolver inner_;
    mutable std::vector<Recorded> records_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ADMM warm-start benchmark over the programs of one closed-loop day",
                 "bench_warm_start"};
    std::string config;
    std::string controller{"mpc_gt"};
    std::optional<std::size_t> peak_steps;
    std::optional<std::size_t> horizon;
    int max_iterations{20000};
    std::string csv_out;
    app.add_option("-c,--config", config, "Experiment config")->required();
    app.add_option("-k,--controller", controller, "mpc_gt or mpc_est");
    app.add_option("--peak-steps", peak_steps, "Override the peak window length");
    app.add_option("--horizon", horizon, "Override the horizon K");
    app.add_option("--max-iterations", max_iterations, "ADMM iteration cap per solve");
    app.add_option("--csv", csv_out, "Per-solve results as CSV");
    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_config(config);
        if (peak_steps) {
            cfg.peak_steps = *peak_steps;
        }
        if (horizon) {
            cfg.controller.horizon = *horizon;
            cfg.controller.update_period = std::min(cfg.controller.update_period, *horizon);
        }
        const ControllerKind kind = parse_controller_kind(controller);
        if (kind != ControllerKind::mpc_gt && kind != ControllerKind::mpc_est) {
            throw ConfigError("benchmark supports mpc_gt and mpc_est");
        }
        RecordingBackend recorder;
        const auto setup = cfg.day_setup(Estimates::exact(cfg.highway, cfg.demand));
        (void)run_day(setup, kind, 0, nullptr, recorder);

        const qp::AdmmSolver admm;
        std::size_t compared = 0;
        std::size_t warm_not_worse = 0;
        std::size_t cold_converged = 0;
        std::size_t warm_converged = 0;
        std::ofstream csv;
        if (!csv_out.empty()) {
            csv.open(csv_out);
            csv << "solve,cold_iterations,cold_status,warm_iterations,warm_status\n";
        }
        for (std::size_t i = 0; i < recorder.records().size(); ++i) {
            const auto& rec = recorder.records()[i];
            if (!rec.settings.warm_start_z) {
                continue;  // first window has nothing to shift
            }
            qp::SolverSettings cold = rec.settings;
            cold.method = qp::Method::admm;
            cold.max_iterations = max_iterations;
            cold.warm_start_z.reset();
            cold.warm_start_y.reset();
            qp::SolverSettings warm = cold;
            warm.warm_start_z = rec.settings.warm_start_z;

            const auto a = admm.solve(rec.problem, cold);
            const auto b = admm.solve(rec.problem, warm);
            ++compared;
            warm_not_worse += b.iterations <= a.iterations ? 1 : 0;
            cold_converged += a.status == qp::Status::optimal ? 1 : 0;
            warm_converged += b.status == qp::Status::optimal ? 1 : 0;
            std::cout << "solve " << i << ": cold " << a.iterations << " (" << to_string(a.status)
                      << "), warm " << b.iterations << " (" << to_string(b.status) << ")\n";
            if (csv) {
                csv << i << ',' << a.iterations << ',' << to_string(a.status) << ','
                    << b.iterations << ',' << to_string(b.status) << '\n';
            }
        }
        std::cout << "compared " << compared << " solves: warm <= cold on " << warm_not_worse
                  << " (" << (compared ? 100.0 * warm_not_worse / compared : 0.0)
                  << "%), converged cold " << cold_converged << ", warm " << warm_converged
                  << " within " << max_iterations << " iterations\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "bench_warm_start: " << e.what() << '\n';
        return 1;
    }
}
