#include "ctms/controllers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ctms/errors.hpp"

namespace ctms {

namespace {

using Triplet = Eigen::Triplet<double>;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

void append_block(std::vector<Triplet>& out, const SparseMatrix& m, Eigen::Index row0,
                  Eigen::Index col0, double scale) {
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
            out.emplace_back(row0 + it.row(), col0 + it.col(), scale * it.value());
        }
    }
}

SparseMatrix from_triplets(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& t) {
    SparseMatrix m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

std::vector<std::size_t> queue_rows(const LiftedQP& lifted) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < lifted.rows.size(); ++r) {
        if (lifted.rows[r].family == ConstraintFamily::queue_capacity) {
            rows.push_back(r);
        }
    }
    return rows;
}

// Shared layout of both programs: z = [x; u; t], t >= 0 the queue-row slacks
// (present only in the soft variant).
struct ProgramParts {
    Vector state_quad;  // diagonal of the x block of P
    double input_quad{0.0};
    Vector state_lin;
    Vector input_lin;
    Vector eq_rhs;  // rhs of D x - B u = eq_rhs
};

qp::QPProblem assemble(const LiftedQP& lifted, const ProgramParts& parts, double queue_backoff,
                       bool soft, double soft_penalty) {
    const auto nx = idx(lifted.state_dim());
    const auto nu = idx(lifted.input_dim());
    const auto qrows = queue_rows(lifted);
    const auto nt = soft ? idx(qrows.size()) : Eigen::Index{0};
    const auto nz = nx + nu + nt;

    qp::QPProblem prob;
    std::vector<Triplet> p;
    for (Eigen::Index i = 0; i < nx; ++i) {
        if (parts.state_quad[i] != 0.0) {
            p.emplace_back(i, i, parts.state_quad[i]);
        }
    }
    if (parts.input_quad != 0.0) {
        for (Eigen::Index i = 0; i < nu; ++i) {
            p.emplace_back(nx + i, nx + i, parts.input_quad);
        }
    }
    prob.P = from_triplets(nz, nz, p);
    prob.q = Vector::Zero(nz);
    prob.q.head(nx) = parts.state_lin;
    prob.q.segment(nx, nu) = parts.input_lin;
    prob.q.tail(nt).setConstant(soft_penalty);

    std::vector<Triplet> eq;
    append_block(eq, lifted.dynamics, 0, 0, 1.0);
    append_block(eq, lifted.input_increments, 0, nx, -1.0);
    prob.A_eq = from_triplets(nx, nz, eq);
    prob.b_eq = parts.eq_rhs;

    const auto m = idx(lifted.rows.size());
    std::vector<Triplet> in;
    append_block(in, lifted.ineq_state, 0, 0, 1.0);
    append_block(in, lifted.ineq_input, 0, nx, 1.0);
    prob.b_in = lifted.ineq_rhs;
    for (std::size_t s = 0; s < qrows.size(); ++s) {
        prob.b_in[idx(qrows[s])] -= queue_backoff;
        if (soft) {
            in.emplace_back(idx(qrows[s]), nx + nu + idx(s), -1.0);
        }
    }
    prob.A_in = from_triplets(m, nz, in);
    prob.nonneg.assign(static_cast<std::size_t>(nz), true);
    return prob;
}

PlanResult run_program(const LiftedQP& lifted, const ProgramParts& parts,
                       const ControllerConfig& ctrl, const qp::QpBackend& backend,
                       const std::optional<Vector>& warm_start) {
    const auto nx = idx(lifted.state_dim());
    const auto nu = idx(lifted.input_dim());
    qp::SolverSettings settings = ctrl.solver;
    settings.warm_start_y.reset();

    auto attempt = [&](bool soft) {
        qp::QPProblem prob = assemble(lifted, parts, ctrl.queue_backoff, soft, ctrl.soft_penalty);
        settings.warm_start_z.reset();
        if (warm_start && warm_start->size() >= nx + nu) {
            Vector z = Vector::Zero(prob.num_variables());
            z.head(nx + nu) = warm_start->head(nx + nu);
            settings.warm_start_z = std::move(z);
        }
        PlanResult result;
        result.solution = backend.solve(prob, settings);
        result.states = result.solution.z_star.head(nx);
        result.inputs = result.solution.z_star.segment(nx, nu);
        result.soft_constraints_used = soft;
        if (soft) {
            const auto t = result.solution.z_star.tail(prob.num_variables() - nx - nu);
            result.max_slack = t.size() == 0 ? 0.0 : t.maxCoeff();
        }
        return result;
    };

    PlanResult hard = attempt(false);
    if (hard.solution.status == qp::Status::optimal || !ctrl.soft_fallback) {
        return hard;
    }
    // Soft variant: one-sided penalty on the queue capacity rows only.
    return attempt(true);
}

}  // namespace

void ControllerConfig::validate(const HighwayConfig& cfg) const {
    if (horizon == 0) {
        throw ConfigError("horizon K must be positive");
    }
    if (update_period == 0 || update_period > horizon) {
        throw ConfigError("update period must satisfy 0 < p <= K");
    }
    if (!(weights.lambda > 0.0) || !(weights.quad_scale > 0.0)) {
        throw ConfigError("lambda and the quadratic scale a must be positive");
    }
    if (!(ilc_step > 0.0)) {
        throw ConfigError("ILC step alpha must be positive");
    }
    const double upstream_of_merge = cfg.cells()[cfg.station().merge_cell - 1].length_km;
    if (!(weights.w_r > 0.0 && weights.w_r < upstream_of_merge)) {
        throw ConfigError("w_r must satisfy 0 < w_r < L_{j-1} (mainstream priority)");
    }
    if (!(weights.w_rho > 0.0 && weights.w_l > 0.0 && weights.w_e > 0.0)) {
        throw ConfigError("state weights must be positive");
    }
    if (!(weights.upstream_length >= 0.0)) {
        throw ConfigError("L_{-1} must be >= 0");
    }
    if (!(ilc_regularization >= 0.0) || !(queue_backoff >= 0.0) || !(soft_penalty > 0.0)) {
        throw ConfigError("regularization, back-off and soft penalty must be nonnegative");
    }
    if (queue_backoff >= cfg.station().queue_capacity) {
        throw ConfigError("queue back-off must be smaller than e_max");
    }
}

IterationRecord::IterationRecord(std::size_t day, std::size_t cells)
    : day_index(day), num_cells(cells) {}

std::span<const double> IterationRecord::state(std::size_t k) const {
    if (k > steps()) {
        throw ModelFault("state index " + std::to_string(k) + " beyond record");
    }
    return {states.data() + k * width(), width()};
}

std::span<const double> IterationRecord::input(std::size_t k) const {
    if (k >= steps()) {
        throw ModelFault("input index " + std::to_string(k) + " beyond record");
    }
    return {inputs.data() + k * width(), width()};
}

void IterationRecord::push_state(const PlantState& state) {
    if (state.densities.size() != num_cells) {
        throw ModelFault("state does not match the record width");
    }
    states.insert(states.end(), state.densities.begin(), state.densities.end());
    states.push_back(state.in_station);
    states.push_back(state.exit_queue);
    prev_exit_outflow.push_back(state.prev_exit_cell_outflow);
}

void IterationRecord::push_step(const StepOutput& out, double demand, double metering_command) {
    if (out.interface_flows.size() != num_cells + 1) {
        throw ModelFault("step output does not match the record width");
    }
    inputs.insert(inputs.end(), out.interface_flows.begin(), out.interface_flows.end());
    inputs.push_back(out.station_outflow);
    station_inflow.push_back(out.station_inflow);
    phi_le.push_back(out.service_to_queue_flow);
    upstream_demand.push_back(demand);
    metering.push_back(metering_command);
}

void IterationRecord::validate() const {
    const std::size_t k = steps();
    const bool shapes = num_cells >= 1 && states.size() == (k + 1) * width() &&
                        prev_exit_outflow.size() == k + 1 && inputs.size() == k * width() &&
                        station_inflow.size() == k && upstream_demand.size() == k &&
                        metering.size() == k;
    if (!shapes) {
        throw ModelFault("iteration record sequences have inconsistent lengths");
    }
    for (const auto* seq : {&states, &prev_exit_outflow, &inputs, &station_inflow, &phi_le,
                            &upstream_demand, &metering}) {
        for (double v : *seq) {
            if (!std::isfinite(v) || v < 0.0) {
                throw ModelFault("iteration record entries must be finite and >= 0");
            }
        }
    }
}

IterationRecord record_from_trajectory(const Trajectory& traj, std::size_t day_index) {
    if (traj.states.empty() || traj.outputs.size() + 1 != traj.states.size()) {
        throw ModelFault("trajectory must hold one more state than outputs");
    }
    IterationRecord rec(day_index, traj.states.front().densities.size());
    for (const auto& s : traj.states) {
        rec.push_state(s);
    }
    for (std::size_t k = 0; k < traj.outputs.size(); ++k) {
        rec.push_step(traj.outputs[k], traj.upstream_demand[k], traj.metering[k]);
    }
    return rec;
}

RecordWindow slice_window(const IterationRecord& record, std::size_t k0, std::size_t K) {
    const std::size_t steps = record.steps();
    if (steps == 0) {
        throw ModelFault("previous day's record is empty");
    }
    if (k0 >= steps) {
        throw ModelFault("window start " + std::to_string(k0) + " beyond the recorded day");
    }
    const std::size_t nb = record.width();
    RecordWindow w;
    w.start_step = k0;
    w.length = K;
    w.extrapolated = k0 + K > steps;
    w.states.resize(idx(nb * (K + 1)));
    w.inputs.resize(idx(nb * K));
    for (std::size_t n = 0; n <= K; ++n) {
        const auto s = record.state(std::min(k0 + n, steps));
        std::copy(s.begin(), s.end(), w.states.data() + n * nb);
    }
    for (std::size_t n = 0; n < K; ++n) {
        const std::size_t k = std::min(k0 + n, steps - 1);
        const auto u = record.input(k);
        std::copy(u.begin(), u.end(), w.inputs.data() + n * nb);
        w.phi_le.push_back(record.phi_le[k]);
        w.upstream_demand.push_back(record.upstream_demand[k]);
    }
    w.prev_exit_outflow_at_start = record.prev_exit_outflow[k0];
    return w;
}

double modelled_station_inflow(std::span<const double> prev_exit_outflow, std::ptrdiff_t m,
                               double beta) {
    if (m < 0) {
        return 0.0;
    }
    const auto i = static_cast<std::size_t>(m);
    if (i >= prev_exit_outflow.size()) {
        throw ModelFault("station inflow requested for a step not yet measured");
    }
    return beta * prev_exit_outflow[i];
}

HorizonWindow make_window(const PlantState& measured, std::size_t k0, std::size_t K,
                          std::span<const double> prev_exit_outflow, double beta,
                          std::size_t delta) {
    HorizonWindow w;
    w.start_step = k0;
    w.length = K;
    w.measured = measured;
    w.history_slice.reserve(K);
    for (std::size_t n = 0; n < K; ++n) {
        const auto m = static_cast<std::ptrdiff_t>(k0 + n) - static_cast<std::ptrdiff_t>(delta);
        w.history_slice.push_back(modelled_station_inflow(prev_exit_outflow, m, beta));
    }
    w.station_inflow_at_start = beta * measured.prev_exit_cell_outflow;
    return w;
}

PlanResult mpc_plan(const LiftedQP& lifted, const ControllerConfig& ctrl,
                    const qp::QpBackend& backend, const std::optional<Vector>& warm_start) {
    ProgramParts parts;
    const double a = lifted.quad_scale;
    parts.state_quad = a * lifted.quad_weight;
    parts.state_lin =
        lifted.lin_state_cost - a * lifted.quad_weight.cwiseProduct(lifted.reference);
    parts.input_lin = -lifted.lin_input_cost;
    parts.eq_rhs = lifted.offset_increments + lifted.history_increments * lifted.history;
    return run_program(lifted, parts, ctrl, backend, warm_start);
}

Vector gradient_estimate(const LiftedQP& lifted, const Vector& prev_states) {
    if (prev_states.size() != idx(lifted.state_dim())) {
        throw ModelFault("previous state trajectory has wrong dimension");
    }
    const Vector weighted = lifted.quad_scale *
                                lifted.quad_weight.cwiseProduct(prev_states - lifted.reference) +
                            lifted.lin_state_cost;
    return lifted.state_map.transpose() * weighted - lifted.lin_input_cost;
}

IlcModel make_ilc_model(const LiftedQP& lifted, const RecordWindow& prev, double prev_s0) {
    if (prev.length != lifted.horizon || prev.states.size() != idx(lifted.state_dim()) ||
        prev.inputs.size() != idx(lifted.input_dim())) {
        throw ModelFault("previous-day window does not match the lifted program");
    }
    const auto nb = idx(lifted.block());
    const Vector init_shift =
        lifted.offset_increments - lifted.offset_increments_for(prev.states.head(nb), prev_s0);
    IlcModel model;
    model.prev_inputs = prev.inputs;
    model.equality_rhs =
        init_shift + lifted.dynamics * prev.states - lifted.input_increments * prev.inputs;
    model.affine_term = lifted.accumulate(model.equality_rhs);
    model.anchor_states = prev.states + lifted.accumulate(init_shift);
    model.gradient = gradient_estimate(lifted, prev.states);
    return model;
}

PlanResult ilc_plan(const LiftedQP& lifted, const RecordWindow& prev, double prev_s0,
                    const ControllerConfig& ctrl, const qp::QpBackend& backend,
                    const std::optional<Vector>& warm_start) {
    const IlcModel model = make_ilc_model(lifted, prev, prev_s0);
    LiftedQP data = lifted;
    set_data_rows(data, prev.upstream_demand, prev.phi_le);

    // 1/2 ||v - u||_W^2 with W = M'QM is 1/2 ||x - x_hat||_Q^2 on the
    // equality-constrained set, since x - x_hat = M (v - u).
    const Vector w_diag = lifted.state_map.cwiseAbs2().transpose() * lifted.quad_weight;
    const double eps = ctrl.ilc_regularization * w_diag.maxCoeff();

    ProgramParts parts;
    parts.state_quad = lifted.quad_weight;
    parts.input_quad = eps;
    parts.state_lin = -lifted.quad_weight.cwiseProduct(model.anchor_states);
    parts.input_lin = ctrl.ilc_step * model.gradient - eps * model.prev_inputs;
    parts.eq_rhs = model.equality_rhs;

    return run_program(data, parts, ctrl, backend, warm_start);
}

std::string to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::uncontrolled: return "uncontrolled";
        case ControllerKind::mpc_est: return "mpc_est";
        case ControllerKind::mpc_gt: return "mpc_gt";
        case ControllerKind::ilc: return "ilc";
    }
    return "unknown";
}

ControllerKind parse_controller_kind(const std::string& name) {
    for (auto kind : {ControllerKind::uncontrolled, ControllerKind::mpc_est, ControllerKind::mpc_gt,
                      ControllerKind::ilc}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ConfigError("unknown controller '" + name +
                      "' (expected uncontrolled, mpc_est, mpc_gt or ilc)");
}

TightnessReport relaxation_tightness(const LiftedQP& lifted, const HighwayConfig& cfg,
                                     const Vector& states, const Vector& inputs,
                                     double relative_threshold) {
    const std::size_t N = lifted.num_cells;
    const Vector slack =
        lifted.ineq_rhs - lifted.ineq_state * states - lifted.ineq_input * inputs;
    const auto& cells = cfg.cells();
    auto scale = [&](std::size_t i) {
        if (i == 0) return cells[0].capacity;
        if (i == N) return cells[N - 1].capacity;
        return std::min(cells[i - 1].capacity, cells[i].capacity);
    };
    // tight[n * (N+1) + i]: some flow-bounding row of phi_i(n) is active.
    std::vector<char> tight(lifted.horizon * (N + 1), 0);
    for (std::size_t r = 0; r < lifted.rows.size(); ++r) {
        const auto& row = lifted.rows[r];
        switch (row.family) {
            case ConstraintFamily::station_queue_demand:
            case ConstraintFamily::ramp_capacity:
            case ConstraintFamily::queue_capacity:
                continue;
            default:
                break;
        }
        if (slack[idx(r)] <= relative_threshold * scale(row.interface)) {
            tight[row.step * (N + 1) + row.interface] = 1;
        }
    }
    TightnessReport report;
    for (std::size_t n = 0; n < lifted.horizon; ++n) {
        for (std::size_t i = 0; i <= N; ++i) {
            if (inputs[idx(lifted.flow_index(n, i))] > relative_threshold * scale(i)) {
                ++report.positive_pairs;
                report.tight_pairs += tight[n * (N + 1) + i] != 0 ? 1 : 0;
            }
        }
    }
    return report;
}

PlantState day_initial_state(const DaySetup& setup) {
    PlantState initial = PlantState::empty(setup.highway);
    if (setup.warmup_steps == 0) {
        return initial;
    }
    // Uncontrolled prefix at the first demand value; only the densities carry
    // over, the station starts empty with zero service history.
    const DemandProfile level(std::vector<double>(setup.warmup_steps, setup.demand.at(0)));
    const Trajectory warm = simulate(setup.highway, level, nullptr, initial, setup.warmup_steps);
    initial.densities = warm.states.back().densities;
    return initial;
}

DayResult run_day(const DaySetup& setup, ControllerKind kind, std::size_t day_index,
                  const IterationRecord* prev, const qp::QpBackend& backend) {
    const auto& cfg = setup.highway;
    const auto& ctrl = setup.controller;
    ctrl.validate(cfg);
    const std::size_t K = ctrl.horizon;
    const std::size_t p = ctrl.update_period;
    const std::size_t total = setup.total_steps();
    if (kind == ControllerKind::ilc) {
        if (prev == nullptr) {
            throw ModelFault(
                "ILC needs the previous day's record; no prior day's data is available, run "
                "mpc_est for day 0");
        }
        prev->validate();
        if (prev->num_cells != cfg.num_cells() || prev->steps() < setup.peak_steps) {
            throw ModelFault("previous day's record does not cover the peak window");
        }
    }
    const Estimates est = kind == ControllerKind::mpc_gt ? Estimates::exact(cfg, setup.demand)
                                                         : setup.estimates;

    std::vector<double> demand_values(total);
    for (std::size_t k = 0; k < total; ++k) {
        demand_values[k] = setup.demand.at(k);
    }
    const DemandProfile demand(std::move(demand_values));

    DayResult result;
    std::vector<double> prev_exit;  // Phi_ell^-(k-1) of today, per state index
    std::vector<double> plan;       // r* for the current hold period
    std::optional<Vector> warm;
    std::size_t plan_start = 0;

    MeteringPolicy policy;
    if (kind != ControllerKind::uncontrolled) {
        policy = [&](const PlantState& state, std::size_t k) -> std::optional<double> {
            prev_exit.push_back(state.prev_exit_cell_outflow);
            if (k >= setup.peak_steps) {
                return std::nullopt;
            }
            if (k % p == 0) {
                const HorizonWindow window =
                    make_window(state, k, K, prev_exit, est.beta_es, est.delta_es_steps);
                const LiftedQP lifted = build_lifted(cfg, est, window, ctrl.weights);
                if (warm) {
                    // Shift the previous solution by one hold period.
                    const auto nb = idx(lifted.block());
                    const auto nx = idx(lifted.state_dim());
                    const auto nu = idx(lifted.input_dim());
                    const auto sh = idx(p) * nb;
                    Vector z(nx + nu);
                    z.head(nx - sh) = warm->segment(sh, nx - sh);
                    for (Eigen::Index b = nx - sh; b < nx; b += nb) {
                        z.segment(b, nb) = warm->segment(nx - nb, nb);
                    }
                    z.segment(nx, nu - sh) = warm->segment(nx + sh, nu - sh);
                    for (Eigen::Index b = nu - sh; b < nu; b += nb) {
                        z.segment(nx + b, nb) = warm->segment(nx + nu - nb, nb);
                    }
                    warm = std::move(z);
                }
                const auto t0 = std::chrono::steady_clock::now();
                PlanResult planned;
                std::string program = "mpc";
                if (kind == ControllerKind::ilc) {
                    program = "ilc";
                    const RecordWindow prev_window = slice_window(*prev, k, K);
                    const double prev_s0 = est.beta_es * prev_window.prev_exit_outflow_at_start;
                    planned = ilc_plan(lifted, prev_window, prev_s0, ctrl, backend, warm);
                } else {
                    planned = mpc_plan(lifted, ctrl, backend, warm);
                }
                const auto t1 = std::chrono::steady_clock::now();
                if (planned.solution.status == qp::Status::infeasible_detected) {
                    throw SolverError("planner at step " + std::to_string(k) +
                                      " reported an infeasible program");
                }
                warm = Vector(planned.solution.z_star.head(idx(lifted.state_dim() +
                                                               lifted.input_dim())));
                if (kind == ControllerKind::mpc_gt || kind == ControllerKind::mpc_est) {
                    result.tightness += relaxation_tightness(lifted, cfg, planned.states,
                                                             planned.inputs,
                                                             setup.tightness_threshold);
                }
                plan.assign(p, 0.0);
                for (std::size_t n = 0; n < p; ++n) {
                    plan[n] = std::max(0.0, planned.inputs[idx(lifted.ramp_index(n))]);
                }
                plan_start = k;
                PlanLogEntry entry;
                entry.window_start = k;
                entry.program = program;
                entry.status = planned.solution.status;
                entry.iterations = planned.solution.iterations;
                entry.polished = planned.solution.polished;
                entry.soft_constraints_used = planned.soft_constraints_used;
                entry.objective = planned.solution.objective;
                entry.primal_residual = planned.solution.primal_residual;
                entry.dual_residual = planned.solution.dual_residual;
                entry.first_command = plan[0];
                entry.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
                result.plans.push_back(entry);
            }
            return plan[k - plan_start];
        };
    }
    result.trajectory = simulate(cfg, demand, policy, day_initial_state(setup), total);
    result.record = record_from_trajectory(result.trajectory, day_index);
    return result;
}

DayResult run_day(const DaySetup& setup, ControllerKind kind, std::size_t day_index,
                  const IterationRecord* prev) {
    return run_day(setup, kind, day_index, prev, qp::DefaultSolver{});
}

}  // namespace ctms
