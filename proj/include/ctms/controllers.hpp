#pragma once

// Receding-horizon ramp metering of the station exit: the nominal MPC (with
// estimated or true parameters) and the ILC program that reuses the previous
// day's measurements at the same time-of-day window.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctms/highway.hpp"
#include "ctms/lifted_model.hpp"
#include "ctms/qp_solver.hpp"

namespace ctms {

[[nodiscard]] inline qp::SolverSettings interior_point_settings() {
    qp::SolverSettings s;
    s.method = qp::Method::interior_point;
    return s;
}

struct ControllerConfig {
    std::size_t horizon{90};        // K
    std::size_t update_period{30};  // p
    CostWeights weights;
    double ilc_step{1.0};  // alpha
    /// Tikhonov term added to W = M'QM, relative to max diag(W). The
    /// terminal uniform-flow direction lies in the null space of M.
    double ilc_regularization{1e-6};
    /// The queue capacity row is planned against e_max - queue_backoff.
    double queue_backoff{0.0};
    bool soft_fallback{true};
    double soft_penalty{1e4};
    /// The control programs are LP-like; the interior-point backend is the
    /// default because ADMM stalls on them.
    qp::SolverSettings solver = interior_point_settings();

    void validate(const HighwayConfig& cfg) const;
};

/// One day's measured trajectories.
class IterationRecord {
public:
    IterationRecord() = default;
    IterationRecord(std::size_t day_index, std::size_t num_cells);

    std::size_t day_index{0};
    std::size_t num_cells{0};
    // Row-major (steps+1) x (N+2): [rho_0..rho_{N-1}, l, e] per state index.
    std::vector<double> states;
    // Phi_ell^-(k-1) per state index (memory that drives s(k)).
    std::vector<double> prev_exit_outflow;
    // Row-major steps x (N+2): [phi_0..phi_N, r] per step.
    std::vector<double> inputs;
    std::vector<double> station_inflow;  // s(k)
    std::vector<double> phi_le;          // phi_{l,e}(k)
    std::vector<double> upstream_demand;  // D_{-1}(k)
    std::vector<double> metering;         // applied r_c(k), r_max when unmetered

    [[nodiscard]] std::size_t width() const noexcept { return num_cells + 2; }
    [[nodiscard]] std::size_t steps() const noexcept { return phi_le.size(); }
    [[nodiscard]] std::span<const double> state(std::size_t k) const;
    [[nodiscard]] std::span<const double> input(std::size_t k) const;

    void push_state(const PlantState& state);
    void push_step(const StepOutput& out, double demand, double metering_command);

    /// Sequences share length, entries finite and >= 0.
    void validate() const;

    friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

[[nodiscard]] IterationRecord record_from_trajectory(const Trajectory& traj, std::size_t day_index);

/// Previous-day data over [k0, k0+K].
struct RecordWindow {
    std::size_t start_step{0};
    std::size_t length{0};
    Vector states;  // n_x
    Vector inputs;  // n_u
    std::vector<double> phi_le;           // K
    std::vector<double> upstream_demand;  // K
    double prev_exit_outflow_at_start{0.0};
    bool extrapolated{false};  // window ran past the record; last values repeated
};

[[nodiscard]] RecordWindow slice_window(const IterationRecord& record, std::size_t k0,
                                        std::size_t K);

/// Station inflow the controller attributes to state index m with split
/// ratio beta: beta Phi^-(m-1), zero before the day starts.
[[nodiscard]] double modelled_station_inflow(std::span<const double> prev_exit_outflow,
                                             std::ptrdiff_t m, double beta);

/// Horizon window as seen by a controller holding (beta, delta) estimates.
[[nodiscard]] HorizonWindow make_window(const PlantState& measured, std::size_t k0,
                                        std::size_t K,
                                        std::span<const double> prev_exit_outflow, double beta,
                                        std::size_t delta);

struct PlanResult {
    Vector states;  // predicted x
    Vector inputs;  // u* or v*
    qp::QPSolution solution;
    bool soft_constraints_used{false};
    double max_slack{0.0};
};

/// Nominal MPC: min (a/2)||x - x_r||_Q^2 + c_x'x - c_u'u over (x, u) jointly,
/// x tied to u by the recursion form of the lifted model.
[[nodiscard]] PlanResult mpc_plan(const LiftedQP& lifted, const ControllerConfig& ctrl,
                                  const qp::QpBackend& backend,
                                  const std::optional<Vector>& warm_start = std::nullopt);

/// Previous-day quantities the ILC program needs, expressed on the window.
struct IlcModel {
    Vector equality_rhs;  // D g with x_d = M v + g
    Vector affine_term;   // g
    Vector anchor_states;  // x_hat = x_init,d + x_{d-1} - x_init,d-1
    Vector gradient;       // F(x_{d-1}, u_{d-1})
    Vector prev_inputs;    // u_{d-1}
};

/// F = a M'Q(x_{d-1} - x_r) + M'c_x - c_u.
[[nodiscard]] Vector gradient_estimate(const LiftedQP& lifted, const Vector& prev_states);

/// `lifted` must be built with the estimates for today's window (today's
/// measured x(k0) and s(k0)); `prev_s0` is the previous day's modelled s(k0).
[[nodiscard]] IlcModel make_ilc_model(const LiftedQP& lifted, const RecordWindow& prev,
                                      double prev_s0);

/// ILC program: min 1/2||v - u_{d-1}||_W^2 + alpha v'F subject to the
/// error-corrected model, A_x,es x + A_u v <= b_{d-1}, x, v >= 0.
/// The data rows of `lifted` are replaced by the previous day's demand and
/// phi_le.
[[nodiscard]] PlanResult ilc_plan(const LiftedQP& lifted, const RecordWindow& prev,
                                  double prev_s0, const ControllerConfig& ctrl,
                                  const qp::QpBackend& backend,
                                  const std::optional<Vector>& warm_start = std::nullopt);

enum class ControllerKind { uncontrolled, mpc_est, mpc_gt, ilc };

[[nodiscard]] std::string to_string(ControllerKind kind);
[[nodiscard]] ControllerKind parse_controller_kind(const std::string& name);

struct PlanLogEntry {
    std::size_t window_start{0};
    std::string program;  // "mpc" or "ilc"
    qp::Status status{qp::Status::optimal};
    int iterations{0};
    bool polished{false};
    bool soft_constraints_used{false};
    double objective{0.0};
    double primal_residual{0.0};
    double dual_residual{0.0};
    double first_command{0.0};
    double solve_seconds{0.0};
};

struct TightnessReport {
    std::size_t positive_pairs{0};
    std::size_t tight_pairs{0};
    [[nodiscard]] double fraction() const {
        return positive_pairs == 0 ? 1.0
                                   : static_cast<double>(tight_pairs) /
                                         static_cast<double>(positive_pairs);
    }
    TightnessReport& operator+=(const TightnessReport& other) {
        positive_pairs += other.positive_pairs;
        tight_pairs += other.tight_pairs;
        return *this;
    }
};

/// Share of positive predicted flows phi_i(k) with at least one of their
/// bounding rows active within `relative_threshold` q_i^max.
[[nodiscard]] TightnessReport relaxation_tightness(const LiftedQP& lifted,
                                                   const HighwayConfig& cfg, const Vector& states,
                                                   const Vector& inputs,
                                                   double relative_threshold);

struct DaySetup {
    HighwayConfig highway;
    DemandProfile demand;  // true demand
    ControllerConfig controller;
    Estimates estimates;
    std::size_t peak_steps{1080};  // t_e - t_s
    std::size_t warmup_steps{0};
    double tightness_threshold{1e-4};

    /// Closed-loop length: peak plus one horizon so every window of the next
    /// day finds recorded data.
    [[nodiscard]] std::size_t total_steps() const { return peak_steps + controller.horizon; }
};

struct DayResult {
    IterationRecord record;
    Trajectory trajectory;
    std::vector<PlanLogEntry> plans;
    TightnessReport tightness;
};

/// Closed-loop simulation of one day with replanning every p steps over the
/// peak window. ILC requires `prev`.
[[nodiscard]] DayResult run_day(const DaySetup& setup, ControllerKind kind,
                                std::size_t day_index, const IterationRecord* prev,
                                const qp::QpBackend& backend);
[[nodiscard]] DayResult run_day(const DaySetup& setup, ControllerKind kind,
                                std::size_t day_index, const IterationRecord* prev = nullptr);

/// Initial plant state of every day (empty, or densities after warm-up).
[[nodiscard]] PlantState day_initial_state(const DaySetup& setup);

}  // namespace ctms
