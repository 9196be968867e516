#pragma once

// Finite-horizon affine prediction model of the CTM-s and the relaxed linear
// constraints and cost of the ramp-metering program.
//
// Stacking over a window of K steps starting at k0:
//   x = col(x(k0), ..., x(k0+K)),   x(k) = [rho_0..rho_{N-1}, l, e]
//   u = col(u(k0), ..., u(k0+K-1)), u(k) = [phi_0..phi_N, r]
// so n_x = (N+2)(K+1) and n_u = (N+2)K. The station inflow s(k) is not a
// decision variable; it follows s(k+1) = beta (phi_{ell+1}(k) + s(k)) and is
// eliminated into the input map and the offset.
//
// The model is kept in two equivalent forms:
//   dense:     x = offset + M u + G_h phi_le
//   recursion: D x = B u + H phi_le + d0,   D block-bidiagonal and invertible
// The recursion form is sparse and is what the QP equality rows use.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ctms/highway.hpp"

namespace ctms {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Controller-side knowledge of the hard-to-measure parameters.
struct Estimates {
    double beta_es{};
    std::size_t delta_es_steps{};
    DemandProfile demand_es;

    [[nodiscard]] static Estimates exact(const HighwayConfig& cfg, const DemandProfile& demand);
    /// beta r_beta, round(delta r_delta), r_D D_{-1}.
    [[nodiscard]] static Estimates scaled(const HighwayConfig& cfg, const DemandProfile& demand,
                                          double r_beta, double r_delta, double r_demand);
    void validate() const;
};

/// Weights of the relaxed-linear MPC cost.
struct CostWeights {
    double lambda{0.5};
    double quad_scale{1.0};        // a
    double w_rho{1.0};
    double w_l{0.05};
    double w_e{0.1};
    double w_r{0.1};
    double upstream_length{0.5};   // L_{-1}
    double state_reference{0.0};   // x_r, uniform
};

struct HorizonWindow {
    std::size_t start_step{0};
    std::size_t length{0};
    PlantState measured;                // x(k0)
    std::vector<double> history_slice;  // phi_le over [k0, k0+K-1]
    double station_inflow_at_start{0.0};  // s(k0)
};

enum class ConstraintFamily {
    upstream_demand,        // phi_0 <= D_{-1}
    demand_density,         // phi_i <= (1-beta_{i-1}) v_{i-1} rho_{i-1}  (incl. i = j)
    demand_capacity,        // phi_i <= q_{i-1}                          (incl. i = j)
    supply_density,         // phi_i <= w_i (rho_max_i - rho_i)
    supply_capacity,        // phi_i <= q_i
    station_queue_demand,   // r <= phi_le + e / T
    ramp_capacity,          // r <= r_max
    merge_supply_density,   // phi_j + r <= w_j (rho_max_j - rho_j)
    merge_supply_capacity,  // phi_j + r <= q_j
    queue_capacity,         // e <= e_max
};

[[nodiscard]] std::string to_string(ConstraintFamily family);

struct ConstraintRow {
    ConstraintFamily family;
    std::size_t interface;  // flow index i (phi_i); for queue_capacity the merge cell
    std::size_t step;       // offset within the window; queue rows refer to x(step)
};

struct LiftedQP {
    std::size_t num_cells{0};
    std::size_t horizon{0};

    Matrix state_map;    // M, n_x x n_u
    Matrix history_map;  // G_h, n_x x K
    Vector offset;       // x(k0) repeated plus the s(k0) propagation
    Vector history;      // phi_le used for the window

    SparseMatrix dynamics;            // D
    SparseMatrix input_increments;    // B
    SparseMatrix history_increments;  // H
    Vector offset_increments;         // d0
    Vector inflow_response;           // d0 per unit s(k0)
    double station_inflow_at_start{0.0};

    SparseMatrix ineq_state;  // A_x
    SparseMatrix ineq_input;  // A_u
    Vector ineq_rhs;          // b
    std::vector<ConstraintRow> rows;

    Vector quad_weight;     // diag(Q)
    Vector reference;       // x_r
    Vector lin_state_cost;  // c_x
    Vector lin_input_cost;  // c_u
    double quad_scale{1.0};

    [[nodiscard]] std::size_t block() const noexcept { return num_cells + 2; }
    [[nodiscard]] std::size_t state_dim() const noexcept { return block() * (horizon + 1); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return block() * horizon; }

    [[nodiscard]] std::size_t density_index(std::size_t step, std::size_t cell) const {
        return step * block() + cell;
    }
    [[nodiscard]] std::size_t station_index(std::size_t step) const {
        return step * block() + num_cells;
    }
    [[nodiscard]] std::size_t queue_index(std::size_t step) const {
        return step * block() + num_cells + 1;
    }
    [[nodiscard]] std::size_t flow_index(std::size_t step, std::size_t interface) const {
        return step * block() + interface;
    }
    [[nodiscard]] std::size_t ramp_index(std::size_t step) const {
        return step * block() + num_cells + 1;
    }

    /// d0 for another measured start (x0 stacked as [rho, l, e]) and s(k0).
    [[nodiscard]] Vector offset_increments_for(const Vector& x0, double s0) const;
    /// D^{-1} v: block n of the result is the sum of blocks 0..n of v.
    [[nodiscard]] Vector accumulate(const Vector& increments) const;

    /// offset + M u + G_h phi_le.
    [[nodiscard]] Vector predict(const Vector& inputs) const;
    /// offset + M u + G_h phi for an alternative history.
    [[nodiscard]] Vector predict(const Vector& inputs, const Vector& phi_le) const;
};

/// Closed form of the inequality row count: K (4N + 4).
[[nodiscard]] constexpr std::size_t constraint_row_count(std::size_t num_cells,
                                                         std::size_t horizon) {
    return horizon * (4 * num_cells + 4);
}

/// Builds the lifted program with estimated beta and demand. The window's
/// history slice and s(k0) must already reflect the estimates.
/// Throws ConfigError when delta_es < K (in-horizon service departures are
/// not modelled) and ModelFault on dimension mismatches.
[[nodiscard]] LiftedQP build_lifted(const HighwayConfig& cfg, const Estimates& est,
                                    const HorizonWindow& window, const CostWeights& weights);

/// build_lifted with the true beta, delta and demand.
[[nodiscard]] LiftedQP ground_truth_lifted(const HighwayConfig& cfg, const DemandProfile& demand,
                                           const HorizonWindow& window,
                                           const CostWeights& weights);

/// Replaces the data-driven right-hand sides (upstream demand rows and the
/// station queue rows) with other demand / phi_le values.
void set_data_rows(LiftedQP& lifted, const std::vector<double>& demand_slice,
                   const std::vector<double>& phi_le_slice);

/// Debug dump in coordinate-triplet text form. Each matrix is written as
///   # <name> <rows> <cols>
///   <row> <col> <value>
/// and vectors as triplets with column 0.
void write_lifted_triplets(const std::filesystem::path& path, const LiftedQP& lifted);

}  // namespace ctms
