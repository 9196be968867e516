#pragma once

// Embedded convex QP solver.
//
//   minimize    1/2 z'Pz + q'z
//   subject to  A_eq z  = b_eq
//               A_in z <= b_in
//               z_i >= 0  for every i with nonneg[i]
//
// Two backends share the problem format and the Ruiz equilibration:
//  - admm: operator splitting in the style of OSQP with a vector penalty
//    (stiffer equality rows), over-relaxation, adaptive penalty with
//    refactorization, and active-set polishing. The reduced system
//    P + sigma I + A'RA is factored by a sparse Cholesky.
//  - interior_point: Mehrotra predictor-corrector on the reduced
//    quasi-definite Newton system, factored by a sparse LDL'. Converges in
//    a few dozen iterations on the LP-like control programs where ADMM
//    stalls.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ctms::qp {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct QPProblem {
    SparseMatrix P;
    Vector q;
    SparseMatrix A_eq;
    Vector b_eq;
    SparseMatrix A_in;
    Vector b_in;
    std::vector<bool> nonneg;  // empty means no sign constraints

    [[nodiscard]] Eigen::Index num_variables() const noexcept { return q.size(); }
    [[nodiscard]] bool is_nonneg(Eigen::Index i) const {
        return !nonneg.empty() && nonneg[static_cast<std::size_t>(i)];
    }

    /// Throws SolverError on inconsistent dimensions, asymmetric P or
    /// non-finite data.
    void validate() const;

    [[nodiscard]] double objective(const Vector& z) const;
};

/// Lagrange multipliers: y_eq free, y_in >= 0, bound >= 0 (one entry per
/// variable, zero where the variable is not sign constrained). Stationarity
/// reads P z + q + A_eq' y_eq + A_in' y_in - bound = 0.
struct Multipliers {
    Vector eq;
    Vector in;
    Vector bound;
};

enum class Status { optimal, max_iterations, infeasible_detected };

[[nodiscard]] std::string to_string(Status status);

struct QPSolution {
    Vector z_star;
    Multipliers multipliers;
    double objective{0.0};
    Status status{Status::max_iterations};
    double primal_residual{0.0};
    double dual_residual{0.0};
    int iterations{0};
    bool polished{false};
    int refactorizations{0};
};

enum class Method { admm, interior_point };

[[nodiscard]] std::string to_string(Method method);
[[nodiscard]] Method parse_method(const std::string& name);

struct SolverSettings {
    Method method{Method::admm};
    double eps_abs{1e-6};
    double eps_rel{1e-6};
    double eps_infeasible{1e-8};
    int max_iterations{50000};
    double rho{0.1};
    double sigma{1e-6};
    double alpha{1.6};  // over-relaxation
    bool adaptive_rho{true};
    int adaptive_rho_interval{50};
    double adaptive_rho_tolerance{5.0};
    int scaling_iterations{15};
    int check_interval{10};
    bool polish{true};
    /// Polishing is attempted while iterating once both residuals are below
    /// this multiple of their thresholds; an accepted polish ends the solve.
    double polish_trigger{1e3};
    int polish_refinement{5};
    int interior_max_iterations{200};
    /// Warm starts are used by the ADMM backend only.
    std::optional<Vector> warm_start_z;
    std::optional<Vector> warm_start_y;  // stacked [eq, in, bound rows] duals
};

struct KktResiduals {
    double stationarity{0.0};
    double primal_feasibility{0.0};
    /// max |y_i * slack_i| together with sign violations of y_in and bound.
    double complementarity{0.0};
};

[[nodiscard]] KktResiduals kkt_residuals(const QPProblem& problem, const Vector& z,
                                         const Multipliers& multipliers);

/// Pluggable backend so another QP engine can replace the ADMM solver.
class QpBackend {
public:
    virtual ~QpBackend() = default;
    [[nodiscard]] virtual QPSolution solve(const QPProblem& problem,
                                           const SolverSettings& settings) const = 0;
};

class AdmmSolver final : public QpBackend {
public:
    [[nodiscard]] QPSolution solve(const QPProblem& problem,
                                   const SolverSettings& settings) const override;
};

class InteriorPointSolver final : public QpBackend {
public:
    [[nodiscard]] QPSolution solve(const QPProblem& problem,
                                   const SolverSettings& settings) const override;
};

/// Dispatches on settings.method.
class DefaultSolver final : public QpBackend {
public:
    [[nodiscard]] QPSolution solve(const QPProblem& problem,
                                   const SolverSettings& settings) const override;
};

/// Convenience wrapper around DefaultSolver.
[[nodiscard]] QPSolution solve(const QPProblem& problem, const SolverSettings& settings = {});

}  // namespace ctms::qp
