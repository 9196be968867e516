#pragma once

// Brute-force QP oracle: enumerates every subset of inequality rows (sign
// bounds included) as the active set, solves the equality-constrained KKT
// system of each subset with a rank-revealing factorization, and keeps the
// points that satisfy all KKT conditions. For a convex problem every such
// point is optimal, so their common objective is the optimum.
//
// Exponential in the number of inequality rows; meant for at most ~14.

#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "ctms/qp_solver.hpp"

namespace ctms::test {

struct OracleResult {
    Eigen::VectorXd z;
    double objective{std::numeric_limits<double>::infinity()};
    std::size_t kkt_points{0};
};

inline std::optional<OracleResult> active_set_oracle(const qp::QPProblem& p, double tol = 1e-9) {
    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;
    const Eigen::Index n = p.num_variables();
    const Mat P(p.P);
    const Mat Aeq(p.A_eq);
    const Mat Ain_rows(p.A_in);

    // Stack A_in and the sign bounds -z_i <= 0 into G z <= h.
    std::vector<Eigen::Index> bounded;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (p.is_nonneg(i)) {
            bounded.push_back(i);
        }
    }
    const Eigen::Index m_in = Ain_rows.rows();
    const Eigen::Index m = m_in + static_cast<Eigen::Index>(bounded.size());
    Mat G = Mat::Zero(m, n);
    Vec h = Vec::Zero(m);
    G.topRows(m_in) = Ain_rows;
    h.head(m_in) = p.b_in;
    for (std::size_t b = 0; b < bounded.size(); ++b) {
        G(m_in + static_cast<Eigen::Index>(b), bounded[b]) = -1.0;
    }
    const Eigen::Index me = Aeq.rows();

    std::optional<OracleResult> best;
    const std::uint64_t subsets = std::uint64_t{1} << m;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        std::vector<Eigen::Index> act;
        for (Eigen::Index r = 0; r < m; ++r) {
            if (mask & (std::uint64_t{1} << r)) {
                act.push_back(r);
            }
        }
        const Eigen::Index ma = static_cast<Eigen::Index>(act.size());
        if (ma > n) {
            continue;
        }
        const Eigen::Index dim = n + me + ma;
        Mat K = Mat::Zero(dim, dim);
        Vec rhs = Vec::Zero(dim);
        K.topLeftCorner(n, n) = P;
        rhs.head(n) = -p.q;
        if (me > 0) {
            K.block(0, n, n, me) = Aeq.transpose();
            K.block(n, 0, me, n) = Aeq;
            rhs.segment(n, me) = p.b_eq;
        }
        for (Eigen::Index a = 0; a < ma; ++a) {
            K.block(0, n + me + a, n, 1) = G.row(act[static_cast<std::size_t>(a)]).transpose();
            K.block(n + me + a, 0, 1, n) = G.row(act[static_cast<std::size_t>(a)]);
            rhs[n + me + a] = h[act[static_cast<std::size_t>(a)]];
        }
        const Vec sol = K.completeOrthogonalDecomposition().solve(rhs);
        if ((K * sol - rhs).cwiseAbs().maxCoeff() > tol * (1.0 + rhs.cwiseAbs().maxCoeff())) {
            continue;  // inconsistent system
        }
        const Vec z = sol.head(n);
        const Vec y = sol.tail(ma);
        const double scale = 1.0 + z.cwiseAbs().maxCoeff();
        if (m > 0 && ((G * z - h).maxCoeff() > tol * scale)) {
            continue;
        }
        if (ma > 0 && y.minCoeff() < -tol * scale) {
            continue;
        }
        const double obj = p.objective(z);
        if (!best || obj < best->objective) {
            const std::size_t points = best ? best->kkt_points : 0;
            best = OracleResult{z, obj, points};
        }
        ++best->kkt_points;
    }
    return best;
}

}  // namespace ctms::test
