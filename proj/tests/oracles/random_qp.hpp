#pragma once

// Random convex QPs with a known feasible point, small enough for the
// active-set oracle.

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ctms/qp_solver.hpp"

namespace ctms::test {

inline qp::QPProblem make(const Eigen::MatrixXd& P, const qp::Vector& q, const Eigen::MatrixXd& Aeq,
                          const qp::Vector& beq, const Eigen::MatrixXd& Ain, const qp::Vector& bin,
                          std::vector<bool> nonneg) {
    qp::QPProblem p;
    p.P = P.sparseView();
    p.q = q;
    p.A_eq = Aeq.sparseView();
    p.b_eq = beq;
    p.A_in = Ain.sparseView();
    p.b_in = bin;
    p.nonneg = std::move(nonneg);
    return p;
}

// Feasible by construction: the right-hand sides are built around a random
// point z0. Strictly convex unless `semidefinite`, in which case every
// variable is sign constrained and a budget row keeps the problem bounded.
inline qp::QPProblem random_qp(std::mt19937_64& rng, bool semidefinite) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto ri = [&](Eigen::Index lo, Eigen::Index hi) {
        return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
    };
    const Eigen::Index n = semidefinite ? ri(2, 8) : ri(1, 12);
    const Eigen::Index me = n == 1 ? 0 : ri(0, std::min<Eigen::Index>(3, n - 1));
    std::vector<bool> nonneg(static_cast<std::size_t>(n), false);
    Eigen::Index nb = 0;
    if (semidefinite) {
        nonneg.assign(static_cast<std::size_t>(n), true);
        nb = n;
    } else {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (nb < 8 && unit(rng) < 0.6) {
                nonneg[static_cast<std::size_t>(i)] = true;
                ++nb;
            }
        }
    }
    const Eigen::Index budget = semidefinite ? 1 : 0;
    const Eigen::Index m_in = ri(0, 12 - nb - budget) + budget;

    qp::Vector z0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z0[i] = nonneg[static_cast<std::size_t>(i)] ? 2.0 * unit(rng) : gauss(rng);
    }
    Eigen::MatrixXd P;
    if (semidefinite) {
        const Eigen::Index r = ri(0, n - 1);
        Eigen::MatrixXd L = Eigen::MatrixXd::NullaryExpr(n, r, [&] { return gauss(rng); });
        P = L * L.transpose();
    } else {
        Eigen::MatrixXd L = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return gauss(rng); });
        P = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    }
    const qp::Vector q = qp::Vector::NullaryExpr(n, [&] { return 2.0 * gauss(rng); });
    Eigen::MatrixXd Aeq = Eigen::MatrixXd::NullaryExpr(me, n, [&] { return gauss(rng); });
    const qp::Vector beq = Aeq * z0;
    Eigen::MatrixXd Ain = Eigen::MatrixXd::NullaryExpr(m_in, n, [&] { return gauss(rng); });
    qp::Vector bin = Ain * z0;
    for (Eigen::Index r = 0; r < m_in; ++r) {
        bin[r] += unit(rng) < 0.2 ? 0.0 : unit(rng);
    }
    if (semidefinite) {
        Ain.row(0).setOnes();
        bin[0] = z0.sum() + 1.0;
    }
    return make(P, q, Aeq, beq, Ain, bin, std::move(nonneg));
}

}  // namespace ctms::test
