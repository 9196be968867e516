#include "ctms/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

#include "ctms/errors.hpp"

namespace ctms::qp {

namespace {

using Index = Eigen::Index;
using Triplet = Eigen::Triplet<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Constraint rows stacked as l <= A z <= u: equality rows, inequality rows,
// then one identity row per sign-constrained variable.
struct Stacked {
    SparseMatrix A;
    Vector lower;
    Vector upper;
    Index m_eq{0};
    Index m_in{0};
    std::vector<Index> bound_vars;
};

Stacked stack(const QPProblem& p) {
    const Index n = p.num_variables();
    Stacked s;
    s.m_eq = p.b_eq.size();
    s.m_in = p.b_in.size();
    for (Index i = 0; i < n; ++i) {
        if (p.is_nonneg(i)) {
            s.bound_vars.push_back(i);
        }
    }
    const Index m = s.m_eq + s.m_in + static_cast<Index>(s.bound_vars.size());
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(p.A_eq.nonZeros() + p.A_in.nonZeros()) +
                     s.bound_vars.size());
    auto append = [&](const SparseMatrix& M, Index offset) {
        for (Index k = 0; k < M.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
                triplets.emplace_back(offset + it.row(), it.col(), it.value());
            }
        }
    };
    append(p.A_eq, 0);
    append(p.A_in, s.m_eq);
    for (std::size_t t = 0; t < s.bound_vars.size(); ++t) {
        triplets.emplace_back(s.m_eq + s.m_in + static_cast<Index>(t), s.bound_vars[t], 1.0);
    }
    s.A.resize(m, n);
    s.A.setFromTriplets(triplets.begin(), triplets.end());
    s.lower.resize(m);
    s.upper.resize(m);
    s.lower.head(s.m_eq) = p.b_eq;
    s.upper.head(s.m_eq) = p.b_eq;
    s.lower.segment(s.m_eq, s.m_in).setConstant(-kInf);
    s.upper.segment(s.m_eq, s.m_in) = p.b_in;
    s.lower.tail(m - s.m_eq - s.m_in).setZero();
    s.upper.tail(m - s.m_eq - s.m_in).setConstant(kInf);
    return s;
}

Vector column_inf_norms(const SparseMatrix& M) {
    Vector out = Vector::Zero(M.cols());
    for (Index k = 0; k < M.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
            out[it.col()] = std::max(out[it.col()], std::abs(it.value()));
        }
    }
    return out;
}

Vector row_inf_norms(const SparseMatrix& M) {
    Vector out = Vector::Zero(M.rows());
    for (Index k = 0; k < M.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
            out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
        }
    }
    return out;
}

double limit_scaling(double v) {
    if (v < 1e-4) {
        return 1.0;
    }
    return std::min(v, 1e4);
}

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

SparseMatrix sparse_identity(Index n, double value) {
    SparseMatrix I(n, n);
    I.reserve(Eigen::VectorXi::Constant(n, 1));
    for (Index i = 0; i < n; ++i) {
        I.insert(i, i) = value;
    }
    I.makeCompressed();
    return I;
}

// Problem data after Ruiz equilibration:
//   P_s = c D P D, q_s = c D q, A_s = E A D, l_s = E l, u_s = E u.
struct Scaled {
    SparseMatrix P;
    Vector q;
    SparseMatrix A;
    SparseMatrix At;
    Vector lower;
    Vector upper;
    Vector D;
    Vector E;
    double c{1.0};
};

Scaled equilibrate(const QPProblem& p, const Stacked& st, int iterations) {
    Scaled s;
    s.P = p.P;
    s.q = p.q;
    s.A = st.A;
    const Index n = p.num_variables();
    const Index m = st.A.rows();
    s.D = Vector::Ones(n);
    s.E = Vector::Ones(m);
    for (int it = 0; it < iterations; ++it) {
        Vector col = column_inf_norms(s.P).cwiseMax(column_inf_norms(s.A));
        Vector row = row_inf_norms(s.A);
        Vector dD(n);
        Vector dE(m);
        for (Index j = 0; j < n; ++j) dD[j] = 1.0 / std::sqrt(limit_scaling(col[j]));
        for (Index i = 0; i < m; ++i) dE[i] = 1.0 / std::sqrt(limit_scaling(row[i]));
        s.P = dD.asDiagonal() * s.P * dD.asDiagonal();
        s.A = dE.asDiagonal() * s.A * dD.asDiagonal();
        s.q = dD.cwiseProduct(s.q);
        s.D = s.D.cwiseProduct(dD);
        s.E = s.E.cwiseProduct(dE);

        const Vector pcol = column_inf_norms(s.P);
        const double mean_p = n > 0 ? pcol.mean() : 0.0;
        const double gamma = 1.0 / limit_scaling(std::max(mean_p, inf_norm(s.q)));
        s.P *= gamma;
        s.q *= gamma;
        s.c *= gamma;
    }
    s.At = s.A.transpose();
    s.lower = st.lower.cwiseProduct(s.E);
    s.upper = st.upper.cwiseProduct(s.E);
    // inf * E stays inf; guard 0 * inf never occurs because E > 0.
    return s;
}

Vector project(const Vector& v, const Vector& lower, const Vector& upper) {
    return v.cwiseMax(lower).cwiseMin(upper);
}

struct Residuals {
    double primal{0.0};
    double dual{0.0};
    double eps_primal{0.0};
    double eps_dual{0.0};

    [[nodiscard]] bool converged() const { return primal <= eps_primal && dual <= eps_dual; }
    [[nodiscard]] double ratio() const {
        return std::max(primal / eps_primal, dual / eps_dual);
    }
};

// Residuals of the unscaled problem evaluated from scaled iterates.
Residuals residuals(const Scaled& s, const SolverSettings& cfg, const Vector& x, const Vector& z,
                    const Vector& y) {
    const Vector Einv = s.E.cwiseInverse();
    const Vector Dinv = s.D.cwiseInverse();
    const Vector Ax = s.A * x;
    const Vector Px = s.P * x;
    const Vector Aty = s.At * y;
    Residuals r;
    r.primal = inf_norm(Einv.cwiseProduct(Ax - z));
    r.eps_primal = cfg.eps_abs + cfg.eps_rel * std::max(inf_norm(Einv.cwiseProduct(Ax)),
                                                        inf_norm(Einv.cwiseProduct(z)));
    const double cinv = 1.0 / s.c;
    r.dual = cinv * inf_norm(Dinv.cwiseProduct(Px + s.q + Aty));
    r.eps_dual = cfg.eps_abs + cfg.eps_rel * cinv *
                                   std::max({inf_norm(Dinv.cwiseProduct(Px)),
                                             inf_norm(Dinv.cwiseProduct(Aty)),
                                             inf_norm(Dinv.cwiseProduct(s.q))});
    return r;
}

bool primal_infeasible(const Scaled& s, const Vector& dy, double eps) {
    const double norm_dy = inf_norm(s.E.cwiseProduct(dy));
    if (norm_dy <= 1e-12) {
        return false;
    }
    const Vector Atdy = s.D.cwiseInverse().cwiseProduct(s.At * dy);
    if (inf_norm(Atdy) > eps * norm_dy) {
        return false;
    }
    double support = 0.0;
    for (Index i = 0; i < dy.size(); ++i) {
        const double d = dy[i];
        if (d > 0.0) {
            if (std::isinf(s.upper[i])) {
                if (d * s.E[i] > eps * norm_dy) return false;
                continue;
            }
            support += s.upper[i] * d;
        } else if (d < 0.0) {
            if (std::isinf(s.lower[i])) {
                if (-d * s.E[i] > eps * norm_dy) return false;
                continue;
            }
            support += s.lower[i] * d;
        }
    }
    return support < -eps * norm_dy;
}

class KktFactor {
public:
    void factor(const Scaled& s, const Vector& rho, double sigma) {
        SparseMatrix weighted = s.At * rho.asDiagonal();
        SparseMatrix K = weighted * s.A;
        K += s.P;
        K += sparse_identity(s.P.rows(), sigma);
        llt_.compute(K);
        if (llt_.info() != Eigen::Success) {
            throw SolverError("ADMM system factorization failed");
        }
        ++count_;
    }
    [[nodiscard]] Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
    [[nodiscard]] int count() const noexcept { return count_; }

private:
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
    int count_{0};
};

Vector penalty_vector(const Scaled& s, double rho) {
    Vector out(s.lower.size());
    for (Index i = 0; i < out.size(); ++i) {
        if (s.lower[i] == s.upper[i]) {
            out[i] = 1e3 * rho;
        } else if (std::isinf(s.lower[i]) && std::isinf(s.upper[i])) {
            out[i] = 1e-6;
        } else {
            out[i] = rho;
        }
    }
    return out;
}

struct Polished {
    Vector x;
    Vector y;
    Residuals res;
};

// Guess the active set from (z, y), solve the equality-constrained KKT system
// with regularization and iterative refinement. Returns nothing when the
// guess does not give an optimal point.
std::optional<Polished> polish(const Scaled& s, const SolverSettings& cfg, const Vector& z,
                               const Vector& y) {
    const Index n = s.P.rows();
    const Index m = s.A.rows();
    std::vector<Index> active;
    std::vector<double> target;
    std::vector<int> side;  // 0 equality, -1 lower, +1 upper
    for (Index i = 0; i < m; ++i) {
        if (s.lower[i] == s.upper[i]) {
            active.push_back(i);
            target.push_back(s.lower[i]);
            side.push_back(0);
        } else if (z[i] - s.lower[i] < -y[i]) {
            active.push_back(i);
            target.push_back(s.lower[i]);
            side.push_back(-1);
        } else if (s.upper[i] - z[i] < y[i]) {
            active.push_back(i);
            target.push_back(s.upper[i]);
            side.push_back(1);
        }
    }
    const auto ma = static_cast<Index>(active.size());
    const SparseMatrix At_active = [&] {
        // Columns of A' selected by active rows.
        std::vector<Triplet> t;
        for (Index r = 0; r < ma; ++r) {
            for (SparseMatrix::InnerIterator it(s.At, active[static_cast<std::size_t>(r)]); it; ++it) {
                t.emplace_back(it.row(), r, it.value());
            }
        }
        SparseMatrix out(n, ma);
        out.setFromTriplets(t.begin(), t.end());
        return out;
    }();

    // Primal regularization stays well below the curvature it perturbs, so
    // refinement converges on weakly curved programs too.
    constexpr double delta = 1e-7;
    const Vector p_diag = s.P.diagonal();
    Vector primal_reg(n);
    for (Index i = 0; i < n; ++i) {
        primal_reg[i] = p_diag[i] > 0.0 ? std::min(delta, 1e-3 * p_diag[i]) : delta;
    }
    auto assemble = [&](double reg) {
        std::vector<Triplet> t;
        for (Index k = 0; k < s.P.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(s.P, k); it; ++it) {
                t.emplace_back(it.row(), it.col(), it.value());
            }
        }
        for (Index k = 0; k < At_active.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(At_active, k); it; ++it) {
                t.emplace_back(it.row(), n + it.col(), it.value());
                t.emplace_back(n + it.col(), it.row(), it.value());
            }
        }
        for (Index i = 0; i < n; ++i) t.emplace_back(i, i, reg * primal_reg[i]);
        for (Index i = 0; i < ma; ++i) t.emplace_back(n + i, n + i, -reg * delta);
        SparseMatrix K(n + ma, n + ma);
        K.setFromTriplets(t.begin(), t.end());
        return K;
    };
    const SparseMatrix K_reg = assemble(1.0);
    const SparseMatrix K_exact = assemble(0.0);
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(K_reg);
    if (ldlt.info() != Eigen::Success) {
        return std::nullopt;
    }
    Vector rhs(n + ma);
    rhs.head(n) = -s.q;
    for (Index r = 0; r < ma; ++r) rhs[n + r] = target[static_cast<std::size_t>(r)];
    Vector sol = ldlt.solve(rhs);
    for (int k = 0; k < cfg.polish_refinement; ++k) {
        const Vector corr = ldlt.solve(rhs - K_exact * sol);
        sol += corr;
    }
    if (!sol.allFinite()) {
        return std::nullopt;
    }

    Polished out;
    out.x = sol.head(n);
    out.y = Vector::Zero(m);
    for (Index r = 0; r < ma; ++r) {
        out.y[active[static_cast<std::size_t>(r)]] = sol[n + r];
    }
    const Vector z_p = project(s.A * out.x, s.lower, s.upper);
    out.res = residuals(s, cfg, out.x, z_p, out.y);
    if (!out.res.converged()) {
        return std::nullopt;
    }
    // An inconsistent guess leaves active rows slack after refinement.
    const Vector Ax_p = s.A * out.x;
    for (Index r = 0; r < ma; ++r) {
        const Index i = active[static_cast<std::size_t>(r)];
        if (std::abs(Ax_p[i] - target[static_cast<std::size_t>(r)]) / s.E[i] > out.res.eps_primal) {
            return std::nullopt;
        }
    }
    // Dual signs: lower-active rows need y <= 0, upper-active rows y >= 0.
    const double sign_tol = out.res.eps_dual * s.c;
    auto signs_ok = [&](const Vector& y_rows) {
        for (Index r = 0; r < ma; ++r) {
            const Index i = active[static_cast<std::size_t>(r)];
            const double y_unscaled = y_rows[i] * s.E[i];
            const int sd = side[static_cast<std::size_t>(r)];
            if ((sd < 0 && y_unscaled > sign_tol) || (sd > 0 && y_unscaled < -sign_tol)) {
                return false;
            }
        }
        return true;
    };
    if (signs_ok(out.y)) {
        return out;
    }
    // Dependent active rows leave the multipliers non-unique and the
    // regularized solve returns the minimum-norm ones. Retry with the
    // multipliers closest to the incoming guess: y_a = y0_a + A_a w with
    // (A_a' A_a) w = -(P x + q + A_a' y0_a).
    Vector y0 = Vector::Zero(m);
    for (Index r = 0; r < ma; ++r) {
        const Index i = active[static_cast<std::size_t>(r)];
        y0[i] = y[i];
    }
    const Vector g = s.P * out.x + s.q + s.At * y0;
    const SparseMatrix AtA = At_active * SparseMatrix(At_active.transpose());
    const SparseMatrix G_reg = AtA + sparse_identity(n, delta);
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> gram(G_reg);
    if (gram.info() != Eigen::Success) {
        return std::nullopt;
    }
    Vector w = gram.solve(-g);
    for (int k = 0; k < cfg.polish_refinement; ++k) {
        w += gram.solve(-g - AtA * w);
    }
    const Vector shift = At_active.transpose() * w;
    Vector y_proj = y0;
    for (Index r = 0; r < ma; ++r) {
        y_proj[active[static_cast<std::size_t>(r)]] += shift[r];
    }
    if (!y_proj.allFinite() || !signs_ok(y_proj)) {
        return std::nullopt;
    }
    const Residuals res_proj = residuals(s, cfg, out.x, z_p, y_proj);
    if (!res_proj.converged()) {
        return std::nullopt;
    }
    out.y = y_proj;
    out.res = res_proj;
    return out;
}


// Unscaled multipliers and iterate of the interior-point method.
struct IpmIterate {
    Vector x;       // scaled primal
    Vector s;       // inequality slacks, A_in x + s = b_in
    Vector y;       // equality duals
    Vector lambda;  // inequality duals
    Vector mu;      // bound duals, one per sign-constrained variable
};

// Scaled data of the interior-point method, split by row family.
struct IpmData {
    SparseMatrix P;
    Vector q;
    SparseMatrix A_eq;
    SparseMatrix A_in;
    SparseMatrix A_in_t;
    Vector b_eq;
    Vector b_in;
    std::vector<Index> bound_vars;
};

struct IpmResiduals {
    Vector dual;   // P x + q + A_eq'y + A_in'lambda - E_B mu
    Vector eq;     // A_eq x - b_eq
    Vector in;     // A_in x + s - b_in
};

IpmResiduals ipm_residuals(const IpmData& d, const IpmIterate& it) {
    IpmResiduals r;
    r.dual = d.P * it.x + d.q + d.A_eq.transpose() * it.y + d.A_in_t * it.lambda;
    for (std::size_t t = 0; t < d.bound_vars.size(); ++t) {
        r.dual[d.bound_vars[t]] -= it.mu[static_cast<Index>(t)];
    }
    r.eq = d.A_eq * it.x - d.b_eq;
    r.in = d.A_in * it.x + it.s - d.b_in;
    return r;
}

double max_step(const Vector& v, const Vector& dv) {
    double alpha = 1.0;
    for (Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) {
            alpha = std::min(alpha, -v[i] / dv[i]);
        }
    }
    return alpha;
}

// Newton system of the primal-dual method, reduced to (dx, dy):
//   [P + A_in' Theta A_in + diag_B(mu/x) + d_p I    A_eq'  ] [dx]   [r1]
//   [A_eq                                          -d_d I  ] [dy] = [r2]
// with Theta = lambda / s.
class NewtonSystem {
public:
    NewtonSystem(const IpmData& d, const IpmIterate& it, double reg) : reg_(reg) {
        const Index n = d.P.rows();
        const Index me = d.A_eq.rows();
        n_ = n;
        theta_ = it.lambda.cwiseQuotient(it.s);
        Vector bound_diag = Vector::Zero(n);
        for (std::size_t t = 0; t < d.bound_vars.size(); ++t) {
            const Index j = d.bound_vars[t];
            bound_diag[j] = it.mu[static_cast<Index>(t)] / it.x[j];
        }
        const SparseMatrix H = d.P + SparseMatrix(d.A_in_t * theta_.asDiagonal() * d.A_in);
        std::vector<Triplet> t;
        t.reserve(static_cast<std::size_t>(H.nonZeros() + 2 * d.A_eq.nonZeros() + n + me));
        for (Index k = 0; k < H.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator e(H, k); e; ++e) {
                t.emplace_back(e.row(), e.col(), e.value());
            }
        }
        for (Index i = 0; i < n; ++i) t.emplace_back(i, i, bound_diag[i] + reg);
        for (Index k = 0; k < d.A_eq.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator e(d.A_eq, k); e; ++e) {
                t.emplace_back(n + e.row(), e.col(), e.value());
                t.emplace_back(e.col(), n + e.row(), e.value());
            }
        }
        for (Index i = 0; i < me; ++i) t.emplace_back(n + i, n + i, -reg);
        K_.resize(n + me, n + me);
        K_.setFromTriplets(t.begin(), t.end());
        ldlt_.compute(K_);
        ok_ = ldlt_.info() == Eigen::Success;
    }

    [[nodiscard]] bool ok() const noexcept { return ok_; }

    // Solves the unregularized system by refinement on the regularized factor.
    [[nodiscard]] Vector solve(const Vector& rhs) const {
        Vector sol = ldlt_.solve(rhs);
        for (int k = 0; k < 3; ++k) {
            Vector exact = K_ * sol;
            exact.head(n_) -= reg_ * sol.head(n_);
            exact.tail(sol.size() - n_) += reg_ * sol.tail(sol.size() - n_);
            sol += ldlt_.solve(rhs - exact);
        }
        return sol;
    }

    [[nodiscard]] const Vector& theta() const noexcept { return theta_; }

private:
    double reg_;
    Index n_{0};
    Vector theta_;
    SparseMatrix K_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    bool ok_{false};
};

struct IpmDirection {
    Vector dx;
    Vector ds;
    Vector dy;
    Vector dlambda;
    Vector dmu;
};

// rc_in, rc_b: complementarity right-hand sides (target - s lambda - corr).
IpmDirection ipm_direction(const IpmData& d, const IpmIterate& it, const IpmResiduals& r,
                           const NewtonSystem& sys, const Vector& rc_in, const Vector& rc_b) {
    const Index n = it.x.size();
    const Index me = it.y.size();
    Vector r1 = -r.dual - d.A_in_t * (rc_in + it.lambda.cwiseProduct(r.in)).cwiseQuotient(it.s);
    for (std::size_t t = 0; t < d.bound_vars.size(); ++t) {
        const Index j = d.bound_vars[t];
        r1[j] += rc_b[static_cast<Index>(t)] / it.x[j];
    }
    Vector rhs(n + me);
    rhs.head(n) = r1;
    rhs.tail(me) = -r.eq;
    const Vector sol = sys.solve(rhs);
    IpmDirection dir;
    dir.dx = sol.head(n);
    dir.dy = sol.tail(me);
    dir.ds = -r.in - d.A_in * dir.dx;
    dir.dlambda = (rc_in - it.lambda.cwiseProduct(dir.ds)).cwiseQuotient(it.s);
    dir.dmu.resize(it.mu.size());
    for (std::size_t t = 0; t < d.bound_vars.size(); ++t) {
        const auto ti = static_cast<Index>(t);
        const Index j = d.bound_vars[t];
        dir.dmu[ti] = (rc_b[ti] - it.mu[ti] * dir.dx[j]) / it.x[j];
    }
    return dir;
}

Vector bound_values(const IpmData& d, const Vector& x) {
    Vector out(static_cast<Index>(d.bound_vars.size()));
    for (std::size_t t = 0; t < d.bound_vars.size(); ++t) {
        out[static_cast<Index>(t)] = x[d.bound_vars[t]];
    }
    return out;
}

}  // namespace

std::string to_string(Method method) {
    return method == Method::admm ? "admm" : "interior_point";
}

Method parse_method(const std::string& name) {
    if (name == "admm") return Method::admm;
    if (name == "interior_point") return Method::interior_point;
    throw SolverError("unknown QP method '" + name + "' (expected admm or interior_point)");
}

QPSolution InteriorPointSolver::solve(const QPProblem& problem, const SolverSettings& cfg) const {
    problem.validate();
    const Stacked st = stack(problem);
    const Scaled sc = equilibrate(problem, st, cfg.scaling_iterations);
    const Index n = problem.num_variables();
    const Index me = st.m_eq;
    const Index mi = st.m_in;
    const auto nb = static_cast<Index>(st.bound_vars.size());

    IpmData d;
    d.P = sc.P;
    d.q = sc.q;
    d.A_eq = sc.A.topRows(me);
    d.A_in = sc.A.middleRows(me, mi);
    d.A_in_t = d.A_in.transpose();
    d.b_eq = sc.lower.head(me);
    d.b_in = sc.upper.segment(me, mi);
    d.bound_vars = st.bound_vars;
    const Vector D_in = sc.E.segment(me, mi);
    const Vector D_eq = sc.E.head(me);
    const double cinv = 1.0 / sc.c;
    const Vector Dinv = sc.D.cwiseInverse();

    // Starting point: minimizer of the objective plus unit-weighted slack and
    // bound penalties subject to the equalities, pushed into the interior.
    IpmIterate it;
    it.x = Vector::Ones(n);
    it.s = Vector::Ones(mi);
    it.y = Vector::Zero(me);
    it.lambda = Vector::Ones(mi);
    it.mu = Vector::Ones(nb);
    {
        const NewtonSystem init(d, it, 1e-8);
        if (init.ok()) {
            Vector rhs(n + me);
            rhs.head(n) = -d.q + d.A_in_t * d.b_in;
            rhs.tail(me) = d.b_eq;
            const Vector sol = init.solve(rhs);
            if (sol.allFinite()) {
                it.x = sol.head(n);
            }
        }
        it.s = d.b_in - d.A_in * it.x;
        const double shift_s = std::max(0.0, -1.5 * (mi > 0 ? it.s.minCoeff() : 0.0));
        it.s.array() += shift_s + 1.0;
        for (const Index j : d.bound_vars) {
            it.x[j] = std::max(it.x[j], 0.0);
        }
        for (const Index j : d.bound_vars) {
            it.x[j] += 1.0;
        }
    }

    QPSolution sol;
    sol.status = Status::max_iterations;
    Residuals res;
    const double complementarity_count = static_cast<double>(mi + nb);
    int iter = 0;
    for (iter = 0; iter <= cfg.interior_max_iterations; ++iter) {
        const IpmResiduals r = ipm_residuals(d, it);
        const Vector xb = bound_values(d, it.x);
        const double gap = it.s.dot(it.lambda) + xb.dot(it.mu);

        // Unscaled termination measures.
        const Vector Px = d.P * it.x;
        const Vector z = sc.D.cwiseProduct(it.x);
        res.primal = std::max(inf_norm(D_eq.cwiseInverse().cwiseProduct(r.eq)),
                              inf_norm(D_in.cwiseInverse().cwiseProduct(r.in)));
        const Vector Ax_eq = d.A_eq * it.x;
        const Vector Ax_in = d.A_in * it.x;
        res.eps_primal = cfg.eps_abs +
                         cfg.eps_rel * std::max({inf_norm(D_eq.cwiseInverse().cwiseProduct(Ax_eq)),
                                                 inf_norm(D_in.cwiseInverse().cwiseProduct(Ax_in)),
                                                 inf_norm(problem.b_eq), inf_norm(problem.b_in)});
        res.dual = cinv * inf_norm(Dinv.cwiseProduct(r.dual));
        const Vector Aty = d.A_eq.transpose() * it.y + d.A_in_t * it.lambda;
        res.eps_dual = cfg.eps_abs + cfg.eps_rel * cinv *
                                         std::max({inf_norm(Dinv.cwiseProduct(Px)),
                                                   inf_norm(Dinv.cwiseProduct(Aty)),
                                                   inf_norm(Dinv.cwiseProduct(d.q))});
        const double objective = problem.objective(z);
        const double gap_unscaled = cinv * gap;
        const double eps_gap = cfg.eps_abs + cfg.eps_rel * std::max(1.0, std::abs(objective));
        if (res.converged() && gap_unscaled <= eps_gap) {
            sol.status = Status::optimal;
            break;
        }
        // A diverging dual with stalled primal residual certifies infeasibility
        // in practice.
        const double dual_size = std::max(inf_norm(it.lambda), inf_norm(it.y));
        if (iter > 20 && dual_size > 1e10 * std::max(1.0, inf_norm(d.q)) &&
            res.primal > res.eps_primal) {
            sol.status = Status::infeasible_detected;
            break;
        }
        if (iter == cfg.interior_max_iterations) {
            break;
        }

        const NewtonSystem sys(d, it, 1e-9);
        if (!sys.ok()) {
            break;
        }
        const double mu_avg = complementarity_count > 0 ? gap / complementarity_count : 0.0;

        // Predictor.
        const Vector rc_in_aff = -it.s.cwiseProduct(it.lambda);
        const Vector rc_b_aff = -xb.cwiseProduct(it.mu);
        const IpmDirection aff = ipm_direction(d, it, r, sys, rc_in_aff, rc_b_aff);
        const Vector dxb_aff = bound_values(d, aff.dx);
        const double a_aff = std::min({max_step(it.s, aff.ds), max_step(xb, dxb_aff),
                                       max_step(it.lambda, aff.dlambda), max_step(it.mu, aff.dmu)});
        const double gap_aff = (it.s + a_aff * aff.ds).dot(it.lambda + a_aff * aff.dlambda) +
                               (xb + a_aff * dxb_aff).dot(it.mu + a_aff * aff.dmu);
        const double sigma =
            complementarity_count > 0 ? std::pow(gap_aff / std::max(gap, 1e-300), 3.0) : 0.0;

        // Corrector.
        const Vector rc_in = rc_in_aff - aff.ds.cwiseProduct(aff.dlambda) +
                             Vector::Constant(mi, sigma * mu_avg);
        const Vector rc_b =
            rc_b_aff - dxb_aff.cwiseProduct(aff.dmu) + Vector::Constant(nb, sigma * mu_avg);
        const IpmDirection dir = ipm_direction(d, it, r, sys, rc_in, rc_b);
        const Vector dxb = bound_values(d, dir.dx);
        const double a_max = std::min({max_step(it.s, dir.ds), max_step(xb, dxb),
                                       max_step(it.lambda, dir.dlambda), max_step(it.mu, dir.dmu)});
        const double alpha = std::min(1.0, 0.99 * a_max);
        it.x += alpha * dir.dx;
        it.s += alpha * dir.ds;
        it.y += alpha * dir.dy;
        it.lambda += alpha * dir.dlambda;
        it.mu += alpha * dir.dmu;
    }

    sol.iterations = std::min(iter, cfg.interior_max_iterations);
    sol.primal_residual = res.primal;
    sol.dual_residual = res.dual;

    // The interior iterate sits about sqrt(gap) off the active constraints;
    // an accepted polish lands on them exactly.
    if (cfg.polish && sol.status != Status::infeasible_detected) {
        const Index m = sc.A.rows();
        Vector y_rows(m);
        y_rows.head(me) = it.y;
        y_rows.segment(me, mi) = it.lambda;
        for (Index t = 0; t < nb; ++t) {
            const Index row = me + mi + t;
            // Bound rows of the scaled stack hold E_row D_j; the method itself
            // works with the bare sign constraint.
            const double a = sc.E[row] * sc.D[d.bound_vars[static_cast<std::size_t>(t)]];
            y_rows[row] = -it.mu[t] / a;
        }
        const Vector z_rows = project(sc.A * it.x, sc.lower, sc.upper);
        if (auto p = polish(sc, cfg, z_rows, y_rows)) {
            sol.status = Status::optimal;
            sol.polished = true;
            sol.primal_residual = p->res.primal;
            sol.dual_residual = p->res.dual;
            sol.z_star = sc.D.cwiseProduct(p->x);
            const Vector y_orig = sc.E.cwiseProduct(p->y) * cinv;
            sol.multipliers.eq = y_orig.head(me);
            sol.multipliers.in = y_orig.segment(me, mi);
            sol.multipliers.bound = Vector::Zero(n);
            for (Index t = 0; t < nb; ++t) {
                sol.multipliers.bound[d.bound_vars[static_cast<std::size_t>(t)]] =
                    -y_orig[me + mi + t];
            }
            sol.objective = problem.objective(sol.z_star);
            return sol;
        }
    }

    sol.z_star = sc.D.cwiseProduct(it.x);
    // Strictly interior iterates: clip the sign-constrained entries at zero
    // (differences are below the termination tolerance).
    for (const Index j : st.bound_vars) {
        sol.z_star[j] = std::max(sol.z_star[j], 0.0);
    }
    sol.multipliers.eq = cinv * D_eq.cwiseProduct(it.y);
    sol.multipliers.in = cinv * D_in.cwiseProduct(it.lambda);
    sol.multipliers.bound = Vector::Zero(n);
    for (std::size_t t = 0; t < st.bound_vars.size(); ++t) {
        const Index j = st.bound_vars[t];
        sol.multipliers.bound[j] = cinv * it.mu[static_cast<Index>(t)] / sc.D[j];
    }
    sol.objective = problem.objective(sol.z_star);
    return sol;
}

QPSolution DefaultSolver::solve(const QPProblem& problem, const SolverSettings& settings) const {
    if (settings.method == Method::interior_point) {
        return InteriorPointSolver{}.solve(problem, settings);
    }
    return AdmmSolver{}.solve(problem, settings);
}

std::string to_string(Status status) {
    switch (status) {
        case Status::optimal:
            return "optimal";
        case Status::max_iterations:
            return "max_iterations";
        case Status::infeasible_detected:
            return "infeasible_detected";
    }
    return "unknown";
}

void QPProblem::validate() const {
    const Index n = q.size();
    if (P.rows() != n || P.cols() != n) {
        throw SolverError("P must be n x n");
    }
    if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) {
        throw SolverError("A_eq/b_eq dimensions inconsistent");
    }
    if (A_in.cols() != n || A_in.rows() != b_in.size()) {
        throw SolverError("A_in/b_in dimensions inconsistent");
    }
    if (!nonneg.empty() && static_cast<Index>(nonneg.size()) != n) {
        throw SolverError("nonneg mask must be empty or of length n");
    }
    auto finite = [](const SparseMatrix& M) {
        for (Index k = 0; k < M.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
                if (!std::isfinite(it.value())) return false;
            }
        }
        return true;
    };
    if (!finite(P) || !finite(A_eq) || !finite(A_in) || !q.allFinite() || !b_eq.allFinite() ||
        !b_in.allFinite()) {
        throw SolverError("QP data contains non-finite values");
    }
    const SparseMatrix Pt = P.transpose();
    const SparseMatrix diff = P - Pt;
    for (Index k = 0; k < diff.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(diff, k); it; ++it) {
            if (std::abs(it.value()) > 1e-12) {
                throw SolverError("P is not symmetric");
            }
        }
    }
}

double QPProblem::objective(const Vector& z) const { return 0.5 * z.dot(P * z) + q.dot(z); }

KktResiduals kkt_residuals(const QPProblem& problem, const Vector& z,
                           const Multipliers& multipliers) {
    const Index n = problem.num_variables();
    auto or_zero = [](const Vector& v, Index size) {
        return v.size() == size ? v : Vector(Vector::Zero(size));
    };
    const Vector y_eq = or_zero(multipliers.eq, problem.b_eq.size());
    const Vector y_in = or_zero(multipliers.in, problem.b_in.size());
    const Vector mu = or_zero(multipliers.bound, n);

    KktResiduals r;
    Vector grad = problem.P * z + problem.q;
    if (y_eq.size() > 0) grad += problem.A_eq.transpose() * y_eq;
    if (y_in.size() > 0) grad += problem.A_in.transpose() * y_in;
    grad -= mu;
    r.stationarity = inf_norm(grad);

    if (problem.b_eq.size() > 0) {
        r.primal_feasibility = inf_norm(problem.A_eq * z - problem.b_eq);
    }
    Vector slack_in;
    if (problem.b_in.size() > 0) {
        slack_in = problem.A_in * z - problem.b_in;
        r.primal_feasibility = std::max(r.primal_feasibility, slack_in.cwiseMax(0.0).maxCoeff());
        r.complementarity = std::max(r.complementarity, inf_norm(y_in.cwiseProduct(slack_in)));
        r.complementarity = std::max(r.complementarity, (-y_in).cwiseMax(0.0).maxCoeff());
    }
    for (Index i = 0; i < n; ++i) {
        if (problem.is_nonneg(i)) {
            r.primal_feasibility = std::max(r.primal_feasibility, -z[i]);
            r.complementarity = std::max(r.complementarity, std::abs(mu[i] * z[i]));
            r.complementarity = std::max(r.complementarity, -mu[i]);
        } else {
            // Multipliers for unconstrained variables must vanish.
            r.complementarity = std::max(r.complementarity, std::abs(mu[i]));
        }
    }
    return r;
}

QPSolution AdmmSolver::solve(const QPProblem& problem, const SolverSettings& cfg) const {
    problem.validate();
    const Stacked st = stack(problem);
    const Scaled s = equilibrate(problem, st, cfg.scaling_iterations);
    const Index n = problem.num_variables();
    const Index m = st.A.rows();

    double rho_scalar = cfg.rho;
    Vector rho = penalty_vector(s, rho_scalar);
    KktFactor kkt;
    kkt.factor(s, rho, cfg.sigma);

    Vector x = Vector::Zero(n);
    Vector y = Vector::Zero(m);
    if (cfg.warm_start_z && cfg.warm_start_z->size() == n) {
        x = s.D.cwiseInverse().cwiseProduct(*cfg.warm_start_z);
    }
    if (cfg.warm_start_y && cfg.warm_start_y->size() == m) {
        y = s.c * s.E.cwiseInverse().cwiseProduct(*cfg.warm_start_y);
    }
    Vector z = project(s.A * x, s.lower, s.upper);

    QPSolution sol;
    sol.status = Status::max_iterations;
    Residuals res;
    double last_polish_ratio = kInf;
    bool done = false;
    int iter = 0;
    Vector y_prev = y;
    Vector x_best = x;
    Vector y_best = y;

    for (iter = 1; iter <= cfg.max_iterations && !done; ++iter) {
        const bool check = iter % cfg.check_interval == 0 || iter == cfg.max_iterations;
        if (check) {
            y_prev = y;
        }
        const Vector rhs = cfg.sigma * x - s.q + s.At * (rho.cwiseProduct(z) - y);
        const Vector x_tilde = kkt.solve(rhs);
        const Vector z_tilde = s.A * x_tilde;
        x = cfg.alpha * x_tilde + (1.0 - cfg.alpha) * x;
        const Vector z_relaxed = cfg.alpha * z_tilde + (1.0 - cfg.alpha) * z;
        const Vector z_next = project(z_relaxed + y.cwiseQuotient(rho), s.lower, s.upper);
        y += rho.cwiseProduct(z_relaxed - z_next);
        z = z_next;

        if (check) {
            res = residuals(s, cfg, x, z, y);
            x_best = x;
            y_best = y;
            if (res.converged()) {
                sol.status = Status::optimal;
                done = true;
                if (cfg.polish) {
                    if (auto p = polish(s, cfg, z, y)) {
                        x = p->x;
                        y = p->y;
                        res = p->res;
                        sol.polished = true;
                    }
                }
                break;
            }
            if (primal_infeasible(s, y - y_prev, cfg.eps_infeasible)) {
                sol.status = Status::infeasible_detected;
                done = true;
                break;
            }
            const double ratio = res.ratio();
            if (cfg.polish && ratio <= cfg.polish_trigger && ratio <= 0.3 * last_polish_ratio) {
                last_polish_ratio = ratio;
                if (auto p = polish(s, cfg, z, y)) {
                    x = p->x;
                    y = p->y;
                    z = project(s.A * x, s.lower, s.upper);
                    res = p->res;
                    sol.polished = true;
                    sol.status = Status::optimal;
                    done = true;
                    break;
                }
            }
        }

        if (cfg.adaptive_rho && iter % cfg.adaptive_rho_interval == 0) {
            const Vector Ax = s.A * x;
            const Vector Px = s.P * x;
            const Vector Aty = s.At * y;
            const double prim = inf_norm(Ax - z) / std::max({inf_norm(Ax), inf_norm(z), 1e-30});
            const double dual = inf_norm(Px + s.q + Aty) /
                                std::max({inf_norm(Px), inf_norm(Aty), inf_norm(s.q), 1e-30});
            if (prim > 0.0 && dual > 0.0) {
                const double proposed =
                    std::clamp(rho_scalar * std::sqrt(prim / dual), 1e-6, 1e6);
                if (proposed > cfg.adaptive_rho_tolerance * rho_scalar ||
                    proposed < rho_scalar / cfg.adaptive_rho_tolerance) {
                    rho_scalar = proposed;
                    rho = penalty_vector(s, rho_scalar);
                    kkt.factor(s, rho, cfg.sigma);
                }
            }
        }
    }
    if (!done) {
        x = x_best;
        y = y_best;
        z = project(s.A * x, s.lower, s.upper);
        if (cfg.polish) {
            if (auto p = polish(s, cfg, z, y)) {
                x = p->x;
                y = p->y;
                res = p->res;
                sol.polished = true;
                sol.status = Status::optimal;
            }
        }
    }

    sol.iterations = std::min(iter, cfg.max_iterations);
    sol.refactorizations = kkt.count();
    sol.primal_residual = res.primal;
    sol.dual_residual = res.dual;
    sol.z_star = s.D.cwiseProduct(x);
    const Vector y_orig = s.E.cwiseProduct(y) / s.c;
    sol.multipliers.eq = y_orig.head(st.m_eq);
    sol.multipliers.in = y_orig.segment(st.m_eq, st.m_in);
    sol.multipliers.bound = Vector::Zero(n);
    for (std::size_t t = 0; t < st.bound_vars.size(); ++t) {
        sol.multipliers.bound[st.bound_vars[t]] =
            -y_orig[st.m_eq + st.m_in + static_cast<Index>(t)];
    }
    sol.objective = problem.objective(sol.z_star);
    return sol;
}

QPSolution solve(const QPProblem& problem, const SolverSettings& settings) {
    return DefaultSolver{}.solve(problem, settings);
}

}  // namespace ctms::qp
