#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "ctms/errors.hpp"
#include "ctms/qp_solver.hpp"
#include "oracles/active_set_oracle.hpp"
#include "oracles/random_qp.hpp"

namespace ctms::qp {
namespace {

using Dense = Eigen::MatrixXd;
using test::make;
using test::random_qp;

SparseMatrix sparse(const Dense& m) { return m.sparseView(); }

SolverSettings settings_for(Method m) {
    SolverSettings s;
    s.method = m;
    return s;
}

class BothBackends : public ::testing::TestWithParam<Method> {};

TEST_P(BothBackends, NonnegativeOrthantOnly) {
    const auto p = make(Dense::Identity(3, 3), Vector::Zero(3), Dense(0, 3), Vector(0),
                        Dense(0, 3), Vector(0), {true, true, true});
    const auto s = solve(p, settings_for(GetParam()));
    EXPECT_EQ(s.status, Status::optimal);
    EXPECT_LE(s.z_star.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(s.objective, 0.0, 1e-9);
}

TEST_P(BothBackends, SymmetricTwoVariableProblem) {
    const auto p = make(Dense::Identity(2, 2), Vector::Zero(2), Dense::Ones(1, 2),
                        Vector::Constant(1, 2.0), Dense(0, 2), Vector(0), {true, true});
    const auto s = solve(p, settings_for(GetParam()));
    ASSERT_EQ(s.status, Status::optimal);
    EXPECT_NEAR(s.z_star[0], 1.0, 1e-6);
    EXPECT_NEAR(s.z_star[1], 1.0, 1e-6);
    EXPECT_NEAR(s.objective, 1.0, 1e-6);
    const auto kkt = kkt_residuals(p, s.z_star, s.multipliers);
    EXPECT_LE(kkt.stationarity, 1e-8);
    EXPECT_LE(kkt.primal_feasibility, 1e-8);
    EXPECT_LE(kkt.complementarity, 1e-8);
}

TEST_P(BothBackends, MatchesActiveSetOracleOnRandomProblems) {
    std::mt19937_64 rng(GetParam() == Method::admm ? 101 : 202);
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = random_qp(rng, trial % 10 >= 7);
        const auto oracle = test::active_set_oracle(p);
        ASSERT_TRUE(oracle.has_value()) << "trial " << trial;
        const auto s = solve(p, settings_for(GetParam()));
        ASSERT_EQ(s.status, Status::optimal) << "trial " << trial;
        EXPECT_LE(std::abs(s.objective - oracle->objective),
                  1e-6 * std::max(1.0, std::abs(oracle->objective)))
            << "trial " << trial << " n = " << p.num_variables();
        const auto kkt = kkt_residuals(p, s.z_star, s.multipliers);
        EXPECT_LE(kkt.stationarity, 1e-6) << "trial " << trial;
        EXPECT_LE(kkt.primal_feasibility, 1e-6) << "trial " << trial;
        EXPECT_LE(kkt.complementarity, 1e-6) << "trial " << trial;
    }
}

TEST_P(BothBackends, RowScalingDoesNotMoveTheMinimizer) {
    std::mt19937_64 rng(GetParam() == Method::admm ? 7 : 8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_qp(rng, false);
        auto scaled = p;
        Dense Ain(p.A_in);
        Dense Aeq(p.A_eq);
        for (Eigen::Index r = 0; r < Ain.rows(); ++r) {
            const double f = std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(rng));
            Ain.row(r) *= f;
            scaled.b_in[r] *= f;
        }
        for (Eigen::Index r = 0; r < Aeq.rows(); ++r) {
            const double f = std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(rng));
            Aeq.row(r) *= f;
            scaled.b_eq[r] *= f;
        }
        scaled.A_in = sparse(Ain);
        scaled.A_eq = sparse(Aeq);
        const auto a = solve(p, settings_for(GetParam()));
        const auto b = solve(scaled, settings_for(GetParam()));
        ASSERT_EQ(a.status, Status::optimal);
        ASSERT_EQ(b.status, Status::optimal);
        EXPECT_LE((a.z_star - b.z_star).cwiseAbs().maxCoeff(), 1e-4) << "trial " << trial;
    }
}

TEST_P(BothBackends, InfeasibleProblemIsDetected) {
    // z1 + z2 = -1 with z >= 0
    const auto p = make(Dense::Identity(2, 2), Vector::Zero(2), Dense::Ones(1, 2),
                        Vector::Constant(1, -1.0), Dense(0, 2), Vector(0), {true, true});
    const auto s = solve(p, settings_for(GetParam()));
    EXPECT_EQ(s.status, Status::infeasible_detected);
}

TEST_P(BothBackends, IterationCapReturnsBestIterate) {
    std::mt19937_64 rng(77);
    const auto p = random_qp(rng, false);
    auto st = settings_for(GetParam());
    st.max_iterations = 1;
    st.interior_max_iterations = 1;
    st.polish = false;
    const auto s = solve(p, st);
    EXPECT_EQ(s.status, Status::max_iterations);
    EXPECT_EQ(s.z_star.size(), p.num_variables());
    EXPECT_TRUE(s.z_star.allFinite());
}

INSTANTIATE_TEST_SUITE_P(Solvers, BothBackends,
                         ::testing::Values(Method::admm, Method::interior_point),
                         [](const auto& info) { return to_string(info.param); });

TEST(KktResiduals, ZeroProblemAtOriginIsExact) {
    const auto p = make(Dense::Zero(2, 2), Vector::Zero(2), Dense(0, 2), Vector(0), Dense(0, 2),
                        Vector(0), {});
    Multipliers y{Vector(0), Vector(0), Vector::Zero(2)};
    const auto kkt = kkt_residuals(p, Vector::Zero(2), y);
    EXPECT_EQ(kkt.stationarity, 0.0);
    EXPECT_EQ(kkt.primal_feasibility, 0.0);
    EXPECT_EQ(kkt.complementarity, 0.0);
}

TEST(KktResiduals, PerturbedPointIsPrimalInfeasible) {
    const auto p = make(Dense::Identity(2, 2), Vector::Zero(2), Dense::Ones(1, 2),
                        Vector::Constant(1, 2.0), Dense(0, 2), Vector(0), {true, true});
    Multipliers y{Vector::Constant(1, -1.0), Vector(0), Vector::Zero(2)};
    EXPECT_LE(kkt_residuals(p, Vector::Ones(2), y).stationarity, 1e-15);
    EXPECT_GE(kkt_residuals(p, Vector::Constant(2, 1.1), y).primal_feasibility, 0.05);
}

TEST(QpProblem, ValidationRejectsBadData) {
    auto p = make(Dense::Identity(2, 2), Vector::Zero(2), Dense(0, 2), Vector(0), Dense(0, 2),
                  Vector(0), {});
    EXPECT_NO_THROW(p.validate());
    auto bad = p;
    bad.q[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW((void)solve(bad), SolverError);
    bad = p;
    Dense asym = Dense::Identity(2, 2);
    asym(0, 1) = 1.0;
    bad.P = sparse(asym);
    EXPECT_THROW(bad.validate(), SolverError);
    bad = p;
    bad.b_in = Vector::Zero(1);
    EXPECT_THROW(bad.validate(), SolverError);
    bad = p;
    bad.nonneg = {true};
    EXPECT_THROW(bad.validate(), SolverError);
}

TEST(AdmmWarmStart, StartingAtTheOptimumNeedsNoMoreIterations) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_qp(rng, false);
        SolverSettings cold;
        cold.polish = false;
        const auto a = AdmmSolver{}.solve(p, cold);
        ASSERT_EQ(a.status, Status::optimal);
        SolverSettings warm = cold;
        warm.warm_start_z = a.z_star;
        const auto b = AdmmSolver{}.solve(p, warm);
        ASSERT_EQ(b.status, Status::optimal);
        EXPECT_LE(b.iterations, a.iterations) << "trial " << trial;
    }
}

TEST(Method, ParsesNamesAndRejectsUnknown) {
    EXPECT_EQ(parse_method("admm"), Method::admm);
    EXPECT_EQ(parse_method("interior_point"), Method::interior_point);
    EXPECT_EQ(to_string(Method::interior_point), "interior_point");
    EXPECT_THROW((void)parse_method("simplex"), SolverError);
}

}  // namespace
}  // namespace ctms::qp
