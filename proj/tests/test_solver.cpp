#include "cdpde/solver.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cdpde;
using cdpde::testing::random_decaying_field;

namespace {

const Layout kKernel{2, 1, 0};

IntegralEquationProblem random_problem(int level, int n, double p, std::mt19937_64& rng, bool translate = true) {
    const AnalyticField F = random_decaying_field(level, n, kKernel, rng, true, 2);
    const auto id = IntegralEquationProblem::make(level, F, NRule{EOperator::identity(level, n), 1.0, 0.0}, p);
    EOperator e = random_admissible(level, n, id.sigma.symbol(), false, rng);
    if (!translate) e = EOperator(level, e.b(), e.s(), AffineMap{});
    return IntegralEquationProblem::make(level, F, NRule{e, 1.0, 0.0}, p);
}

std::vector<Eigen::VectorXd> points(std::mt19937_64& rng, int count) {
    std::vector<Eigen::VectorXd> out;
    for (int k = 0; k < count; ++k) out.push_back(cdpde::testing::random_point(2, rng, 0.0, 1.5));
    return out;
}

}  // namespace

TEST(Solver, ClosedFormOperatorMatchesQuadrature) {
    std::mt19937_64 rng(401);
    for (auto [level, n] : {std::pair{2, 2}, std::pair{3, 1}}) {
        const auto pr = random_problem(level, n, 0.3, rng);
        const AnalyticField G = random_decaying_field(level, n, kKernel, rng);
        const AnalyticField AG = apply_Ax(pr, G);
        for (const auto& u : points(rng, 4)) {
            const Matrix quad = apply_Ax_quadrature(pr, G, u);
            EXPECT_LE((AG(u) - quad).norm(), 1e-9 * std::max(1.0, quad.norm())) << "r=" << level;
        }
    }
}

TEST(Solver, ZeroCouplingReturnsTheSeed) {
    std::mt19937_64 rng(409);
    const auto pr = random_problem(2, 2, 0.0, rng);
    const NeumannResult r = solve_neumann(pr);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
    for (const auto& u : points(rng, 6)) EXPECT_EQ((r.K(u) - pr.F(u)).norm(), 0.0);
}

TEST(Solver, PartialSumsEqualFixedPointIterates) {
    std::mt19937_64 rng(419);
    const auto pr = random_problem(2, 2, 0.2, rng);
    for (int N : {0, 1, 3, 5}) {
        const AnalyticField a = neumann_partial_sum(pr, N), b = fixed_point_iterate(pr, N);
        for (const auto& u : points(rng, 3)) EXPECT_LT((a(u) - b(u)).norm(), 1e-13) << "N=" << N;
    }
}

TEST(Solver, ContractsGeometricallyToTheFixedPoint) {
    std::mt19937_64 rng(421);
    for (auto [level, n] : {std::pair{2, 2}, std::pair{3, 1}}) {
        const auto pr = random_problem(level, n, 0.1, rng);
        const NeumannResult r = solve_neumann(pr);
        ASSERT_TRUE(r.converged);
        EXPECT_LE(r.fixed_point_residual, 1e-8);
        EXPECT_LE(fixed_point_residual_quadrature(pr, r.K, points(rng, 3)), 1e-8);
        const NormEstimate est = estimate_norm(pr, LatticeConfig{}, rng);
        EXPECT_LT(est.value, 0.5);
        EXPECT_LE(contraction_mismatch(r, est), 0.2) << "ratio " << r.observed_ratio << " estimate " << est.value;
    }
}

TEST(Solver, SourceProblemSatisfiesItsEquation) {
    std::mt19937_64 rng(431);
    const auto pr = random_problem(2, 2, 0.1, rng);
    const AnalyticField S = random_decaying_field(2, 2, kKernel, rng);
    const NeumannResult r = solve_with_source(pr, S);
    const AnalyticField defect = r.K - S - apply_Ax(pr, r.K);
    for (const auto& u : points(rng, 5)) EXPECT_LT(defect(u).norm(), 1e-10);
}

TEST(Solver, KernelDeviationIsLinearInTheCoupling) {
    std::mt19937_64 rng(433);
    const auto pr = random_problem(2, 2, 0.05, rng);
    const SlopeCheck c = p_slope_check(pr, LatticeConfig{}, rng);
    ASSERT_EQ(c.slopes.size(), 3u);
    EXPECT_TRUE(c.passes) << "slopes " << c.slopes[0] << " " << c.slopes[1] << " " << c.slopes[2] << " bound "
                          << c.bound;
}

TEST(Solver, LargeCouplingIsReportedAsDivergence) {
    std::mt19937_64 rng(439);
    const auto pr = random_problem(2, 2, 0.1, rng, false);
    const double norm = estimate_norm(pr, LatticeConfig{}, rng).value;
    auto big = pr;
    big.p = pr.p * 4.0 / norm;
    EXPECT_THROW(solve_neumann(big), DivergenceError);
}

TEST(Solver, RegimeAndSeedAreGatedAtValidation) {
    std::mt19937_64 rng(443);
    const NRule id4{EOperator::identity(4, 1), 1.0, 0.0};
    EXPECT_THROW(IntegralEquationProblem::make(4, random_decaying_field(4, 1, kKernel, rng), id4, 0.1),
                 std::invalid_argument);

    const NRule id2{EOperator::identity(2, 1), 1.0, 0.0};
    const AnalyticField algebra_valued = random_decaying_field(2, 1, kKernel, rng, false);
    EXPECT_THROW(IntegralEquationProblem::make(2, algebra_valued, id2, 0.1, Regime::real_seed), std::invalid_argument);
    const AnalyticField real = random_decaying_field(2, 1, kKernel, rng, false, 3, true);
    EXPECT_NO_THROW(IntegralEquationProblem::make(2, real, id2, 0.1, Regime::real_seed));

    CMatrix c(1, 1, 2);
    c.block()(0, 0) = 1.0;
    Eigen::VectorXcd grow(2);
    grow << 0.5, -1.0;
    EXPECT_THROW(IntegralEquationProblem::make(2, AnalyticField::exponential(c, grow, kKernel), id2, 0.1),
                 std::invalid_argument);
    EXPECT_THROW(IntegralEquationProblem::make(2, real, NRule{EOperator::identity(2, 1), -1.0, 0.0}, 0.1),
                 std::invalid_argument);
}
