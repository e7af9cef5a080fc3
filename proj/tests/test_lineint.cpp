#include "cdpde/lineint.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cdpde;
using namespace cdpde::testing;

namespace {

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// int_0^inf of one term along +t from x, by the binomial expansion of (x + s)^k.
Matrix term_tail(const Term& t, int level, double x) {
    const Complex a = t.rates[0];
    const int k = t.exps[0];
    Complex sum = 0.0;
    double fact = 1.0;
    for (int i = 0; i <= k; ++i) {
        if (i) fact *= i;
        sum += binom(k, i) * std::pow(x, k - i) * fact / std::pow(-a, i + 1);
    }
    const Complex s = std::exp(a * x) * sum;
    const Eigen::MatrixXd re = t.coeff.block().real() * s.real() - t.coeff.block().imag() * s.imag();
    return Matrix(t.coeff.rows(), t.coeff.cols(), level, re);
}

// Move the slot of `x` along its ray to parameter t0 (full slot) or to t0 itself (ray slot).
Eigen::VectorXd ray_anchor(const RayFoliation& fol, const Layout& l, int slot, const Eigen::VectorXd& x, double t0) {
    Eigen::VectorXd out = x;
    if (l.slot_dim == 1) {
        out[l.slot_begin(slot)] = t0;
        return out;
    }
    const Number here(fol.level, x.segment(l.slot_begin(slot), l.slot_dim));
    const double t = fol.parameter(here);
    out.segment(l.slot_begin(slot), l.slot_dim) += (t0 - t) * fol.v0.coeffs();
    return out;
}

struct Case {
    int level;
    bool full;
    bool conjugated;
};

RayFoliation random_foliation(int level, std::mt19937_64& rng) {
    Number v0 = random_number(level, rng);
    v0[0] = 1.0 + std::abs(v0[0]);
    return RayFoliation::with_direction(random_number(level, rng, 0.3), v0);
}

}  // namespace

TEST(Foliation, FrameDualAndParameter) {
    std::mt19937_64 rng(201);
    const auto std3 = RayFoliation::standard(3, 2);
    EXPECT_LT((std3.dual() - Eigen::VectorXd::Unit(8, 2)).norm(), 1e-15);
    for (int level = 2; level <= 3; ++level) {
        const auto fol = random_foliation(level, rng);
        EXPECT_NEAR(fol.dual().dot(fol.v0.coeffs()), 1.0, 1e-13);
        const Eigen::VectorXd off = random_point((1 << level) - 1, rng);
        EXPECT_NEAR(fol.parameter(fol.point(0.7, off)), 0.7, 1e-13);
    }
    RayFoliation bad = RayFoliation::standard(2);
    bad.transverse[1] = bad.transverse[0];
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = RayFoliation::standard(2);
    bad.v0 = Number(2);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(LineIntegral, ZeroIntegrand) {
    const DiracSpec spec = DiracSpec::standard(2, 1.0);
    const auto fol = RayFoliation::standard(2);
    const AnalyticField zero(2, 1, 1, Layout{1, 1, 0});
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.4);
    EXPECT_EQ(improper_integral(spec, zero, fol, 0, x, 1).norm(), 0.0);
    EXPECT_EQ(line_integral(spec, zero, fol, 0, x, Eigen::VectorXd::Constant(1, 2.0)).norm(), 0.0);
    EXPECT_EQ(fundamental_theorem_defect(spec, zero, fol, 0, x), 0.0);
}

TEST(LineIntegral, ImproperMatchesTermwiseClosedForm) {
    std::mt19937_64 rng(203);
    const Layout l{1, 1, 0};
    for (int trial = 0; trial < 10; ++trial) {
        const int level = 2 + trial % 2;
        const auto g = random_decaying_field(level, 2, l, rng);
        const double x = random_point(1, rng)[0];
        Matrix expect(2, 2, level);
        for (const auto& t : g.terms()) expect += term_tail(t, level, x);
        QuadratureReport rep;
        const Matrix got = ray_integral(g, Eigen::VectorXd::Constant(1, x), Eigen::VectorXd::Ones(1),
                                        std::numeric_limits<double>::infinity(), {}, &rep);
        EXPECT_LE((got - expect).norm(), 1e-9 * expect.norm() + 1e-12);
        EXPECT_LE(rep.tail_bound, 0.5e-12);
        EXPECT_GT(rep.panels, 0);
    }
}

TEST(LineIntegral, TailBoundMajorizesAndDoublingIsConsistent) {
    std::mt19937_64 rng(207);
    const Layout l{1, 1, 0};
    const auto g = random_decaying_field(3, 1, l, rng);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.25), w = Eigen::VectorXd::Ones(1);
    for (double T : {0.5, 2.0, 6.0}) {
        const Matrix beyond = ray_integral(g, x + T * w, w, std::numeric_limits<double>::infinity());
        EXPECT_LE(beyond.norm(), tail_bound(g, x, w, T) * (1 + 1e-12));
    }
    QuadratureConfig a, b;
    a.t_max = 4.0;
    b.t_max = 8.0;
    QuadratureReport ra, rb;
    const Matrix ia = ray_integral(g, x, w, std::numeric_limits<double>::infinity(), a, &ra);
    const Matrix ib = ray_integral(g, x, w, std::numeric_limits<double>::infinity(), b, &rb);
    EXPECT_LE((ia - ib).norm(), ra.tail_bound + rb.tail_bound + ra.error_estimate + rb.error_estimate);
}

TEST(LineIntegral, FundamentalTheoremTowardInfinity) {
    std::mt19937_64 rng(211);
    QuadratureConfig tight;
    tight.rel_tol = 1e-13;
    tight.abs_tol = 1e-14;
    for (Case c : {Case{2, false, false}, Case{2, true, false}, Case{3, false, false}, Case{3, true, false},
                   Case{2, true, true}, Case{3, false, true}}) {
        const DiracSpec spec = DiracSpec::standard(c.level, 0.6, c.conjugated);
        const auto fol = random_foliation(c.level, rng);
        const auto ray = random_decaying_field(c.level, 1, Layout{1, 1, 0}, rng);
        const AnalyticField g = c.full ? lift_to_full(ray, fol) : ray;
        const Eigen::VectorXd x = random_point(g.dims(), rng, -0.3, 0.3);
        EXPECT_LE(fundamental_theorem_defect(spec, g, fol, 0, x, tight), 1e-6)
            << "r=" << c.level << " full=" << c.full << " hat=" << c.conjugated;
    }
}

TEST(LineIntegral, VariableUpperLimitGivesPlusG) {
    std::mt19937_64 rng(213);
    QuadratureConfig tight;
    tight.rel_tol = 1e-13;
    tight.abs_tol = 1e-14;
    for (Case c : {Case{2, false, false}, Case{3, true, false}, Case{2, true, true}}) {
        const DiracSpec spec = DiracSpec::standard(c.level, -0.4, c.conjugated);
        const auto fol = random_foliation(c.level, rng);
        const auto ray = random_decaying_field(c.level, 2, Layout{1, 1, 0}, rng);
        const AnalyticField g = c.full ? lift_to_full(ray, fol) : ray;
        const Layout& l = g.layout();
        const PointFunction h = [&](const Eigen::VectorXd& v) {
            return line_integral(spec, g, fol, 0, ray_anchor(fol, l, 0, v, -0.5), v, tight);
        };
        const DiracOperator d(spec, fol.symbol(spec));
        const Eigen::VectorXd x = random_point(l.dims(), rng, -0.3, 0.3);
        EXPECT_LE((sigma_fd(d, l, 0, h, x) - g(x)).norm(), 1e-6);
    }
}

TEST(LineIntegral, IntegralOfSigmaIsTheIncrement) {
    std::mt19937_64 rng(217);
    for (Case c : {Case{2, false, false}, Case{2, true, false}, Case{3, true, false}, Case{3, false, true}}) {
        const DiracSpec spec = DiracSpec::standard(c.level, 0.8, c.conjugated);
        const auto fol = random_foliation(c.level, rng);
        const auto ray = random_decaying_field(c.level, 1, Layout{1, 1, 0}, rng);
        const AnalyticField f = c.full ? lift_to_full(ray, fol) : ray;
        const DiracOperator d(spec, fol.symbol(spec));
        const AnalyticField sf = d.apply(f, 0);
        const Eigen::VectorXd x = random_point(f.dims(), rng);
        const Eigen::VectorXd x0 = ray_anchor(fol, f.layout(), 0, x, 1.3);
        EXPECT_LE((line_integral(spec, sf, fol, 0, x0, x) - (f(x) - f(x0))).norm(), 1e-8);
    }
}

TEST(LineIntegral, TowardMinusInfinity) {
    std::mt19937_64 rng(219);
    QuadratureConfig tight;
    tight.rel_tol = 1e-13;
    tight.abs_tol = 1e-14;
    const DiracSpec spec = DiracSpec::standard(3, 0.5);
    const auto fol = random_foliation(3, rng);
    // Rates flipped so the field decays toward -inf.
    auto g = random_decaying_field(3, 1, Layout{1, 1, 0}, rng);
    g = substitute(g, g.layout(), -Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
    const DiracOperator d(spec, fol.symbol(spec));
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.2);
    const PointFunction h = [&](const Eigen::VectorXd& v) { return improper_integral(spec, g, fol, 0, v, -1, tight); };
    EXPECT_LE((sigma_fd(d, g.layout(), 0, h, x) + g(x)).norm(), 1e-6);
}

TEST(LineIntegral, AdditivityAndRightLinearity) {
    std::mt19937_64 rng(223);
    const DiracSpec spec = DiracSpec::standard(2, 0.3);
    const auto fol = random_foliation(2, rng);
    const auto g = lift_to_full(random_decaying_field(2, 1, Layout{1, 1, 0}, rng), fol);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd a = random_point(4, rng);
        const Eigen::VectorXd b = ray_anchor(fol, g.layout(), 0, a, random_point(1, rng, -2, 2)[0]);
        const Eigen::VectorXd c = ray_anchor(fol, g.layout(), 0, a, random_point(1, rng, -2, 2)[0]);
        const Matrix ab = line_integral(spec, g, fol, 0, a, b), bc = line_integral(spec, g, fol, 0, b, c);
        const Matrix ac = line_integral(spec, g, fol, 0, a, c);
        EXPECT_LE((ab + bc - ac).norm(), 2e-9 * (1.0 + ac.norm()));

        const Number s = random_number(2, rng);
        const Matrix lhs = line_integral(spec, right_mul(g, s), fol, 0, a, b);
        EXPECT_LE((lhs - right_mul(ab, s)).norm(), 1e-12 * (1.0 + lhs.norm()));
    }
}

TEST(LineIntegral, RejectsBadInput) {
    std::mt19937_64 rng(227);
    const DiracSpec spec = DiracSpec::standard(2, 1.0);
    const auto fol = RayFoliation::standard(2);
    auto grow = random_decaying_field(2, 1, Layout{1, 1, 0}, rng);
    grow = substitute(grow, grow.layout(), -Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
    EXPECT_THROW(improper_integral(spec, grow, fol, 0, Eigen::VectorXd::Zero(1), 1), std::invalid_argument);

    const auto full = random_decaying_field(2, 1, Layout{1, 4, 0}, rng);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(4), b = a;
    b[1] = 1.0;  // transverse to v0 = i_0
    EXPECT_THROW(line_integral(spec, full, fol, 0, a, b), std::invalid_argument);

    // Fast oscillation with a tiny panel budget.
    CMatrix c(1, 1, 2);
    c.block()(0, 0) = 1.0;
    const auto osc = AnalyticField::exponential(c, Eigen::VectorXcd::Constant(1, Complex(-0.01, 400.0)), Layout{1, 1, 0});
    QuadratureConfig cfg;
    cfg.max_panels = 16;
    EXPECT_THROW(improper_integral(spec, osc, fol, 0, Eigen::VectorXd::Zero(1), 1, cfg), QuadratureError);
}
