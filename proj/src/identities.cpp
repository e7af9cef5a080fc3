#include "cdpde/identities.hpp"

#include "cdpde/lineint.hpp"
#include "cdpde/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cdpde {

namespace {

const Layout kTwo{2, 1, 0};
const Layout kThree{3, 1, 0};

struct Bench {
    DiracSpec spec;
    RayFoliation fol;
    DiracOperator sigma;
};

Bench bench(int level) {
    Bench b;
    b.spec = DiracSpec::standard(level);
    b.fol = RayFoliation::standard(level, 1);
    b.sigma = DiracOperator(b.spec, b.fol.symbol(b.spec));
    return b;
}

double rel_diff(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

Eigen::VectorXd sample_point(int dims, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    Eigen::VectorXd p(dims);
    for (int i = 0; i < dims; ++i) p[i] = u(rng);
    return p;
}

double max_rel_diff(const AnalyticField& a, const AnalyticField& b, std::mt19937_64& rng, int points = 5) {
    double worst = 0.0;
    for (int k = 0; k < points; ++k) {
        const Eigen::VectorXd p = sample_point(a.dims(), rng);
        worst = std::max(worst, rel_diff(a(p), b(p)));
    }
    return worst;
}

QuadratureConfig tight() {
    QuadratureConfig c;
    c.rel_tol = 1e-13;
    c.abs_tol = 1e-15;
    return c;
}

Matrix tail(const Bench& b, const AnalyticField& g3, double x, double y) {
    return improper_integral(b.spec, g3, b.fol, 1, Eigen::Vector3d(x, x, y), 1, tight());
}

PointFunction nested_sigma(const DiracOperator& d, PointFunction h, int m, double step) {
    for (int k = 0; k < m; ++k)
        h = [d, inner = h, step](const Eigen::VectorXd& u) { return sigma_fd(d, kTwo, 0, inner, u, step); };
    return h;
}

AnalyticField merge_z(const AnalyticField& g4) { return restrict_diagonal(g4, 1, 2); }

AnalyticField field_or_zero(int level, int n, Layout l, std::mt19937_64& rng, bool zero) {
    return zero ? AnalyticField(level, n, n, l) : random_ray_field(level, n, l, rng);
}

// Runs `body` and turns a quadrature failure into a row status.
void guarded(std::vector<DefectRow>& rows, const std::string& id, int m, int point,
             const std::function<double()>& body) {
    DefectRow r{id, m, point, 0.0, "ok"};
    try {
        r.defect = body();
    } catch (const QuadratureError& e) {
        r.defect = std::numeric_limits<double>::quiet_NaN();
        r.status = std::string("quadrature: ") + e.what();
    }
    rows.push_back(r);
}

void prop2_5(IdentityReport& rep, int max_m, int pairs, std::mt19937_64& rng, bool zero) {
    const Bench b = bench(rep.level);
    for (int k = 0; k < pairs; ++k) {
        const AnalyticField F = field_or_zero(rep.level, 1, kTwo, rng, zero);
        const AnalyticField N = field_or_zero(rep.level, 1, kThree, rng, zero);
        const AnalyticField G = integrand_FN(F, N);
        const AnalyticField G4 = split_FN(F, N);
        const Eigen::VectorXd p = sample_point(2, rng) * 0.5;
        const PointFunction I = [&](const Eigen::VectorXd& u) { return tail(b, G, u[0], u[1]); };
        for (int m = 1; m <= max_m; ++m) {
            guarded(rep.rows, "sigma_x through the integral", m, k, [&] {
                const Matrix lhs = nested_sigma(b.sigma, I, m, 0.05)(p);
                const Matrix rhs = tail(b, b.sigma.power(G, 0, m), p[0], p[1]) + A_family(b.sigma, F, N, m)(p);
                return rel_diff(lhs, rhs);
            });
            guarded(rep.rows, "integration by parts in z", m, k, [&] {
                const Matrix lhs = tail(b, merge_z(b.sigma.power(G4, 1, m)), p[0], p[1]);
                const Matrix rhs = tail(b, merge_z(b.sigma.power(G4, 2, m)), p[0], p[1]) * (m % 2 ? -1.0 : 1.0) +
                                   B_family(b.sigma, F, N, m)(p);
                return rel_diff(lhs, rhs);
            });
        }
    }
}

void cor2_6(IdentityReport& rep, int max_m, int pairs, std::mt19937_64& rng, bool zero) {
    const Bench b = bench(rep.level);
    const int n = rep.level == 2 ? 2 : 1;
    const auto R = Evaluation::recursive, C = Evaluation::closed;
    for (int k = 0; k < pairs; ++k) {
        const AnalyticField F = field_or_zero(rep.level, n, kTwo, rng, zero);
        const AnalyticField N = field_or_zero(rep.level, n, kThree, rng, zero);
        for (int m = 1; m <= max_m; ++m) {
            guarded(rep.rows, "A closed vs recursive", m, k,
                    [&] { return max_rel_diff(A_family(b.sigma, F, N, m, R), A_family(b.sigma, F, N, m, C), rng); });
            guarded(rep.rows, "B closed vs recursive", m, k,
                    [&] { return max_rel_diff(B_family(b.sigma, F, N, m, R), B_family(b.sigma, F, N, m, C), rng); });
        }
    }
}

void lemma3_5(IdentityReport& rep, int max_m, int pairs, std::mt19937_64& rng, bool zero) {
    const Bench b = bench(rep.level);
    const int n = rep.level == 2 ? 2 : 1;
    const auto R = Evaluation::recursive, C = Evaluation::closed;
    for (int k = 0; k < pairs; ++k) {
        const EOperator e = random_admissible(rep.level, n, b.sigma.symbol(), false, rng);
        const HatContext ctx{b.sigma, NRule{e, 1.0, 0.0}, 0.3};
        const AnalyticField K = field_or_zero(rep.level, n, kTwo, rng, zero);
        for (int m = 1; m <= max_m; ++m) {
            guarded(rep.rows, "Ahat closed vs recursive", m, k,
                    [&] { return max_rel_diff(Ahat_family(ctx, K, m, R), Ahat_family(ctx, K, m, C), rng); });
            guarded(rep.rows, "Bhat closed vs recursive", m, k,
                    [&] { return max_rel_diff(Bhat_family(ctx, K, m, R), Bhat_family(ctx, K, m, C), rng); });
        }
        // Reconstruction needs a K that actually solves the integral equation, and a real seed.
        if (zero) continue;
        const AnalyticField F = random_ray_field(rep.level, n, kTwo, rng, 2, true);
        const IntegralEquationProblem pr = IntegralEquationProblem::make(rep.level, F, NRule{e, 1.0, 0.0}, 0.05);
        const NeumannResult sol = solve_neumann(pr);
        std::vector<Eigen::VectorXd> pts;
        for (int j = 0; j < 5; ++j) pts.push_back(sample_point(2, rng).cwiseAbs());
        for (const auto& r : reconstruction_defects(pr, sol.K, max_m, pts)) {
            rep.rows.push_back({"A reconstruction", r.m, k, r.a_defect, "ok"});
            rep.rows.push_back({"B reconstruction", r.m, k, r.b_defect, "ok"});
        }
    }
}

void prop3_15(IdentityReport& rep, int max_m, int pairs, std::mt19937_64& rng, bool zero) {
    const Bench b = bench(rep.level);
    const int n = rep.level == 2 ? 2 : 1;
    const auto R = Evaluation::recursive, C = Evaluation::closed;
    for (int k = 0; k < pairs; ++k) {
        const AnalyticField N = field_or_zero(rep.level, n, kThree, rng, zero);
        const AnalyticField K = field_or_zero(rep.level, n, kTwo, rng, zero);
        for (int m = 1; m <= max_m; ++m) {
            guarded(rep.rows, "Atilde closed vs recursive", m, k, [&] {
                return max_rel_diff(Atilde_family(b.sigma, N, K, m, R), Atilde_family(b.sigma, N, K, m, C), rng);
            });
            guarded(rep.rows, "Btilde closed vs recursive", m, k, [&] {
                return max_rel_diff(Btilde_family(b.sigma, N, K, m, R), Btilde_family(b.sigma, N, K, m, C), rng);
            });
        }
        // The derivative identities are checked against finite differences up to order 2.
        const AnalyticField H = integrand_NK(N, K);
        const AnalyticField H4 = split_NK(N, K);
        const Eigen::VectorXd p = sample_point(2, rng) * 0.5;
        const PointFunction I = [&](const Eigen::VectorXd& u) { return tail(b, H, u[0], u[1]); };
        for (int m = 1; m <= std::min(max_m, 2); ++m) {
            guarded(rep.rows, "sigma_x through the swapped integral", m, k, [&] {
                const Matrix lhs = nested_sigma(b.sigma, I, m, 0.05)(p);
                const Matrix rhs = tail(b, b.sigma.power(H, 0, m), p[0], p[1]) + Atilde_family(b.sigma, N, K, m)(p);
                return rel_diff(lhs, rhs);
            });
            guarded(rep.rows, "swapped integration by parts", m, k, [&] {
                const Matrix lhs = tail(b, merge_z(b.sigma.power(H4, 1, m)), p[0], p[1]);
                const Matrix rhs = tail(b, merge_z(b.sigma.power(H4, 2, m)), p[0], p[1]) * (m % 2 ? -1.0 : 1.0) +
                                   Btilde_family(b.sigma, N, K, m)(p);
                return rel_diff(lhs, rhs);
            });
        }
    }
}

Number random_number(int level, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Number a(level);
    for (int j = 0; j < a.dim(); ++j) a[j] = u(rng);
    return a;
}

std::string show(const Number& a) {
    std::ostringstream os;
    os.precision(6);
    os << a;
    return os.str();
}

}  // namespace

bool AlgebraReport::passed() const {
    return std::all_of(laws.begin(), laws.end(), [](const LawResult& l) { return l.passed; });
}

AlgebraReport algebra_check(int level, int pairs, unsigned seed) {
    check_level(level);
    std::mt19937_64 rng(seed);
    AlgebraReport rep;
    rep.level = level;
    LawResult norm{"norm multiplicativity", 0.0, 1e-12, level <= 3, false, {}};
    LawResult alt{"alternativity", 0.0, 1e-13, level <= 3, false, {}};
    LawResult assoc{"associativity", 0.0, 1e-13, level == 2, false, {}};
    LawResult conj{"conjugate of a product", 0.0, 1e-13, true, false, {}};
    LawResult inv{"two-sided inverse", 0.0, 1e-13, true, false, {}};
    double worst_assoc = -1.0;
    for (int k = 0; k < pairs; ++k) {
        const Number a = random_number(level, rng), b = random_number(level, rng), c = random_number(level, rng);
        const double dn = std::abs((a * b).norm() - a.norm() * b.norm()) / (a.norm() * b.norm());
        if (dn > norm.max_defect) {
            norm.max_defect = dn;
            norm.witness = "|ab| - |a||b| relative " + std::to_string(dn) + " at a = " + show(a) + ", b = " + show(b);
        }
        alt.max_defect = std::max({alt.max_defect, associator(a, a, b).norm(), associator(b, a, a).norm()});
        const double da = associator(a, b, c).norm();
        if (da > worst_assoc) {
            worst_assoc = da;
            assoc.witness = "<a,b,c> = " + show(associator(a, b, c)) + " for a = " + show(a) + ", b = " + show(b) +
                            ", c = " + show(c);
        }
        assoc.max_defect = std::max(assoc.max_defect, da);
        conj.max_defect = std::max(conj.max_defect, ((a * b).conj() - b.conj() * a.conj()).norm());
        const Number one = Number::real(level, 1.0);
        inv.max_defect = std::max({inv.max_defect, (a * a.inverse() - one).norm(), (a.inverse() * a - one).norm()});
    }
    for (LawResult* l : {&norm, &alt, &assoc, &conj, &inv}) {
        const bool holds = l->max_defect <= l->tol;
        l->passed = l->expected ? holds : !holds;
        if (l->expected) l->witness = holds ? "" : l->witness;
        rep.laws.push_back(*l);
    }
    return rep;
}

double IdentityReport::max_defect() const {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::isnan(r.defect) ? 0.0 : r.defect);
    return worst;
}

bool IdentityReport::quadrature_failed() const {
    return std::any_of(rows.begin(), rows.end(), [](const DefectRow& r) { return r.status != "ok"; });
}

AnalyticField random_ray_field(int level, int n, Layout layout, std::mt19937_64& rng, int terms, bool real) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), decay(0.6, 1.8);
    AnalyticField f(level, n, n, layout);
    for (int k = 0; k < terms; ++k) {
        Term t;
        const bool osc = !real && k % 2 == 1;
        t.coeff = CMatrix(n, n, level);
        for (Eigen::Index j = 0; j < t.coeff.block().cols(); ++j)
            for (Eigen::Index i = 0; i < (real ? 1 : t.coeff.block().rows()); ++i)
                t.coeff.block()(i, j) = Complex(u(rng), osc ? u(rng) : 0.0);
        t.exps = Eigen::VectorXi::Zero(layout.dims());
        t.rates = Eigen::VectorXcd::Zero(layout.dims());
        for (int c = 0; c < layout.dims(); ++c) t.rates[c] = Complex(0.3 * u(rng), osc ? u(rng) : 0.0);
        for (int s = 0; s < layout.arity; ++s) {
            const int c = layout.slot_begin(s);
            t.rates[c] = Complex(-decay(rng), t.rates[c].imag());
            if (k == 2) t.exps[c] = 1;
        }
        f.add(t);
    }
    return f;
}

IdentityReport identity_check(const std::string& family, int max_m, int level, unsigned seed, int pairs,
                              bool zero_fields) {
    if (level < 2 || level > 3) throw std::invalid_argument("identity-check: level must be 2 or 3");
    if (max_m < 1 || max_m > kMaxBoundaryOrder) throw std::invalid_argument("identity-check: order out of range");
    if (pairs < 1) throw std::invalid_argument("identity-check: need at least one field pair");
    IdentityReport rep;
    rep.family = family;
    rep.level = level;
    std::mt19937_64 rng(seed);
    if (family == "prop2_5") prop2_5(rep, max_m, pairs, rng, zero_fields);
    else if (family == "cor2_6") cor2_6(rep, max_m, pairs, rng, zero_fields);
    else if (family == "lemma3_5") lemma3_5(rep, max_m, pairs, rng, zero_fields);
    else if (family == "prop3_15") prop3_15(rep, max_m, pairs, rng, zero_fields);
    else throw std::invalid_argument("identity-check: unknown family '" + family + "'");
    return rep;
}

}  // namespace cdpde
