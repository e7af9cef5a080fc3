#include "cdpde/scenario.hpp"

#include "cdpde/io.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace cdpde {

namespace {

constexpr double kCommutationTol = 1e-10;
constexpr double kSeedTol = 1e-9;

CMatrix to_complex(const Matrix& m) {
    return CMatrix(m.rows(), m.cols(), m.level(), m.block().cast<Complex>());
}

double sign_pow(int k) { return k % 2 == 0 ? 1.0 : -1.0; }

Number ray_symbol(int level) {
    return RayFoliation::standard(level, 1).symbol(DiracSpec::standard(level));
}

Number unit(const Number& a) { return a * (1.0 / a.norm()); }

// --- characteristic polynomials ----------------------------------------------------

// On e_+ the symbol acts as J |Lambda|, so sigma_x -> i kappa rho_x with i standing for J.
Complex characteristic(const LinearOperator& L, double kappa, Complex rx, Complex ry, Complex rt) {
    const Complex ik(0.0, kappa);
    Complex v = 0.0;
    for (const auto& t : L.terms)
        v += t.coef[0] * std::pow(ik * rx, t.px) * std::pow(ik * ry, t.py) * std::pow(rt, t.pt);
    return v;
}

double characteristic_scale(const LinearOperator& L, double kappa, Complex rx, Complex ry, Complex rt) {
    double s = 1.0;
    for (const auto& t : L.terms)
        s += std::abs(t.coef[0]) * std::pow(kappa * std::abs(rx), t.px) * std::pow(kappa * std::abs(ry), t.py) *
             std::pow(std::abs(rt), t.pt);
    return s;
}

bool has_time(const LinearOperator& L) {
    return std::any_of(L.terms.begin(), L.terms.end(), [](const LinearTerm& t) { return t.pt > 0; });
}

std::vector<Complex> polynomial_roots(std::vector<Complex> c) {
    double big = 0.0;
    for (const auto& a : c) big = std::max(big, std::abs(a));
    while (!c.empty() && std::abs(c.back()) <= 1e-14 * big) c.pop_back();
    const int d = static_cast<int>(c.size()) - 1;
    if (d < 1) return {};
    Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(d, d);
    for (int i = 1; i < d; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < d; ++i) comp(i, d - 1) = -c[i] / c[d];
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp, false);
    std::vector<Complex> roots(es.eigenvalues().data(), es.eigenvalues().data() + d);
    return roots;
}

// Coefficients in the unknown after fixing the other rate (solve_y) or tying rho_y = c rho_x.
std::vector<Complex> reduce(const LinearOperator& L, double kappa, bool solve_y, Complex fixed, double c) {
    const Complex ik(0.0, kappa);
    std::vector<Complex> poly;
    for (const auto& t : L.terms) {
        int power;
        Complex coef = t.coef[0];
        if (solve_y) {
            power = t.py;
            coef *= std::pow(ik * fixed, t.px) * std::pow(ik, t.py);
        } else {
            power = t.px + t.py;
            coef *= std::pow(ik, t.px + t.py) * std::pow(c, t.py);
        }
        if (static_cast<int>(poly.size()) <= power) poly.resize(power + 1, 0.0);
        poly[power] += coef;
    }
    return poly;
}

struct Rates {
    Complex x, y, t;
};

Rates solve_rates(const Scenario& s, const SeedTermSpec& spec, double kappa) {
    std::vector<const LinearOperator*> spatial, timed;
    for (const auto& L : s.constraints) (has_time(L) ? timed : spatial).push_back(&L);

    auto satisfies = [&](Complex rx, Complex ry) {
        for (const auto* L : spatial)
            if (std::abs(characteristic(*L, kappa, rx, ry, 0.0)) > 1e-8 * characteristic_scale(*L, kappa, rx, ry, 0.0))
                return false;
        return true;
    };

    std::vector<Rates> candidates;
    if (spec.x_rate && spec.y_rate) {
        candidates.push_back({*spec.x_rate, *spec.y_rate, 0.0});
    } else if (spec.x_rate || spec.y_per_x) {
        const bool solve_y = spec.x_rate.has_value();
        std::vector<Complex> roots;
        bool found_equation = false;
        for (const auto* L : spatial) {
            roots = polynomial_roots(reduce(*L, kappa, solve_y, solve_y ? *spec.x_rate : 0.0, spec.y_per_x.value_or(0.0)));
            if (!roots.empty()) {
                found_equation = true;
                break;
            }
        }
        if (!found_equation)
            throw std::invalid_argument("scenario " + s.name + ": constraints do not determine the seed rate");
        for (const Complex& r : roots) {
            const Rates c = solve_y ? Rates{*spec.x_rate, r, 0.0} : Rates{r, *spec.y_per_x * r, 0.0};
            if (!solve_y && !(c.x.real() < -1e-9)) continue;
            if (!satisfies(c.x, c.y)) continue;
            const bool dup = std::any_of(candidates.begin(), candidates.end(), [&](const Rates& o) {
                return std::abs(o.x - c.x) + std::abs(o.y - c.y) < 1e-8;
            });
            if (!dup) candidates.push_back(c);
        }
        std::sort(candidates.begin(), candidates.end(), [&](const Rates& a, const Rates& b) {
            const Complex ka = solve_y ? a.y : a.x, kb = solve_y ? b.y : b.x;
            if (std::abs(ka.real() - kb.real()) > 1e-9) return ka.real() < kb.real();
            return ka.imag() < kb.imag();
        });
    } else {
        throw std::invalid_argument("scenario " + s.name + ": seed term needs x_rate or y_per_x");
    }
    if (candidates.empty() || spec.root < 0 || spec.root >= static_cast<int>(candidates.size()))
        throw std::invalid_argument("scenario " + s.name + ": no decaying characteristic root for the seed");
    Rates r = candidates[spec.root];
    if (!(r.x.real() < 0.0)) throw std::invalid_argument("scenario " + s.name + ": seed rate along x does not decay");

    for (const auto* L : timed) {
        Complex lin = 0.0, rest = 0.0;
        const Complex ik(0.0, kappa);
        for (const auto& t : L->terms) {
            const Complex v = t.coef[0] * std::pow(ik * r.x, t.px) * std::pow(ik * r.y, t.py);
            if (t.pt == 0) rest += v;
            else if (t.pt == 1) lin += v;
            else throw std::invalid_argument("scenario " + s.name + ": only first-order time derivatives are supported");
        }
        if (std::abs(lin) < 1e-14) throw std::invalid_argument("scenario " + s.name + ": degenerate time constraint");
        const Complex rt = -rest / lin;
        if (std::abs(r.t) > 0.0 && std::abs(rt - r.t) > 1e-9 * std::max(1.0, std::abs(rt)))
            throw std::invalid_argument("scenario " + s.name + ": time constraints disagree");
        r.t = rt;
    }
    return r;
}

// --- YAML -------------------------------------------------------------------------

void expect_keys(const YAML::Node& n, const std::set<std::string>& allowed, const std::string& where) {
    if (!n.IsMap()) throw std::invalid_argument("scenario: " + where + " must be a map");
    for (const auto& kv : n) {
        const std::string k = kv.first.as<std::string>();
        if (!allowed.count(k)) throw std::invalid_argument("scenario: unknown key '" + k + "' in " + where);
    }
}

Complex read_complex(const YAML::Node& n) {
    if (n.IsScalar()) return {n.as<double>(), 0.0};
    if (n.IsSequence() && n.size() == 2) return {n[0].as<double>(), n[1].as<double>()};
    throw std::invalid_argument("scenario: complex values are a number or [re, im]");
}

Eigen::MatrixXd read_matrix(const YAML::Node& n) {
    if (!n.IsSequence() || n.size() == 0) throw std::invalid_argument("scenario: matrix must be a list of rows");
    const int rows = static_cast<int>(n.size());
    const int cols = static_cast<int>(n[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(n[i].size()) != cols) throw std::invalid_argument("scenario: ragged matrix");
        for (int j = 0; j < cols; ++j) m(i, j) = n[i][j].as<double>();
    }
    return m;
}

LinearOperator read_operator(const YAML::Node& n, int level) {
    if (!n.IsSequence() || n.size() == 0) throw std::invalid_argument("scenario: operator must list its terms");
    LinearOperator L;
    for (const auto& t : n) {
        if (!t.IsSequence() || t.size() != 4)
            throw std::invalid_argument("scenario: operator terms are [coef, px, py, pt]");
        LinearTerm term{Number::real(level, t[0].as<double>()), t[1].as<int>(), t[2].as<int>(), t[3].as<int>()};
        if (term.px < 0 || term.py < 0 || term.pt < 0) throw std::invalid_argument("scenario: negative power");
        L.terms.push_back(term);
    }
    return L;
}

std::vector<double> read_doubles(const YAML::Node& n) {
    std::vector<double> v;
    for (const auto& x : n) v.push_back(x.as<double>());
    return v;
}

// --- kernel equations ----------------------------------------------------------------

struct SplitOperator {
    std::map<int, double> p, q;  // sigma_x^l and sigma_y^l coefficients, l >= 1
    bool time = false;
    bool mixed = false;
};

SplitOperator split(const LinearOperator& L) {
    SplitOperator s;
    for (const auto& t : L.terms) {
        if (!t.coef.is_real()) throw std::invalid_argument("scenario: kernel equations need real coefficients");
        const double c = t.coef[0];
        if (t.pt > 0) {
            if (t.pt == 1 && t.px == 0 && t.py == 0 && c == 1.0) s.time = true;
            else s.mixed = true;
        } else if (t.px > 0 && t.py > 0) {
            s.mixed = true;
        } else if (t.px > 0) {
            s.p[t.px] += c;
        } else if (t.py > 0) {
            s.q[t.py] += c;
        }
    }
    return s;
}

// Q(s) = -P(-s): the seed's own equation moves every y-derivative onto z.
bool structurally_balanced(const SplitOperator& s) {
    std::set<int> orders;
    for (const auto& [l, c] : s.p) orders.insert(l);
    for (const auto& [l, c] : s.q) orders.insert(l);
    for (int l : orders) {
        const double pl = s.p.count(l) ? s.p.at(l) : 0.0;
        const double ql = s.q.count(l) ? s.q.at(l) : 0.0;
        if (std::abs(ql + sign_pow(l) * pl) > 1e-14 * std::max(1.0, std::abs(pl))) return false;
    }
    return true;
}

// Q(sigma_y) F = Q(c sigma_x) F on the seed.
double conversion_defect(const DiracOperator& sigma, const SplitOperator& s, const AnalyticField& F, double c) {
    const int level = F.level();
    LinearOperator lhs, rhs;
    for (const auto& [l, q] : s.q) {
        lhs.terms.push_back({Number::real(level, q), 0, l, 0});
        rhs.terms.push_back({Number::real(level, q * std::pow(c, l)), l, 0, 0});
    }
    const AnalyticField d = lhs.apply(sigma, F) - rhs.apply(sigma, F);
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    double worst = 0.0, scale = 1.0;
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd pt(F.dims());
        for (int i = 0; i < pt.size(); ++i) pt[i] = u(rng);
        worst = std::max(worst, d(pt).norm());
        scale = std::max(scale, F(pt).norm());
    }
    return worst / scale;
}

void certify_commutation(const Scenario& s, const DiracOperator& sigma, const LinearOperator& L, const EOperator& e) {
    std::mt19937_64 rng(0xe0e0);
    const auto probes = probe_fields(e.level(), e.size(), rng, 3);
    const auto points = probe_points(rng, 8);
    const double d = commutation_defect(sigma, L, e, probes, points);
    if (d > kCommutationTol)
        throw std::invalid_argument("scenario " + s.name + ": E does not commute with " + L.describe() +
                                    " (defect " + std::to_string(d) + ")");
}

AnalyticField embed3(const AnalyticField& k2) { return embed(k2, Layout{3, 1, k2.layout().n_time}, {0, 1}); }

struct GenericParts {
    AnalyticField M3, D, M_literal;
};

// With sigma_y F = c sigma_z F, q_l sigma_y^l moves onto N as q_l (-c)^l sigma_z^l plus
// the B_l boundary terms; D = -q_l (1 - (-c)^l) sigma_eta^l K is what remains.
GenericParts generic_M(const Scenario& s, const IntegralEquationProblem& pr, const AnalyticField& K,
                       const LinearOperator& L) {
    const SplitOperator sp = split(L);
    if (sp.mixed) throw std::invalid_argument("scenario " + s.name + ": " + L.describe() + " mixes x and y derivatives");
    const bool balanced = structurally_balanced(sp);
    double c = -1.0;
    if (!balanced) {
        if (sp.time) throw std::invalid_argument("scenario " + s.name + ": time-dependent equation needs Q(s) = -P(-s)");
        if (conversion_defect(pr.sigma, sp, pr.F, -1.0) > kSeedTol) {
            if (conversion_defect(pr.sigma, sp, pr.F, 1.0) > kSeedTol)
                throw std::invalid_argument("scenario " + s.name + ": seed does not convert y-derivatives for " +
                                            L.describe());
            c = 1.0;
        }
    }
    const HatContext ctx = pr.hat_context();
    GenericParts out;
    out.M3 = AnalyticField::zero_like(embed3(K));
    for (const auto& [l, a] : sp.p)
        if (a != 0.0) out.M3 = out.M3 + (pr.p * a) * Ahat_kernel(ctx, K, K, l);
    out.M_literal = out.M3;
    LinearOperator D;
    for (const auto& [l, q] : sp.q) {
        if (q == 0.0) continue;
        const AnalyticField B = Bhat_kernel(ctx, K, l);
        out.M3 = out.M3 + (pr.p * q * std::pow(c, l)) * B;
        out.M_literal = out.M_literal + (pr.p * q * sign_pow(l)) * B;
        const double left = -q * (1.0 - std::pow(-c, l));
        if (left != 0.0) D.terms.push_back({Number::real(s.level, left), 0, l, 0});
    }
    if (!D.terms.empty()) out.D = D.apply(pr.sigma, K);
    return out;
}

// N = E K(x, a y + b z), L = -sigma_x^2 - s sigma_y^2.
AnalyticField shifted_M(const Scenario& s, const IntegralEquationProblem& pr, const AnalyticField& K,
                        const LinearOperator& L, bool drop_correction = false) {
    const SplitOperator sp = split(L);
    if (sp.mixed || sp.time || sp.p.size() != 1 || !sp.p.count(2) || sp.p.at(2) != -1.0 || sp.q.size() != 1 ||
        !sp.q.count(2))
        throw std::invalid_argument("scenario " + s.name + ": shifted kind expects -sigma_x^2 - s sigma_y^2");
    const double sc = -sp.q.at(2);
    const double c = s.y_coef / s.z_coef;
    const HatContext ctx = pr.hat_context();
    const AnalyticField phi1 = boundary_value_z(ctx, K, 0);
    const AnalyticField phi2 = boundary_value_z(ctx, K, 1);
    // [sigma_z (F(z,y) N(x,z,y))]|_{z=x} = (I - A)[(sigma K - p Ahat_1) Phi_1 + K Phi_2]
    AnalyticField first = embed3(pr.sigma.apply(K, 0));
    if (!drop_correction) first = first - pr.p * Ahat_kernel(ctx, K, K, 1);
    const AnalyticField C = kernel_times(first, phi1) + kernel_times(K, phi2);
    return (-pr.p) * Ahat_kernel(ctx, K, K, 2) + (sc * pr.p * c) * C -
           (sc * pr.p * (1.0 - c)) * Bhat_kernel(ctx, K, 2);
}

AnalyticField multiplier_field(const Scenario& s, int rows, int nt, double sign) {
    // (f(y) g(x))^sign with f = c1 exp(lambda y), g = c2 exp(mu x)
    const Layout l{2, 1, nt};
    Eigen::VectorXcd rates = Eigen::VectorXcd::Zero(l.dims());
    rates[0] = sign * s.mu;
    rates[1] = sign * s.lambda;
    const double amp = std::pow(s.c1 * s.c2, sign);
    return AnalyticField::exponential(to_complex(Matrix::from_real(amp * Eigen::MatrixXd::Identity(rows, rows), s.level)),
                                      rates, l);
}

// (sigma + shift)^k on slot `slot`.
AnalyticField shifted_power(const DiracOperator& sigma, const AnalyticField& f, int slot, int k, const Number& shift) {
    AnalyticField g = f;
    for (int i = 0; i < k; ++i) g = sigma.apply(g, slot) + left_mul(shift, g);
    return g;
}

AnalyticField apply_shifted(const DiracOperator& sigma, const LinearOperator& L, const AnalyticField& f,
                            const Number& mu, const Number& lambda) {
    AnalyticField out = AnalyticField::zero_like(f);
    for (const auto& t : L.terms) {
        AnalyticField g = shifted_power(sigma, shifted_power(sigma, f, 0, t.px, mu), 1, t.py, lambda);
        for (int k = 0; k < t.pt; ++k) g = partial_time(g);
        out = out + t.coef[0] * g;
    }
    return out;
}

// K(x, x) as a one-slot field.
AnalyticField diagonal(const AnalyticField& K) { return restrict_diagonal(K, 0, 1); }

// f(x) viewed as a field of (x, y).
AnalyticField lift_x(const AnalyticField& f) { return embed(f, Layout{2, 1, f.layout().n_time}, {0}); }

double sup_at(const AnalyticField& f, const std::vector<Eigen::VectorXd>& pts, int threads = 1) {
    const auto v = evaluate_norms(f, pts, threads);
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

}  // namespace

const char* kind_name(ResidualKind k) {
    switch (k) {
        case ResidualKind::generic: return "generic";
        case ResidualKind::pide: return "pide";
        case ResidualKind::multiplier: return "multiplier";
        case ResidualKind::shifted: return "shifted";
        case ResidualKind::kdv: return "kdv";
        case ResidualKind::newtonian: return "newtonian";
    }
    return "?";
}

ResidualKind kind_from_name(const std::string& s) {
    for (auto k : {ResidualKind::generic, ResidualKind::pide, ResidualKind::multiplier, ResidualKind::shifted,
                   ResidualKind::kdv, ResidualKind::newtonian})
        if (s == kind_name(k)) return k;
    throw std::invalid_argument("scenario: unknown residual kind '" + s + "'");
}

EOperator Scenario::e_operator() const {
    const Eigen::MatrixXd B = b.size() ? b : Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(1 << level, 1 << level);
    if (s_seed != 0) {
        std::mt19937_64 rng(s_seed);
        S = random_automorphism_fixing(unit(ray_symbol(level)), rng);
    }
    return EOperator(level, B, S, g);
}

void Scenario::validate() const {
    auto fail = [&](const std::string& why) { throw std::invalid_argument("scenario " + name + ": " + why); };
    if (name.empty()) throw std::invalid_argument("scenario: missing name");
    if (level < 2 || level > 3) fail("level must be 2 or 3");
    if (n < 1 || n > 4) fail("matrix size must lie in [1, 4]");
    if (n_time < 0 || n_time > 1) fail("at most one time parameter");
    if (constraints.empty()) fail("no seed constraints");
    if (equations.empty()) fail("no kernel equations");
    if (equation_labels.size() != equations.size()) fail("equation labels do not match equations");
    if (seed.empty()) fail("empty seed");
    if (!std::isfinite(p)) fail("p must be finite");
    if (b.size() && (b.rows() != n || b.cols() != n)) fail("B has the wrong size");
    for (const auto& t : seed)
        if (t.shape.size() && (t.shape.rows() != n || t.shape.cols() != n)) fail("seed shape has the wrong size");
    for (const auto& L : constraints)
        for (const auto& t : L.terms)
            if (t.pt > 0 && n_time == 0) fail("time derivative without a time parameter");
    if (z_coef <= 0.0) fail("N must follow z with a positive coefficient");
    if (kind == ResidualKind::shifted) {
        if (std::abs((z_coef - y_coef) * (z_coef - y_coef) - 1.0) > 1e-12) fail("shifted kind needs (b - a)^2 = 1");
    } else if (y_coef != 0.0) {
        fail("N depends on y only in the shifted kind");
    }
    if (kind == ResidualKind::multiplier) {
        if (g.a != 1.0) fail("multiplier kind needs a translation g");
        if (c1 == 0.0 || c2 == 0.0) fail("multiplier constants must be non-zero");
    }
    if (lattice.points < 2 || lattice.extent <= 0.0) fail("bad lattice");
    if (!(ceiling > 0.0)) fail("ceiling must be positive");
}

static Scenario parse_text(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& ex) {
        throw std::invalid_argument(std::string("scenario: YAML error: ") + ex.what());
    }
    expect_keys(root,
                {"name", "title", "level", "n", "time_parameters", "p", "regime", "kind", "constraints", "equations",
                 "E", "N", "seed", "multiplier", "q", "continuation", "lattice", "ceiling"},
                "scenario");
    Scenario s;
    try {
        s.name = root["name"].as<std::string>();
        s.title = root["title"] ? root["title"].as<std::string>() : s.name;
        s.level = root["level"] ? root["level"].as<int>() : 2;
        s.n = root["n"] ? root["n"].as<int>() : 1;
        s.n_time = root["time_parameters"] ? root["time_parameters"].as<int>() : 0;
        s.p = root["p"] ? root["p"].as<double>() : 0.05;
        if (root["regime"]) {
            const std::string r = root["regime"].as<std::string>();
            if (r == "algebra") s.regime = Regime::algebra_valued;
            else if (r == "real") s.regime = Regime::real_seed;
            else throw std::invalid_argument("scenario: regime must be 'algebra' or 'real'");
        }
        if (root["kind"]) s.kind = kind_from_name(root["kind"].as<std::string>());
        if (s.level < 2 || s.level > 3) throw std::invalid_argument("scenario: level must be 2 or 3");
        for (const auto& c : root["constraints"]) s.constraints.push_back(read_operator(c, s.level));
        for (const auto& e : root["equations"]) {
            expect_keys(e, {"label", "terms"}, "equation");
            s.equation_labels.push_back(e["label"].as<std::string>());
            s.equations.push_back(read_operator(e["terms"], s.level));
        }
        if (const auto E = root["E"]) {
            expect_keys(E, {"B", "S_seed", "g"}, "E");
            if (E["B"]) s.b = read_matrix(E["B"]);
            if (E["S_seed"]) s.s_seed = E["S_seed"].as<unsigned>();
            if (E["g"]) {
                const auto g = read_doubles(E["g"]);
                if (g.size() != 2) throw std::invalid_argument("scenario: g is [a, b]");
                s.g = {g[0], g[1]};
            }
        }
        if (const auto N = root["N"]) {
            const auto c = read_doubles(N);
            if (c.size() != 2) throw std::invalid_argument("scenario: N is [z_coef, y_coef]");
            s.z_coef = c[0];
            s.y_coef = c[1];
        }
        for (const auto& t : root["seed"]) {
            expect_keys(t, {"amplitude", "shape", "x_rate", "y_rate", "y_per_x", "root", "real"}, "seed term");
            SeedTermSpec st;
            if (t["amplitude"]) st.amplitude = read_complex(t["amplitude"]);
            if (t["shape"]) st.shape = read_matrix(t["shape"]);
            if (t["x_rate"]) st.x_rate = read_complex(t["x_rate"]);
            if (t["y_rate"]) st.y_rate = read_complex(t["y_rate"]);
            if (t["y_per_x"]) st.y_per_x = t["y_per_x"].as<double>();
            if (t["root"]) st.root = t["root"].as<int>();
            if (t["real"]) st.real = t["real"].as<bool>();
            s.seed.push_back(st);
        }
        if (const auto m = root["multiplier"]) {
            expect_keys(m, {"lambda", "mu", "c1", "c2"}, "multiplier");
            s.lambda = m["lambda"].as<double>(0.0);
            s.mu = m["mu"].as<double>(0.0);
            s.c1 = m["c1"].as<double>(1.0);
            s.c2 = m["c2"].as<double>(1.0);
        }
        if (root["q"]) s.q = root["q"].as<double>();
        if (root["continuation"]) s.continuation = read_doubles(root["continuation"]);
        if (const auto l = root["lattice"]) {
            expect_keys(l, {"points", "extent", "times"}, "lattice");
            if (l["points"]) s.lattice.points = l["points"].as<int>();
            if (l["extent"]) s.lattice.extent = l["extent"].as<double>();
            if (l["times"]) s.lattice.times = read_doubles(l["times"]);
        }
        if (root["ceiling"]) s.ceiling = root["ceiling"].as<double>();
    } catch (const YAML::Exception& ex) {
        throw std::invalid_argument(std::string("scenario: bad value: ") + ex.what());
    }
    s.validate();
    return s;
}

namespace {

void emit_complex(YAML::Emitter& out, Complex c) {
    out << YAML::Flow << YAML::BeginSeq << c.real() << c.imag() << YAML::EndSeq;
}

AnalyticField field_from_node(const YAML::Node& root) {
    expect_keys(root, {"level", "rows", "cols", "layout", "terms"}, "field");
    const YAML::Node lay = root["layout"];
    expect_keys(lay, {"arity", "slot_dim", "n_time"}, "field layout");
    const Layout layout{lay["arity"].as<int>(), lay["slot_dim"].as<int>(), lay["n_time"].as<int>()};
    if (layout.arity < 1 || layout.slot_dim < 1 || layout.n_time < 0)
        throw std::invalid_argument("field: invalid layout");
    AnalyticField f(root["level"].as<int>(), root["rows"].as<int>(), root["cols"].as<int>(), layout);
    for (const auto& tn : root["terms"]) {
        expect_keys(tn, {"coeff", "exps", "rates"}, "field term");
        Term t;
        t.coeff = CMatrix(f.rows(), f.cols(), f.level());
        auto& b = t.coeff.block();
        if (static_cast<Eigen::Index>(tn["coeff"].size()) != b.size())
            throw std::invalid_argument("field: coefficient count does not match the shape");
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = read_complex(tn["coeff"][i]);
        const int dims = layout.dims();
        if (static_cast<int>(tn["exps"].size()) != dims || static_cast<int>(tn["rates"].size()) != dims)
            throw std::invalid_argument("field: exponent and rate lists need one entry per coordinate");
        t.exps.resize(dims);
        t.rates.resize(dims);
        for (int k = 0; k < dims; ++k) {
            t.exps[k] = tn["exps"][k].as<int>();
            if (t.exps[k] < 0) throw std::invalid_argument("field: negative exponent");
            t.rates[k] = read_complex(tn["rates"][k]);
        }
        f.add(t);
    }
    return f;
}

}  // namespace

std::string field_to_yaml(const AnalyticField& f) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "level" << YAML::Value << f.level();
    out << YAML::Key << "rows" << YAML::Value << f.rows();
    out << YAML::Key << "cols" << YAML::Value << f.cols();
    out << YAML::Key << "layout" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "arity"
        << YAML::Value << f.layout().arity << YAML::Key << "slot_dim" << YAML::Value << f.layout().slot_dim
        << YAML::Key << "n_time" << YAML::Value << f.layout().n_time << YAML::EndMap;
    out << YAML::Key << "terms" << YAML::Value << YAML::BeginSeq;
    for (const Term& t : f.terms()) {
        out << YAML::BeginMap;
        // Column-major over the (2^r) x (rows * cols) coefficient block.
        out << YAML::Key << "coeff" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index i = 0; i < t.coeff.block().size(); ++i) emit_complex(out, t.coeff.block().data()[i]);
        out << YAML::EndSeq;
        out << YAML::Key << "exps" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index k = 0; k < t.exps.size(); ++k) out << t.exps[k];
        out << YAML::EndSeq;
        out << YAML::Key << "rates" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index k = 0; k < t.rates.size(); ++k) emit_complex(out, t.rates[k]);
        out << YAML::EndSeq << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

AnalyticField field_from_yaml(const std::string& text) {
    try {
        return field_from_node(YAML::Load(text));
    } catch (const YAML::Exception& ex) {
        throw std::invalid_argument(std::string("field: ") + ex.what());
    }
}

// Conversions inside the tree throw YAML exceptions of their own; all of them are schema errors.
Scenario parse_scenario(const std::string& text) {
    try {
        return parse_text(text);
    } catch (const YAML::Exception& ex) {
        throw std::invalid_argument(std::string("scenario: ") + ex.what());
    }
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("scenario: cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string describe(const Scenario& s) {
    std::ostringstream os;
    os << s.name << " (" << kind_name(s.kind) << ", r = " << s.level << ", n = " << s.n << ", p = " << s.p << ")";
    return os.str();
}

CMatrix idempotent_coefficient(const Matrix& shape, Complex amplitude, const Number& u) {
    CMatrix c(shape.rows(), shape.cols(), shape.level());
    const Complex half = 0.5 * amplitude;
    for (int e = 0; e < shape.rows() * shape.cols(); ++e) {
        const double v = shape.block()(0, e);
        c.block()(0, e) = half * v;
        for (int j = 1; j < u.dim(); ++j) c.block()(j, e) = Complex(0.0, -1.0) * half * v * u[j];
    }
    return c;
}

AnalyticField build_seed(const Scenario& s) {
    const Number lambda = ray_symbol(s.level);
    const double kappa = lambda.norm();
    const Layout l{2, 1, s.n_time};
    AnalyticField F(s.level, s.n, s.n, l);
    for (const auto& spec : s.seed) {
        const Rates r = solve_rates(s, spec, kappa);
        Eigen::VectorXcd rates(l.dims());
        rates[0] = r.x;
        rates[1] = r.y;
        if (s.n_time == 1) rates[2] = r.t;
        const Matrix shape =
            Matrix::from_real(spec.shape.size() ? spec.shape : Eigen::MatrixXd::Identity(s.n, s.n), s.level);
        CMatrix coeff(s.n, s.n, s.level);
        if (spec.real) {
            if (spec.amplitude.imag() != 0.0 || rates.imag().norm() > 1e-12)
                throw std::invalid_argument("scenario " + s.name + ": a real seed term needs real rates and amplitude");
            rates = rates.real().cast<Complex>();
            coeff = to_complex(shape * spec.amplitude.real());
        } else {
            coeff = idempotent_coefficient(shape, spec.amplitude, unit(lambda));
        }
        F = F + AnalyticField::exponential(coeff, rates, l);
    }
    const double d = constraint_defect(s, F);
    if (d > kSeedTol)
        throw std::invalid_argument("scenario " + s.name + ": seed violates its constraints (defect " +
                                    std::to_string(d) + ")");
    return F;
}

double constraint_defect(const Scenario& s, const AnalyticField& F, int points, unsigned seed) {
    const IntegralEquationProblem pr = IntegralEquationProblem::make(s.level, F, s.n_rule(), s.p);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    double worst = 0.0;
    std::vector<AnalyticField> applied;
    for (const auto& L : s.constraints) applied.push_back(L.apply(pr.sigma, F));
    for (int k = 0; k < points; ++k) {
        Eigen::VectorXd pt(F.dims());
        for (int i = 0; i < pt.size(); ++i) pt[i] = u(rng);
        const double scale = std::max(1.0, F(pt).norm());
        for (const auto& a : applied) worst = std::max(worst, a(pt).norm() / scale);
    }
    return worst;
}

IntegralEquationProblem make_problem(const Scenario& s, const AnalyticField& F, double p) {
    double p_eff = p;
    // f(z) / f(g(z)) = exp(-lambda b) for g(z) = z + b.
    if (s.kind == ResidualKind::multiplier) p_eff = p * std::exp(-s.lambda * s.g.b);
    IntegralEquationProblem pr = IntegralEquationProblem::make(s.level, F, s.n_rule(), p_eff, s.regime);
    pr.validate();
    return pr;
}

AnalyticField KernelBalance::residual() const {
    const AnalyticField r = LK - at_eta_equals_y(M3);
    return X.empty() ? r : r - X;
}

std::vector<KernelBalance> kernel_balances(const Scenario& s, const IntegralEquationProblem& pr,
                                           const AnalyticField& K) {
    std::vector<KernelBalance> out;
    const EOperator e = pr.rule.e;
    for (std::size_t i = 0; i < s.equations.size(); ++i) {
        const LinearOperator& L = s.equations[i];
        certify_commutation(s, pr.sigma, L, e);
        KernelBalance b;
        b.label = s.equation_labels[i];
        b.LK = L.apply(pr.sigma, K);
        if (s.kind == ResidualKind::shifted) {
            b.M3 = shifted_M(s, pr, K, L);
            b.M_literal = b.M3;
        } else {
            GenericParts g = generic_M(s, pr, K, L);
            b.M3 = std::move(g.M3);
            b.M_literal = std::move(g.M_literal);
            b.D = std::move(g.D);
        }
        // M is transported with y held fixed inside N; restricting eta = y first differs
        // by A_x E (M|_{eta=y} - M), which vanishes unless N depends on y.
        AnalyticField source = apply_Ax(pr, at_eta_equals_y(b.M3)) - apply_Ax(pr, b.M3);
        if (!b.D.empty()) source = source + apply_Ax(pr, b.D);
        const auto pts = report_points(pr.F, s.lattice);
        if (sup_at(source, pts) > 0.0) {
            NeumannConfig cfg;
            cfg.lattice = s.lattice;
            b.X = solve_with_source(pr, source, cfg).K;
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<NamedField> residual_fields(const Scenario& s, const IntegralEquationProblem& pr, const AnalyticField& K) {
    std::vector<NamedField> out;
    const auto balances = kernel_balances(s, pr, K);
    const EOperator e = pr.rule.e;
    const DiracOperator& sg = pr.sigma;
    for (const auto& b : balances) out.push_back({b.label, b.residual(), true});
    for (const auto& b : balances)
        if (!b.X.empty()) {
            out.push_back({b.label + " integral term", b.X, false});
            if (s.kind != ResidualKind::pide)
                out.push_back({b.label + " without integral term", b.LK - at_eta_equals_y(b.M_literal), false});
        }

    switch (s.kind) {
        case ResidualKind::generic:
            break;
        case ResidualKind::shifted:
            // sigma_z [K(z,y) N] at z = x written with sigma K alone, as if A_1 had no kernel part.
            for (std::size_t i = 0; i < balances.size(); ++i) {
                const AnalyticField M = at_eta_equals_y(shifted_M(s, pr, K, s.equations[i], true));
                out.push_back({balances[i].label + " uncorrected boundary term",
                               balances[i].LK - M - (balances[i].X.empty() ? AnalyticField::zero_like(M) : balances[i].X),
                               false});
            }
            break;
        case ResidualKind::pide: {
            // Integral term written with K in place of F; N does not depend on y here.
            const SplitOperator sp = split(s.equations.front());
            const double coef = sp.q.count(1) ? sp.q.at(1) : 0.0;
            const AnalyticField sN = sg.apply(pr.rule(K), 2);
            const AnalyticField term = tail_integral(pr, integrand_FN(K, sN));
            const auto& b = balances.front();
            out.push_back({b.label + " literal", b.LK - at_eta_equals_y(b.M_literal) - (pr.p * coef) * term, false});
            out.push_back({"integral term with sigma_y N", term, false});
            break;
        }
        case ResidualKind::multiplier: {
            const Number u = unit(ray_symbol(s.level));
            const Number mu = u * s.mu, lambda = u * s.lambda;
            const AnalyticField inv = multiplier_field(s, s.n, s.n_time, -1.0);
            const AnalyticField Kphys = product(inv, K);
            for (std::size_t i = 0; i < balances.size(); ++i) {
                const AnalyticField lhs = apply_shifted(sg, s.equations[i], Kphys, mu, lambda);
                out.push_back({balances[i].label + " shifted", lhs - product(inv, at_eta_equals_y(balances[i].M3)),
                               true});
            }
            break;
        }
        case ResidualKind::kdv: {
            const AnalyticField v = 2.0 * sg.apply(diagonal(K), 0);
            const AnalyticField Ev = e.apply(v, 0);
            const AnalyticField vEv = product(v, Ev);
            const AnalyticField s3 = sg.power(v, 0, 3);
            out.push_back({"kdv v", partial_time(v) + (3.0 * pr.p) * sg.apply(vEv, 0) + s3, true});
            out.push_back({"kdv v literal 6", partial_time(v) + 6.0 * sg.apply(vEv, 0) + s3, false});
            out.push_back({"kdv v asymmetry", v - Ev, false});
            // Kernel forms written with u = 2 sigma E K(x, x).
            const AnalyticField sEKd = lift_x(sg.apply(diagonal(e.apply(K, 1)), 0));
            LinearOperator L1, L2;
            L1.terms = {{Number::real(s.level, 1.0), 2, 0, 0}, {Number::real(s.level, -1.0), 0, 2, 0}};
            L2.terms = {{Number::real(s.level, 1.0), 0, 0, 1}, {Number::real(s.level, 1.0), 3, 0, 0},
                        {Number::real(s.level, 3.0), 2, 1, 0}, {Number::real(s.level, 3.0), 1, 2, 0},
                        {Number::real(s.level, 1.0), 0, 3, 0}};
            out.push_back({"kernel L1 literal", L1.apply(sg, K) + (2.0 * pr.p) * product(K, sEKd), false});
            const AnalyticField KsE = product(K, sEKd);
            const AnalyticField twelve = L2.apply(sg, K) + 6.0 * (sg.apply(KsE, 0) + sg.apply(KsE, 1));
            // [sigma_z, sigma_x] E K(x, z) at z = x and the positional commutator on K(x,y) E K(x,x).
            const AnalyticField EK = e.apply(K, 1);
            const AnalyticField br1 = diagonal(sg.apply(sg.apply(EK, 0), 1) - sg.apply(sg.apply(EK, 1), 0));
            const Layout l3{3, 1, K.layout().n_time};
            const AnalyticField pairKE = product(embed(K, l3, {0, 2}), embed(diagonal(EK), l3, {1}));
            const AnalyticField br2 = restrict_diagonal(
                sg.apply(sg.apply(pairKE, 0), 1) - sg.apply(sg.apply(pairKE, 1), 0), 0, 1);
            out.push_back({"kernel L2 literal", twelve - product(K, lift_x(br1)) - br2, false});
            out.push_back({"bracket sigma_z sigma_x", br1, false});
            out.push_back({"bracket positional", br2, false});
            break;
        }
        case ResidualKind::newtonian: {
            LinearOperator L2;
            L2.terms = {{Number::real(s.level, 1.0), 0, 0, 1}, {Number::real(s.level, 1.0), 2, 0, 0},
                        {Number::real(s.level, s.q), 1, 1, 0}, {Number::real(s.level, 1.0), 0, 2, 0}};
            const AnalyticField sEKd = sg.apply(diagonal(e.apply(K, 1)), 0);
            // The seed constraints force d_t F = 0, so K is static; the kernel and diagonal
            // equations below only hold when K depends on x - y and are kept as diagnostics.
            out.push_back({"static kernel", partial_time(K), true});
            out.push_back({"kernel equation literal", L2.apply(sg, K) + (2.0 * pr.p) * product(K, lift_x(sEKd)), false});
            const AnalyticField gd = diagonal(K);
            const AnalyticField Eg = e.apply(gd, 0);
            out.push_back({"diagonal equation literal",
                           partial_time(gd) + sg.power(gd, 0, 2) + (2.0 * pr.p) * product(gd, sg.apply(Eg, 0)), false});
            break;
        }
    }
    return out;
}

std::vector<double> evaluate_norms(const AnalyticField& f, const std::vector<Eigen::VectorXd>& points, int threads) {
    std::vector<double> out(points.size(), 0.0);
    const int arity = f.layout().arity;
    auto value = [&](std::size_t i) {
        const Eigen::VectorXd& p = points[i];
        Eigen::VectorXd u(f.dims());
        // (x, y, t...) -> the field's own slots followed by the shared time parameters.
        for (int k = 0; k < arity; ++k) u[k] = p[k];
        for (int k = 0; k < f.layout().n_time; ++k) u[arity + k] = p[2 + k];
        out[i] = f(u).norm();
    };
    threads = std::max(1, std::min<int>(threads, static_cast<int>(points.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < points.size(); ++i) value(i);
        return out;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < points.size(); i += threads) value(i);
        });
    for (auto& th : pool) th.join();
    return out;
}

std::vector<Reconstruction> reconstruction_defects(const IntegralEquationProblem& pr, const AnalyticField& K,
                                                   int max_m, const std::vector<Eigen::VectorXd>& points) {
    const HatContext ctx = pr.hat_context();
    const AnalyticField N = pr.rule(K);
    std::vector<Reconstruction> out;
    for (int m = 1; m <= max_m; ++m) {
        Reconstruction r;
        r.m = m;
        r.a_defect = sup_at(A_family(pr.sigma, pr.F, N, m) - apply_I_minus_Ax(pr, Ahat_kernel(ctx, K, K, m)), points);
        r.b_defect = sup_at(B_family(pr.sigma, pr.F, N, m) - apply_I_minus_Ax(pr, Bhat_kernel(ctx, K, m)), points);
        out.push_back(r);
    }
    return out;
}

RunResult run_scenario(const Scenario& input, const RunOptions& opt) {
    RunResult res;
    res.scenario = input;
    Scenario& s = res.scenario;
    if (opt.p) s.p = *opt.p;
    if (opt.lattice_points) s.lattice.points = *opt.lattice_points;
    s.validate();
    res.p = s.p;

    res.F = build_seed(s);
    res.seed_defect = constraint_defect(s, res.F);
    const IntegralEquationProblem pr = make_problem(s, res.F, s.p);

    std::mt19937_64 rng(opt.seed);
    res.norm = estimate_norm(pr.p == 0.0 ? make_problem(s, res.F, 0.1) : pr, s.lattice, rng);
    NeumannConfig cfg;
    cfg.tol = opt.tol;
    cfg.lattice = s.lattice;
    res.neumann = solve_neumann(pr, cfg);
    const AnalyticField& K = res.neumann.K;

    res.points = report_points(res.F, s.lattice);
    const auto fields = residual_fields(s, pr, K);
    for (const auto& f : fields) {
        res.labels.push_back(f.label);
        res.residuals.push_back(evaluate_norms(f.field, res.points, opt.threads));
        res.gated.push_back(f.gated);
        if (f.gated)
            for (double v : res.residuals.back()) res.max_residual = std::max(res.max_residual, v);
    }
    double balance_scale = 0.0;
    for (const auto& b : kernel_balances(s, pr, K)) {
        balance_scale = std::max(balance_scale, sup_at(b.LK, res.points, opt.threads));
        AnalyticField d = b.LK - apply_Ax(pr, b.LK) - apply_I_minus_Ax(pr, b.M3);
        if (!b.D.empty()) d = d - apply_Ax(pr, b.D);
        res.transport_defect = std::max(res.transport_defect, sup_at(d, res.points, opt.threads));
    }
    res.K = s.kind == ResidualKind::multiplier ? product(multiplier_field(s, s.n, s.n_time, -1.0), K) : K;

    if (s.kind == ResidualKind::kdv && opt.continuation) {
        for (double p : s.continuation) {
            ContinuationStep step;
            step.p = p;
            try {
                const IntegralEquationProblem q = make_problem(s, res.F, p);
                const NeumannResult r = solve_neumann(q, cfg);
                step.converged = true;
                step.iterations = r.iterations;
                step.ratio = r.observed_ratio;
                for (const auto& f : residual_fields(s, q, r.K))
                    if (f.label == "kdv v") step.residual = sup_at(f.field, res.points, opt.threads);
                step.message = "converged";
            } catch (const DivergenceError& ex) {
                step.converged = false;
                step.residual = std::numeric_limits<double>::quiet_NaN();
                step.message = ex.what();
            }
            res.continuation.push_back(step);
        }
    }

    auto diag = [&](const std::string& k, double v) { res.diagnostics.emplace_back(k, v); };
    diag("p", s.p);
    diag("p_effective", pr.p);
    diag("iterations", res.neumann.iterations);
    diag("observed_ratio", res.neumann.observed_ratio);
    diag("norm_estimate", res.norm.value);
    diag("contraction_mismatch", contraction_mismatch(res.neumann, res.norm));
    diag("norm_accepted", res.norm.accepted ? 1.0 : 0.0);
    diag("fixed_point_residual", res.neumann.fixed_point_residual);
    diag("kernel_terms", static_cast<double>(K.terms().size()));
    diag("seed_defect", res.seed_defect);
    diag("transport_defect", res.transport_defect);
    diag("max_residual", res.max_residual);
    diag("balance_scale", balance_scale);
    diag("ceiling", s.ceiling);
    return res;
}

AnalyticField kdv_potential(const IntegralEquationProblem& pr, const AnalyticField& K) {
    return 2.0 * pr.sigma.apply(diagonal(K), 0);
}

std::vector<ProfileRow> kdv_profile(const RunResult& r, const std::vector<double>& times, int points) {
    const Scenario& s = r.scenario;
    const AnalyticField v = kdv_potential(make_problem(s, r.F, r.p), r.K);
    LatticeConfig cfg = s.lattice;
    cfg.times = {0.0};
    double length = 0.0;
    for (const auto& q : kernel_lattice(r.F, cfg)) length = std::max(length, q[0]);
    std::vector<ProfileRow> out;
    for (double t : times)
        for (int i = 0; i < points; ++i) {
            ProfileRow row;
            row.t = t;
            row.x = points == 1 ? 0.0 : length * i / (points - 1);
            Eigen::VectorXd u(v.dims());
            u.setZero();
            u[0] = row.x;
            if (v.layout().n_time > 0) u[1] = t;
            row.v = v(u).block().col(0);
            out.push_back(row);
        }
    return out;
}

}  // namespace cdpde
