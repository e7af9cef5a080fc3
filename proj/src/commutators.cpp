#include "cdpde/commutators.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cdpde {

namespace {

void check_order(int m) {
    if (m < 1 || m > kMaxBoundaryOrder)
        throw std::invalid_argument("commutators: order must lie in [1, " + std::to_string(kMaxBoundaryOrder) + "]");
}

void check_ray(const AnalyticField& f, int arity, const char* what) {
    const Layout& l = f.layout();
    if (l.slot_dim != 1 || l.arity != arity)
        throw std::invalid_argument(std::string("commutators: ") + what + " must have " + std::to_string(arity) +
                                    " ray slots");
}

Layout with_arity(const AnalyticField& f, int arity) { return Layout{arity, 1, f.layout().n_time}; }

double sign_pow(int k) { return k % 2 == 0 ? 1.0 : -1.0; }

}  // namespace

const char* family_name(Family f) {
    switch (f) {
        case Family::A: return "A";
        case Family::B: return "B";
        case Family::Ahat: return "Ahat";
        case Family::Bhat: return "Bhat";
        case Family::P: return "P";
        case Family::Q: return "Q";
        case Family::Atilde: return "Atilde";
        case Family::Btilde: return "Btilde";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    for (Family f : {Family::A, Family::B, Family::Ahat, Family::Bhat, Family::P, Family::Q, Family::Atilde,
                     Family::Btilde})
        if (name == family_name(f)) return f;
    throw std::invalid_argument("commutators: unknown family '" + name + "'");
}

AnalyticField integrand_FN(const AnalyticField& F, const AnalyticField& N) {
    check_ray(F, 2, "F");
    check_ray(N, 3, "N");
    return product(embed(F, with_arity(N, 3), {1, 2}), N);
}

AnalyticField split_FN(const AnalyticField& F, const AnalyticField& N) {
    check_ray(F, 2, "F");
    check_ray(N, 3, "N");
    const Layout l = with_arity(N, 4);
    return product(embed(F, l, {1, 3}), embed(N, l, {0, 2, 3}));
}

AnalyticField integrand_NK(const AnalyticField& N, const AnalyticField& K) {
    check_ray(N, 3, "N");
    check_ray(K, 2, "K");
    return product(N, embed(K, with_arity(N, 3), {0, 1}));
}

AnalyticField split_NK(const AnalyticField& N, const AnalyticField& K) {
    check_ray(N, 3, "N");
    check_ray(K, 2, "K");
    const Layout l = with_arity(N, 4);
    return product(embed(N, l, {0, 1, 3}), embed(K, l, {0, 2}));
}

AnalyticField on_diagonal(const AnalyticField& g) {
    if (g.layout().arity == 3) return restrict_diagonal(g, 0, 1);
    if (g.layout().arity == 4) return restrict_diagonal(restrict_diagonal(g, 0, 2), 0, 1);
    throw std::invalid_argument("commutators: diagonal restriction needs 3 or 4 slots");
}

AnalyticField diagonal_family(const DiracOperator& sigma, const AnalyticField& g3, int m, Evaluation ev) {
    check_order(m);
    check_ray(g3, 3, "integrand");
    if (ev == Evaluation::recursive) {
        AnalyticField a = -on_diagonal(g3);
        AnalyticField d = g3;
        for (int k = 2; k <= m; ++k) {
            d = sigma.apply(d, 0);
            a = sigma.apply(a, 0) - on_diagonal(d);
        }
        return a;
    }
    // -sum_j sigma_x^j [sigma_x^{m-1-j} G]|
    AnalyticField out = AnalyticField::zero_like(on_diagonal(g3));
    for (int j = 0; j < m; ++j) out = out - sigma.power(on_diagonal(sigma.power(g3, 0, m - 1 - j)), 0, j);
    return out;
}

AnalyticField split_family(const DiracOperator& sigma, const AnalyticField& g4, int m, Evaluation ev) {
    check_order(m);
    check_ray(g4, 4, "split integrand");
    if (ev == Evaluation::recursive) {
        // Kept before restriction: B_m(z1, z2) so that sigma_z1 sees only the first factor.
        AnalyticField b = -g4;
        for (int k = 2; k <= m; ++k) b = sign_pow(k) * sigma.power(g4, 2, k - 1) + sigma.apply(b, 1);
        return on_diagonal(b);
    }
    AnalyticField out = AnalyticField::zero_like(on_diagonal(g4));
    for (int k = 0; k < m; ++k)
        out = out + sign_pow(k + 1) * on_diagonal(sigma.power(sigma.power(g4, 1, m - 1 - k), 2, k));
    return out;
}

AnalyticField A_family(const DiracOperator& sigma, const AnalyticField& F, const AnalyticField& N, int m,
                       Evaluation ev) {
    return diagonal_family(sigma, integrand_FN(F, N), m, ev);
}

AnalyticField B_family(const DiracOperator& sigma, const AnalyticField& F, const AnalyticField& N, int m,
                       Evaluation ev) {
    return split_family(sigma, split_FN(F, N), m, ev);
}

AnalyticField Atilde_family(const DiracOperator& sigma, const AnalyticField& N, const AnalyticField& K, int m,
                            Evaluation ev) {
    return diagonal_family(sigma, integrand_NK(N, K), m, ev);
}

AnalyticField Btilde_family(const DiracOperator& sigma, const AnalyticField& N, const AnalyticField& K, int m,
                            Evaluation ev) {
    return split_family(sigma, split_NK(N, K), m, ev);
}

// --- kernel families -------------------------------------------------------------

AnalyticField boundary_value(const HatContext& ctx, const AnalyticField& g, int k) {
    return on_diagonal(ctx.sigma.power(ctx.rule(g), 0, k));
}

AnalyticField boundary_value_z(const HatContext& ctx, const AnalyticField& g, int k) {
    return on_diagonal(ctx.sigma.power(ctx.rule(g), 1, k));
}

AnalyticField kernel_times(const AnalyticField& k, const AnalyticField& v) {
    check_ray(v, 2, "boundary value");
    const Layout l = with_arity(v, 3);
    const AnalyticField k3 = k.layout().arity == 3 ? k : embed(k, l, {0, 1});
    check_ray(k3, 3, "kernel");
    return product(k3, embed(v, l, {0, 2}));
}

AnalyticField at_eta_equals_y(const AnalyticField& g3) {
    check_ray(g3, 3, "kernel");
    return restrict_diagonal(g3, 1, 2);
}

namespace {

AnalyticField Ahat_recursive(const HatContext& ctx, const AnalyticField& K, const AnalyticField& G, int m) {
    // -sum_j sigma^{j-1}[K V^G_{m-j}] + p sum_{j>=2} Ahat_{j-1}(K; K V^G_{m-j})
    AnalyticField out = AnalyticField::zero_like(kernel_times(K, boundary_value(ctx, G, 0)));
    for (int j = 1; j <= m; ++j) {
        const AnalyticField kv = kernel_times(K, boundary_value(ctx, G, m - j));
        out = out - ctx.sigma.power(kv, 0, j - 1);
        if (j >= 2 && ctx.p != 0.0) out = out + ctx.p * Ahat_recursive(ctx, K, kv, j - 1);
    }
    return out;
}

// Iterated kernels K_{k,l1..lk} = K V^{K_{k-1,...}}_{lk}, K_{1,l} = K V^G_l, summed as
// -sum_k p^{k-1} sum_{|l| <= m-k} sigma^{m-k-|l|} K_{k,l}.
AnalyticField Ahat_closed(const HatContext& ctx, const AnalyticField& K, const AnalyticField& G, int m) {
    std::map<std::vector<int>, AnalyticField> iterated;
    std::function<const AnalyticField&(const std::vector<int>&)> kernel = [&](const std::vector<int>& l) -> const AnalyticField& {
        auto it = iterated.find(l);
        if (it != iterated.end()) return it->second;
        const std::vector<int> head(l.begin(), l.end() - 1);
        const AnalyticField& inner = head.empty() ? G : kernel(head);
        return iterated.emplace(l, kernel_times(K, boundary_value(ctx, inner, l.back()))).first->second;
    };
    AnalyticField out = AnalyticField::zero_like(kernel_times(K, boundary_value(ctx, G, 0)));
    std::vector<int> l;
    std::function<void(int)> walk = [&](int budget) {
        // budget = m - k - |l| for the current chain
        const int k = static_cast<int>(l.size());
        const double coef = -std::pow(ctx.p, k - 1);
        if (coef != 0.0 || k == 1) out = out + coef * ctx.sigma.power(kernel(l), 0, budget);
        for (int next = 0; next <= budget - 1; ++next) {
            l.push_back(next);
            walk(budget - 1 - next);
            l.pop_back();
        }
    };
    for (int l1 = 0; l1 <= m - 1; ++l1) {
        l = {l1};
        walk(m - 1 - l1);
    }
    return out;
}

}  // namespace

AnalyticField Ahat_kernel(const HatContext& ctx, const AnalyticField& K, const AnalyticField& G, int m, Evaluation ev) {
    check_order(m);
    check_ray(K, 2, "K");
    return ev == Evaluation::recursive ? Ahat_recursive(ctx, K, G, m) : Ahat_closed(ctx, K, G, m);
}

AnalyticField Bhat_kernel(const HatContext& ctx, const AnalyticField& K, int m, Evaluation ev) {
    check_order(m);
    check_ray(K, 2, "K");
    const Layout l3 = with_arity(K, 3);
    AnalyticField out = AnalyticField::zero_like(embed(K, l3, {0, 1}));
    for (int j = 1; j <= m; ++j) {
        AnalyticField w = embed(ctx.sigma.power(K, 0, m - j), l3, {0, 1});
        if (m - j >= 1 && ctx.p != 0.0) w = w - ctx.p * Ahat_kernel(ctx, K, K, m - j, ev);
        out = out + sign_pow(j) * kernel_times(w, boundary_value_z(ctx, K, j - 1));
    }
    return out;
}

AnalyticField Ahat_family(const HatContext& ctx, const AnalyticField& K, int m, Evaluation ev) {
    return at_eta_equals_y(Ahat_kernel(ctx, K, K, m, ev));
}

AnalyticField Bhat_family(const HatContext& ctx, const AnalyticField& K, int m, Evaluation ev) {
    return at_eta_equals_y(Bhat_kernel(ctx, K, m, ev));
}

CommutationCertificate certify(const HatContext& ctx, int n_probe_pairs) {
    std::mt19937_64 rng(0xc0117e);
    const EOperator& e = ctx.rule.e;
    const auto probes = probe_fields(e.level(), e.size(), rng, n_probe_pairs);
    const auto points = probe_points(rng, 8);
    LinearOperator sx;
    sx.terms.push_back({Number::real(e.level(), 1.0), 1, 0, 0});
    CommutationCertificate c;
    c.defect = commutation_defect(ctx.sigma, sx, e, probes, points);
    return c;
}

namespace {

AnalyticField commutator_correction(const HatContext& ctx, const AnalyticField& K, int m,
                                    const CommutationCertificate* cert, const char* name) {
    check_order(m);
    check_ray(K, 2, "K");
    if (cert == nullptr)
        throw std::logic_error(std::string("commutators: ") + name + " requested without a commutation certificate");
    if (!cert->holds())
        throw std::logic_error(std::string("commutators: ") + name +
                               " needs [sigma, E] = 0; certificate defect " + std::to_string(cert->defect));
    (void)ctx;
    return AnalyticField::zero_like(K);
}

}  // namespace

AnalyticField P_family(const HatContext& ctx, const AnalyticField& K, int m, const CommutationCertificate* cert) {
    return commutator_correction(ctx, K, m, cert, "P");
}

AnalyticField Q_family(const HatContext& ctx, const AnalyticField& K, int m, const CommutationCertificate* cert) {
    return commutator_correction(ctx, K, m, cert, "Q");
}

HatValues Ahat_Bhat_P_Q(const HatContext& ctx, const AnalyticField& K, int m, const CommutationCertificate* cert,
                        const Eigen::VectorXd& xy) {
    HatValues v;
    v.p = P_family(ctx, K, m, cert)(xy);
    v.q = Q_family(ctx, K, m, cert)(xy);
    v.ahat = Ahat_family(ctx, K, m)(xy);
    v.bhat = Bhat_family(ctx, K, m)(xy);
    return v;
}

std::string term_tree(Family f, int m) {
    check_order(m);
    std::ostringstream os;
    auto sgn = [](double s) { return s > 0 ? "+ " : "- "; };
    switch (f) {
        case Family::A:
        case Family::Atilde: {
            const char* g = f == Family::A ? "F(z,y) N(x,z,y)" : "N(x,z,y) K(x,z)";
            for (int j = 0; j < m; ++j)
                os << "- sx^" << j << " [ sx^" << m - 1 - j << " " << g << " ]|z=x\n";
            break;
        }
        case Family::B:
        case Family::Btilde: {
            const char* g = f == Family::B ? "F(z1,y) N(x,z2,y)" : "N(x,z1,y) K(x,z2)";
            for (int k = 0; k < m; ++k)
                os << sgn(sign_pow(k + 1)) << "sz1^" << m - 1 - k << " sz2^" << k << " " << g << " |z1=z2=x\n";
            break;
        }
        case Family::Ahat: {
            std::vector<int> l;
            std::function<void(int)> walk = [&](int budget) {
                const int k = static_cast<int>(l.size());
                os << "- p^" << k - 1 << " sx^" << budget << " K_{" << k;
                for (int v : l) os << "," << v;
                os << "}\n";
                for (int next = 0; next <= budget - 1; ++next) {
                    l.push_back(next);
                    walk(budget - 1 - next);
                    l.pop_back();
                }
            };
            for (int l1 = 0; l1 <= m - 1; ++l1) {
                l = {l1};
                walk(m - 1 - l1);
            }
            break;
        }
        case Family::Bhat:
            for (int j = 1; j <= m; ++j) {
                os << sgn(sign_pow(j)) << "[ sx^" << m - j << " K";
                if (m - j >= 1) os << " - p Ahat_" << m - j << "(K;K)";
                os << " ] [ sz^" << j - 1 << " N_K ]|z=x\n";
            }
            break;
        case Family::P:
        case Family::Q:
            os << "0  (E commutes with sigma)\n";
            break;
    }
    return os.str();
}

}  // namespace cdpde
