#include "cdpde/solver.hpp"

#include <algorithm>
#include <cmath>

namespace cdpde {

namespace {

void check_kernel(const AnalyticField& g, const IntegralEquationProblem& pr) {
    const Layout& l = g.layout();
    if (l.slot_dim != 1 || (l.arity != 2 && l.arity != 3) || l.n_time != pr.F.layout().n_time)
        throw std::invalid_argument("solver: kernel must have 2 or 3 ray slots and the seed's time parameters");
    if (g.rows() != pr.F.cols() || g.level() != pr.F.level())
        throw std::invalid_argument("solver: kernel shape does not match the seed");
}

// (x, z, y, t) -> (x, s, y, t) with z = x + s.
AnalyticField shift_to_tail(const AnalyticField& g3) {
    const Layout& l = g3.layout();
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(l.dims(), l.dims());
    A(1, 0) = 1.0;
    return substitute(g3, l, A, Eigen::VectorXd::Zero(l.dims()));
}

double seed_decay(const AnalyticField& F) {
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(F.dims());
    dir[0] = 1.0;
    const double rate = F.decay_rate(dir);
    if (!(rate < 0.0)) throw std::invalid_argument("solver: seed does not decay along x");
    return -rate;
}

AnalyticField random_start(const IntegralEquationProblem& pr, std::mt19937_64& rng) {
    const double decay = seed_decay(pr.F);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Layout l = pr.kernel_layout();
    const int n = pr.F.rows();
    AnalyticField g(pr.F.level(), n, n, l);
    for (int k = 0; k < 2; ++k) {
        Term t;
        t.coeff = CMatrix(n, n, pr.F.level());
        for (int e = 0; e < n * n; ++e) t.coeff.block()(0, e) = u(rng);
        t.exps = Eigen::VectorXi::Zero(l.dims());
        t.rates = Eigen::VectorXcd::Zero(l.dims());
        t.rates[0] = -decay * (1.0 + 0.2 * u(rng));
        t.rates[1] = -decay * (1.0 + 0.2 * u(rng));
        g.add(t);
    }
    return g;
}

}  // namespace

IntegralEquationProblem IntegralEquationProblem::make(int level, AnalyticField F, NRule rule, double p,
                                                      Regime regime) {
    IntegralEquationProblem pr;
    pr.spec = DiracSpec::standard(level);
    // Axis 1: with psi_0 = 0 the i_0 axis would give a vanishing symbol.
    pr.fol = RayFoliation::standard(level, 1);
    pr.sigma = DiracOperator(pr.spec, pr.fol.symbol(pr.spec));
    pr.F = std::move(F);
    pr.rule = std::move(rule);
    pr.p = p;
    pr.regime = regime;
    pr.validate();
    return pr;
}

void IntegralEquationProblem::validate() const {
    const Layout& l = F.layout();
    if (l.slot_dim != 1 || l.arity != 2) throw std::invalid_argument("solver: seed must have two ray slots");
    if (F.rows() != F.cols()) throw std::invalid_argument("solver: seed must be square");
    if (spec.conjugated) throw std::invalid_argument("solver: only the left-acting operator is supported");
    if (rule.e.level() != F.level() || rule.e.size() != F.rows())
        throw std::invalid_argument("solver: E does not match the seed shape");
    if (rule.z_coef <= 0.0) throw std::invalid_argument("solver: N must follow z towards infinity");
    rule.e.validate();
    if (rule.e.g().a <= 0.0) throw std::invalid_argument("solver: T_g must preserve the direction of the ray");
    if (regime == Regime::algebra_valued && F.level() > 3)
        throw std::invalid_argument("solver: algebra-valued regime requires r <= 3");
    if (regime == Regime::real_seed)
        for (const Term& t : F.terms()) {
            const auto& b = t.coeff.block();
            if (b.rows() > 1 && b.bottomRows(b.rows() - 1).norm() != 0.0)
                throw std::invalid_argument("solver: real-seed regime requires a real-valued F");
        }
    if (!std::isfinite(p)) throw std::invalid_argument("solver: p must be finite");
    seed_decay(F);
}

AnalyticField tail_integral(const IntegralEquationProblem& pr, const AnalyticField& g3) {
    if (g3.layout().arity != 3 || g3.layout().slot_dim != 1)
        throw std::invalid_argument("solver: tail integrand must have slots (x, z, y)");
    const AnalyticField tail = integrate_tail(shift_to_tail(g3), 1, Layout{2, 1, g3.layout().n_time});
    return left_mul(pr.sigma.symbol().inverse(), tail);
}

AnalyticField apply_Ax(const IntegralEquationProblem& pr, const AnalyticField& G) {
    check_kernel(G, pr);
    return pr.p * tail_integral(pr, integrand_FN(pr.F, pr.rule(G)));
}

Matrix apply_Ax_quadrature(const IntegralEquationProblem& pr, const AnalyticField& G, const Eigen::VectorXd& xy,
                           const QuadratureConfig& cfg, QuadratureReport* report) {
    check_kernel(G, pr);
    const AnalyticField g = integrand_FN(pr.F, pr.rule(G));
    Eigen::VectorXd u(g.dims());
    u[0] = xy[0];
    u[1] = xy[0];
    u.tail(g.dims() - 2) = xy.tail(xy.size() - 1);
    return pr.p * improper_integral(pr.spec, g, pr.fol, 1, u, 1, cfg, report);
}

AnalyticField apply_I_minus_Ax(const IntegralEquationProblem& pr, const AnalyticField& G) {
    const AnalyticField diag = G.layout().arity == 3 ? at_eta_equals_y(G) : G;
    return diag - apply_Ax(pr, G);
}

std::vector<Eigen::VectorXd> kernel_lattice(const AnalyticField& F, const LatticeConfig& cfg) {
    if (cfg.points < 2 || cfg.extent <= 0.0) throw std::invalid_argument("solver: bad lattice");
    const double L = cfg.extent / seed_decay(F);
    const int nt = F.layout().n_time;
    const std::vector<double> times = nt == 0 ? std::vector<double>{0.0} : cfg.times;
    std::vector<Eigen::VectorXd> pts;
    pts.reserve(times.size() * cfg.points * cfg.points);
    for (double t : times)
        for (int i = 0; i < cfg.points; ++i)
            for (int j = 0; j < cfg.points; ++j) {
                Eigen::VectorXd p(2 + nt);
                p[0] = L * i / (cfg.points - 1);
                p[1] = L * j / (cfg.points - 1);
                for (int k = 0; k < nt; ++k) p[2 + k] = t;
                pts.push_back(p);
            }
    return pts;
}

std::vector<Eigen::VectorXd> report_points(const AnalyticField& F, const LatticeConfig& cfg, int per_axis) {
    const double L = cfg.extent / seed_decay(F);
    const int nt = F.layout().n_time;
    const int stride = std::max(1, (cfg.points - 1) / (2 * per_axis));
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < per_axis; ++i)
        for (int j = 0; j < per_axis; ++j) {
            Eigen::VectorXd p(2 + nt);
            // Offset by one stride so no point sits on the lattice boundary.
            p[0] = L * (stride * (2 * i + 1)) / (cfg.points - 1);
            p[1] = L * (stride * (2 * j + 1)) / (cfg.points - 1);
            for (int k = 0; k < nt; ++k) p[2 + k] = cfg.times.empty() ? 0.0 : cfg.times.front();
            pts.push_back(p);
        }
    return pts;
}

double lattice_sup(const AnalyticField& f, const std::vector<Eigen::VectorXd>& points) {
    double s = 0.0;
    for (const auto& p : points) s = std::max(s, f(p).norm());
    return s;
}

NeumannResult solve_neumann(const IntegralEquationProblem& pr, const NeumannConfig& cfg) {
    return solve_with_source(pr, pr.F, cfg);
}

NeumannResult solve_with_source(const IntegralEquationProblem& pr, const AnalyticField& source,
                                const NeumannConfig& cfg) {
    pr.validate();
    const auto pts = kernel_lattice(pr.F, cfg.lattice);
    NeumannResult r;
    r.K = source;
    r.increments.push_back(lattice_sup(source, pts));
    if (pr.p == 0.0 || r.increments.back() == 0.0) {
        r.converged = true;
        return r;
    }
    AnalyticField delta = source;
    int rising = 0;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        delta = apply_Ax(pr, delta);
        r.K = r.K + delta;
        const double inc = lattice_sup(delta, pts);
        const double prev = r.increments.back();
        r.increments.push_back(inc);
        r.iterations = it;
        rising = (prev > 0.0 && inc >= prev) ? rising + 1 : 0;
        if (rising >= cfg.divergence_window)
            throw DivergenceError("solver: Neumann iteration does not contract at p = " + std::to_string(pr.p), pr.p);
        if (r.K.terms().size() > cfg.max_terms)
            throw DivergenceError("solver: kernel term count exceeded the limit at p = " + std::to_string(pr.p), pr.p);
        if (inc <= cfg.tol) {
            r.converged = true;
            break;
        }
    }
    // Late ratios reflect the dominant eigenvalue; the first few carry start-up transients.
    const int n = static_cast<int>(r.increments.size());
    const int take = std::min(3, n - 1);
    double log_sum = 0.0;
    int used = 0;
    for (int k = n - take; k < n; ++k)
        if (r.increments[k] > 0.0 && r.increments[k - 1] > 0.0) {
            log_sum += std::log(r.increments[k] / r.increments[k - 1]);
            ++used;
        }
    r.observed_ratio = used ? std::exp(log_sum / used) : 0.0;
    r.fixed_point_residual = lattice_sup(r.K - source - apply_Ax(pr, r.K), pts);
    if (!r.converged)
        throw DivergenceError("solver: no convergence within " + std::to_string(cfg.max_iterations) +
                                  " iterations at p = " + std::to_string(pr.p),
                              pr.p);
    return r;
}

AnalyticField neumann_partial_sum(const IntegralEquationProblem& pr, int N) {
    AnalyticField sum = pr.F, power = pr.F;
    for (int n = 1; n <= N; ++n) {
        power = apply_Ax(pr, power);
        sum = sum + power;
    }
    return sum;
}

AnalyticField fixed_point_iterate(const IntegralEquationProblem& pr, int steps) {
    AnalyticField K = pr.F;
    for (int m = 0; m < steps; ++m) K = pr.F + apply_Ax(pr, K);
    return K;
}

NormEstimate estimate_norm(const IntegralEquationProblem& pr, const LatticeConfig& lattice, std::mt19937_64& rng,
                           int iterations, double threshold) {
    const auto pts = kernel_lattice(pr.F, lattice);
    AnalyticField g = random_start(pr, rng);
    NormEstimate est;
    for (int k = 0; k < iterations; ++k) {
        const double before = lattice_sup(g, pts);
        if (before == 0.0) break;
        g = (1.0 / before) * g;
        const AnalyticField next = apply_Ax(pr, g);
        est.history.push_back(lattice_sup(next, pts));
        g = next;
    }
    // Shifted-argument operators are close to quasi-nilpotent: the per-step gain keeps
    // shrinking, so the bound is the largest gain seen rather than the last one.
    est.value = est.history.empty() ? 0.0 : *std::max_element(est.history.begin(), est.history.end());
    est.accepted = est.value <= threshold;
    return est;
}

double contraction_mismatch(const NeumannResult& r, const NormEstimate& est) {
    const int k = static_cast<int>(r.increments.size()) - 1;
    if (k < 1 || est.history.empty() || r.increments[k - 1] == 0.0) return 0.0;
    const double observed = r.increments[k] / r.increments[k - 1];
    const double predicted = est.history[std::min<std::size_t>(k, est.history.size()) - 1];
    return predicted > 0.0 ? std::abs(observed / predicted - 1.0) : 1.0;
}

SlopeCheck p_slope_check(const IntegralEquationProblem& pr, const LatticeConfig& lattice, std::mt19937_64& rng,
                         const std::vector<double>& ps) {
    IntegralEquationProblem ref = pr;
    if (ref.p == 0.0) ref.p = 0.1;
    const NormEstimate est = estimate_norm(ref, lattice, rng);
    const auto pts = kernel_lattice(pr.F, lattice);
    SlopeCheck c;
    c.ps = ps;
    // ||K(p) - F|| <= |p| (||A|| / |p_ref|) ||F|| / (1 - ||A(p)||); the factor 2 absorbs the
    // gap between the dominant ratio and the norm of A on F itself.
    c.bound = 2.0 * est.value / std::abs(ref.p) * lattice_sup(pr.F, pts);
    NeumannConfig cfg;
    cfg.lattice = lattice;
    cfg.tol = 1e-16;
    for (double p : ps) {
        IntegralEquationProblem q = pr;
        q.p = p;
        const NeumannResult r = solve_neumann(q, cfg);
        c.slopes.push_back(lattice_sup(r.K - pr.F, pts) / std::abs(p));
    }
    const auto [lo, hi] = std::minmax_element(c.slopes.begin(), c.slopes.end());
    c.passes = *hi <= c.bound && (*hi - *lo) <= 0.01 * *hi;
    return c;
}

double fixed_point_residual_quadrature(const IntegralEquationProblem& pr, const AnalyticField& K,
                                       const std::vector<Eigen::VectorXd>& points) {
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-12;
    cfg.abs_tol = 1e-15;
    double worst = 0.0;
    for (const auto& p : points)
        worst = std::max(worst, (K(p) - pr.F(p) - apply_Ax_quadrature(pr, K, p, cfg)).norm());
    return worst;
}

double time_derivative_defect(const IntegralEquationProblem& pr, const AnalyticField& K,
                              const std::vector<Eigen::VectorXd>& points) {
    if (pr.F.layout().n_time == 0) throw std::invalid_argument("solver: scenario has no time parameter");
    QuadratureConfig cfg;
    cfg.rel_tol = 1e-13;
    cfg.abs_tol = 1e-15;
    const AnalyticField N = pr.rule(K);
    const AnalyticField whole = integrand_FN(pr.F, N);
    const AnalyticField split = integrand_FN(partial_time(pr.F), N) + integrand_FN(pr.F, partial_time(N));
    auto lift = [](const Eigen::VectorXd& xy) {
        Eigen::VectorXd u(xy.size() + 1);
        u[0] = xy[0];
        u[1] = xy[0];
        u.tail(xy.size() - 1) = xy.tail(xy.size() - 1);
        return u;
    };
    const PointFunction h = [&](const Eigen::VectorXd& xy) {
        return improper_integral(pr.spec, whole, pr.fol, 1, lift(xy), 1, cfg);
    };
    double worst = 0.0;
    for (const auto& p : points) {
        Matrix lhs = derivative_fd(h, p, 2, 1e-2);
        for (int k = 3; k < p.size(); ++k) lhs += derivative_fd(h, p, k, 1e-2);
        const Matrix rhs = improper_integral(pr.spec, split, pr.fol, 1, lift(p), 1, cfg);
        worst = std::max(worst, (lhs - rhs).norm());
    }
    return worst;
}

}  // namespace cdpde
