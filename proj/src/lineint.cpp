#include "cdpde/lineint.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <queue>

namespace cdpde {

namespace {

using Block = Eigen::MatrixXd;

struct Rule {
    std::vector<double> x, wk, wg;  // non-negative Kronrod nodes; Gauss weight 0 off the Gauss nodes

    Rule() {
        using K = boost::math::quadrature::gauss_kronrod<double, 15>;
        using G = boost::math::quadrature::gauss<double, 7>;
        x.assign(K::abscissa().begin(), K::abscissa().end());
        wk.assign(K::weights().begin(), K::weights().end());
        wg.assign(x.size(), 0.0);
        // The 7-point Gauss nodes sit at the even Kronrod positions.
        for (std::size_t i = 0; i < G::abscissa().size(); ++i) {
            if (std::abs(G::abscissa()[i] - x[2 * i]) > 1e-15) throw std::logic_error("lineint: node layout");
            wg[2 * i] = G::weights()[i];
        }
    }
};

const Rule& rule() {
    static const Rule r;
    return r;
}

struct Panel {
    double a, b;
    Block value;
    double err;
    bool operator<(const Panel& o) const { return err < o.err; }
};

template <typename F>
Panel gauss_kronrod(const F& f, double a, double b) {
    const Rule& r = rule();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    Block f0 = f(c);
    Block k = f0 * r.wk[0], g = f0 * r.wg[0];
    for (std::size_t i = 1; i < r.x.size(); ++i) {
        const Block s = f(c - h * r.x[i]) + f(c + h * r.x[i]);
        k += s * r.wk[i];
        if (r.wg[i] != 0.0) g += s * r.wg[i];
    }
    k *= h;
    g *= h;
    return {a, b, k, (k - g).norm()};
}

// Adaptive refinement of [0, T]; the worst panel is bisected until the summed estimate meets the budget.
template <typename F>
Block adaptive(const F& f, double T, double abs_tol, double rel_tol, const QuadratureConfig& cfg,
               QuadratureReport& rep) {
    std::priority_queue<Panel> heap;
    const int n0 = std::max(1, cfg.initial_panels);
    for (int i = 0; i < n0; ++i) heap.push(gauss_kronrod(f, T * i / n0, T * (i + 1) / n0));
    int panels = n0;
    // Running sums steer refinement; the accepted value is re-summed from the panels.
    double err = 0.0;
    Block total;
    {
        std::priority_queue<Panel> copy = heap;
        total = Block::Zero(copy.top().value.rows(), copy.top().value.cols());
        for (; !copy.empty(); copy.pop()) {
            total += copy.top().value;
            err += copy.top().err;
        }
    }
    for (;;) {
        if (err <= std::max(abs_tol, rel_tol * total.norm())) {
            Block exact = Block::Zero(total.rows(), total.cols());
            double e = 0.0;
            for (; !heap.empty(); heap.pop()) {
                exact += heap.top().value;
                e += heap.top().err;
            }
            rep.panels += panels;
            rep.error_estimate += e;
            return exact;
        }
        if (panels >= cfg.max_panels)
            throw QuadratureError("lineint: panel budget exhausted (error estimate " + std::to_string(err) + ")");
        Panel worst = heap.top();
        heap.pop();
        const double m = 0.5 * (worst.a + worst.b);
        Panel left = gauss_kronrod(f, worst.a, m), right = gauss_kronrod(f, m, worst.b);
        total += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(std::move(left));
        heap.push(std::move(right));
        ++panels;
    }
}

Matrix from_block(const AnalyticField& g, const Block& b) { return Matrix(g.rows(), g.cols(), g.level(), b); }

Eigen::VectorXd slot_direction(const AnalyticField& g, const RayFoliation& fol, int slot) {
    const Layout& l = g.layout();
    if (slot < 0 || slot >= l.arity) throw std::invalid_argument("lineint: slot out of range");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(l.dims());
    if (l.slot_dim == 1) {
        w[l.slot_begin(slot)] = 1.0;
    } else if (l.slot_dim == (1 << fol.level)) {
        w.segment(l.slot_begin(slot), l.slot_dim) = fol.v0.coeffs();
    } else {
        throw std::invalid_argument("lineint: slot is neither full nor a ray parameter");
    }
    return w;
}

const double kStencil[4] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};

}  // namespace

// --- RayFoliation -------------------------------------------------------------------

RayFoliation RayFoliation::standard(int level, int axis) {
    check_level(level);
    RayFoliation f;
    f.level = level;
    f.base = Number(level);
    f.v0 = Number::basis(level, axis);
    for (int j = 0; j < (1 << level); ++j)
        if (j != axis) f.transverse.push_back(Number::basis(level, j));
    return f;
}

RayFoliation RayFoliation::with_direction(const Number& base, const Number& v0) {
    RayFoliation f;
    f.level = base.level();
    f.base = base;
    f.v0 = v0;
    // Complete v0 greedily with generators in index order.
    Eigen::MatrixXd m(f.v0.dim(), 1);
    m.col(0) = v0.coeffs();
    for (int j = 0; j < v0.dim() && static_cast<int>(f.transverse.size()) < v0.dim() - 1; ++j) {
        Eigen::MatrixXd trial(m.rows(), m.cols() + 1);
        trial << m, Number::basis(f.level, j).coeffs();
        if (Eigen::FullPivLU<Eigen::MatrixXd>(trial).rank() == trial.cols()) {
            m = trial;
            f.transverse.push_back(Number::basis(f.level, j));
        }
    }
    f.validate();
    return f;
}

Eigen::MatrixXd RayFoliation::frame() const {
    const int n = 1 << level;
    if (static_cast<int>(transverse.size()) != n - 1) throw std::invalid_argument("foliation: need 2^r - 1 transverse directions");
    Eigen::MatrixXd m(n, n);
    m.col(0) = v0.coeffs();
    for (int j = 1; j < n; ++j) m.col(j) = transverse[j - 1].coeffs();
    return m;
}

void RayFoliation::validate() const {
    check_level(level);
    if (base.level() != level || v0.level() != level) throw std::invalid_argument("foliation: level mismatch");
    if (v0.norm() == 0.0) throw std::invalid_argument("foliation: zero ray direction");
    const Eigen::MatrixXd m = frame();
    const double det = (m.transpose() * m).determinant();
    if (!(std::abs(det) > 1e-12)) throw std::invalid_argument("foliation: frame Gram matrix is singular");
}

Eigen::VectorXd RayFoliation::dual() const {
    return frame().inverse().row(0).transpose();
}

double RayFoliation::parameter(const Number& x) const {
    return dual().dot((x - base).coeffs());
}

Number RayFoliation::point(double t, const Eigen::VectorXd& offsets) const {
    Number x = base + v0 * t;
    for (std::size_t j = 0; j < transverse.size(); ++j) x += transverse[j] * offsets[static_cast<Eigen::Index>(j)];
    return x;
}

// --- quadrature ----------------------------------------------------------------------

double tail_bound(const AnalyticField& g, const Eigen::VectorXd& u, const Eigen::VectorXd& w, double T) {
    double total = 0.0;
    for (const auto& t : g.terms()) {
        Complex along = 0.0, at = 0.0;
        for (Eigen::Index c = 0; c < w.size(); ++c) {
            along += t.rates[c] * w[c];
            at += t.rates[c] * u[c];
        }
        const double mu = -along.real();
        if (!(mu > 0.0)) return std::numeric_limits<double>::infinity();
        // |u_c + s w_c| <= m_c (1 + s)
        double pref = t.coeff.block().norm() * std::exp(at.real());
        int k = 0;
        for (Eigen::Index c = 0; c < w.size(); ++c) {
            if (!t.exps[c]) continue;
            if (w[c] == 0.0) {
                pref *= std::pow(std::abs(u[c]), t.exps[c]);
            } else {
                pref *= std::pow(std::max(std::abs(u[c]), std::abs(w[c])), t.exps[c]);
                k += t.exps[c];
            }
        }
        // int_T^inf (1+s)^k e^{-mu s} ds = k! e^{-mu T} sum_{i<=k} x^i / i! / mu^{k+1}, x = mu (1 + T)
        const double x = mu * (1.0 + T);
        double sum = 0.0, term = 1.0, fact = 1.0;
        for (int i = 0; i <= k; ++i) {
            if (i) {
                term *= x / i;
                fact *= i;
            }
            sum += term;
        }
        total += pref * fact * std::exp(-mu * T) * sum / std::pow(mu, k + 1);
    }
    return total;
}

Matrix ray_integral(const AnalyticField& g, const Eigen::VectorXd& u, const Eigen::VectorXd& w, double length,
                    const QuadratureConfig& cfg, QuadratureReport* report) {
    if (u.size() != g.dims() || w.size() != g.dims()) throw std::invalid_argument("lineint: point dimension mismatch");
    QuadratureReport rep;
    Matrix zero(g.rows(), g.cols(), g.level());
    if (g.empty() || length == 0.0) {
        if (report) *report = rep;
        return zero;
    }
    auto f = [&](double s) -> Block { return g(u + s * w).block(); };
    if (std::isinf(length)) {
        if (length < 0) throw std::invalid_argument("lineint: use a negative direction vector for -inf");
        if (!(g.decay_rate(w) < 0.0))
            throw std::invalid_argument("lineint: integrand has no decay certificate along the ray");
        double T = cfg.t_max;
        double tail = tail_bound(g, u, w, T);
        for (int i = 0; tail > 0.5 * cfg.abs_tol; ++i) {
            if (i >= cfg.max_extensions) throw QuadratureError("lineint: tail bound not reached");
            T *= 2.0;
            tail = tail_bound(g, u, w, T);
        }
        rep.tail_bound = tail;
        rep.t_max = T;
        const Block v = adaptive(f, T, 0.5 * cfg.abs_tol, cfg.rel_tol, cfg, rep);
        if (report) *report = rep;
        return from_block(g, v);
    }
    if (length < 0.0) {
        Matrix m = ray_integral(g, u, -w, -length, cfg, report);
        return -m;
    }
    rep.t_max = length;
    const Block v = adaptive(f, length, cfg.abs_tol, cfg.rel_tol, cfg, rep);
    if (report) *report = rep;
    return from_block(g, v);
}

Number slot_symbol(const DiracSpec& spec, const RayFoliation& fol) {
    if (spec.level != fol.level) throw std::invalid_argument("lineint: level mismatch");
    return fol.symbol(spec);
}

Matrix apply_inverse_symbol(const DiracSpec& spec, const Number& lambda, const Matrix& m) {
    const Number inv = cd_inv(lambda);
    return spec.conjugated ? right_mul(m, inv) : left_mul(inv, m);
}

Matrix line_integral(const DiracSpec& spec, const AnalyticField& g, const RayFoliation& fol, int slot,
                     const Eigen::VectorXd& from, const Eigen::VectorXd& to, const QuadratureConfig& cfg,
                     QuadratureReport* report) {
    const Layout& l = g.layout();
    const Eigen::VectorXd w = slot_direction(g, fol, slot);
    if (from.size() != l.dims() || to.size() != l.dims()) throw std::invalid_argument("lineint: point dimension mismatch");
    Eigen::VectorXd diff = to - from;
    const auto seg = diff.segment(l.slot_begin(slot), l.slot_dim);
    double t = 0.0;
    if (l.slot_dim == 1) {
        t = seg[0];
    } else {
        t = fol.dual().dot(seg);
        if ((seg - t * fol.v0.coeffs()).norm() > 1e-12 * (1.0 + seg.norm()))
            throw std::invalid_argument("lineint: points are not on a common ray");
    }
    diff.segment(l.slot_begin(slot), l.slot_dim).setZero();
    if (diff.norm() > 1e-14 * (1.0 + from.norm())) throw std::invalid_argument("lineint: points differ outside the slot");
    const Matrix raw = ray_integral(g, from, w, t, cfg, report);
    return apply_inverse_symbol(spec, slot_symbol(spec, fol), raw);
}

Matrix improper_integral(const DiracSpec& spec, const AnalyticField& g, const RayFoliation& fol, int slot,
                         const Eigen::VectorXd& x, int direction, const QuadratureConfig& cfg,
                         QuadratureReport* report) {
    if (direction != 1 && direction != -1) throw std::invalid_argument("lineint: direction must be +1 or -1");
    const Eigen::VectorXd w = slot_direction(g, fol, slot);
    const Matrix raw = ray_integral(g, x, direction * w, std::numeric_limits<double>::infinity(), cfg, report);
    const Matrix signed_raw = direction > 0 ? raw : -raw;
    return apply_inverse_symbol(spec, slot_symbol(spec, fol), signed_raw);
}

Matrix derivative_fd(const PointFunction& h, const Eigen::VectorXd& u, int coord, double step) {
    Matrix acc;
    bool first = true;
    for (int i = 1; i <= 4; ++i) {
        Eigen::VectorXd p = u, m = u;
        p[coord] += i * step;
        m[coord] -= i * step;
        Matrix d = (h(p) - h(m)) * (kStencil[i - 1] / step);
        if (first) {
            acc = d;
            first = false;
        } else {
            acc += d;
        }
    }
    return acc;
}

Matrix sigma_fd(const DiracOperator& d, const Layout& layout, int slot, const PointFunction& h,
                const Eigen::VectorXd& u, double step) {
    if (slot < 0 || slot >= layout.arity) throw std::invalid_argument("lineint: slot out of range");
    const bool right = d.spec().conjugated;
    if (layout.slot_dim == 1) {
        if (!d.has_symbol()) throw std::invalid_argument("lineint: ray slot needs a foliation symbol");
        const Matrix v = derivative_fd(h, u, layout.slot_begin(slot), step);
        return right ? right_mul(v, d.symbol()) : left_mul(d.symbol(), v);
    }
    if (layout.slot_dim != d.spec().dim()) throw std::invalid_argument("lineint: slot size mismatch");
    Matrix out;
    for (int k = 0; k < layout.slot_dim; ++k) {
        const Matrix v = derivative_fd(h, u, layout.slot_begin(slot) + k, step);
        const Number g = d.spec().generator(k);
        const Matrix term = right ? right_mul(v, g) : left_mul(g, v);
        if (k == 0) {
            out = term;
        } else {
            out += term;
        }
    }
    return out;
}

double fd_step(const RayFoliation& fol, const Layout& layout) {
    // On full slots the ray parameter moves |dual| times faster than a coordinate.
    return layout.slot_dim == 1 ? 1e-2 : 1e-2 / std::max(1.0, fol.dual().norm());
}

double fundamental_theorem_defect(const DiracSpec& spec, const AnalyticField& g, const RayFoliation& fol, int slot,
                                  const Eigen::VectorXd& x, const QuadratureConfig& cfg) {
    if (g.empty()) return 0.0;
    const DiracOperator d(spec, slot_symbol(spec, fol));
    const PointFunction h = [&](const Eigen::VectorXd& v) { return improper_integral(spec, g, fol, slot, v, 1, cfg); };
    return (sigma_fd(d, g.layout(), slot, h, x, fd_step(fol, g.layout())) + g(x)).norm();
}

}  // namespace cdpde
