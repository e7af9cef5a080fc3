#include "cdpde/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cdpde {

namespace {

constexpr double kRateGrid = 1e-11;

Complex dot(const Eigen::VectorXcd& rates, const Eigen::VectorXd& u) {
    Complex s = 0.0;
    for (Eigen::Index k = 0; k < rates.size(); ++k) s += rates[k] * u[k];
    return s;
}

bool all_zero(const CMatrix& c) {
    return (c.block().array() == Complex(0.0)).all();
}

CMatrix to_complex(const Matrix& m) {
    return CMatrix(m.rows(), m.cols(), m.level(), m.block().cast<Complex>());
}

// Re_J is invariant under J-conjugation; pick the representative whose first
// oscillating rate has positive imaginary part, and make non-oscillating terms real.
void normalize(Term& t) {
    for (Eigen::Index k = 0; k < t.rates.size(); ++k) {
        const double im = t.rates[k].imag();
        if (im != 0.0 && std::abs(im) <= 1e-13 * std::max(1.0, std::abs(t.rates[k])))
            t.rates[k] = Complex(t.rates[k].real(), 0.0);
    }
    Eigen::Index first = -1;
    for (Eigen::Index k = 0; k < t.rates.size(); ++k)
        if (t.rates[k].imag() != 0.0) { first = k; break; }
    if (first < 0) {
        t.coeff.block() = t.coeff.block().real().cast<Complex>();
    } else if (t.rates[first].imag() < 0.0) {
        t.coeff.block() = t.coeff.block().conjugate();
        t.rates = t.rates.conjugate();
    }
}

std::vector<std::int64_t> key_of(const Term& t) {
    std::vector<std::int64_t> key;
    key.reserve(t.exps.size() + 2 * t.rates.size());
    for (Eigen::Index k = 0; k < t.exps.size(); ++k) key.push_back(t.exps[k]);
    for (Eigen::Index k = 0; k < t.rates.size(); ++k) {
        key.push_back(std::llround(t.rates[k].real() / kRateGrid));
        key.push_back(std::llround(t.rates[k].imag() / kRateGrid));
    }
    return key;
}

void require_same(const AnalyticField& a, const AnalyticField& b) {
    if (a.level() != b.level() || a.layout() != b.layout())
        throw std::invalid_argument("fields: level or layout mismatch");
}

template <typename F>
AnalyticField map_coeffs(const AnalyticField& f, int rows, int cols, F&& fn) {
    AnalyticField out(f.level(), rows, cols, f.layout());
    for (const auto& t : f.terms()) out.add({fn(t.coeff), t.exps, t.rates});
    out.compact();
    return out;
}

using Poly = std::map<std::vector<int>, double>;

}  // namespace

// --- DiracSpec -------------------------------------------------------------------

DiracSpec DiracSpec::standard(int level, double psi0, bool conjugated) {
    DiracSpec s;
    s.level = level;
    s.xi.resize(1 << level);
    std::iota(s.xi.begin(), s.xi.end(), 0);
    s.psi.assign(1 << level, 1.0);
    s.psi[0] = psi0;
    s.conjugated = conjugated;
    return s;
}

void DiracSpec::validate() const {
    check_level(level);
    if (static_cast<int>(xi.size()) != dim() || static_cast<int>(psi.size()) != dim())
        throw std::invalid_argument("dirac: xi and psi must have length 2^r");
    std::vector<int> seen(dim(), 0);
    for (int v : xi) {
        if (v < 0 || v >= dim() || seen[v]++) throw std::invalid_argument("dirac: xi is not a permutation");
    }
    double s = 0.0;
    for (double p : psi) s += p * p;
    if (!(s > 0.0)) throw std::invalid_argument("dirac: all psi vanish");
}

Number DiracSpec::generator(int k) const {
    const auto j = static_cast<int>(std::find(xi.begin(), xi.end(), k) - xi.begin());
    if (j >= dim()) throw std::invalid_argument("dirac: coordinate out of range");
    Number g = Number::basis(level, j, psi[j]);
    return conjugated ? g : g.conj();
}

Number DiracSpec::ray_symbol(const Eigen::VectorXd& d) const {
    if (d.size() != dim()) throw std::invalid_argument("dirac: direction length != 2^r");
    Number s(level);
    for (int j = 0; j < dim(); ++j) s[j] = psi[j] * d[xi[j]];
    return conjugated ? s : s.conj();
}

// --- Term / AnalyticField -----------------------------------------------------------

bool Term::j_real() const {
    return (rates.array().imag() == 0.0).all() && (coeff.block().array().imag() == 0.0).all();
}

AnalyticField::AnalyticField(int level, int rows, int cols, Layout layout)
    : level_(level), rows_(rows), cols_(cols), layout_(layout) {
    check_level(level);
    if (layout.arity < 0 || layout.slot_dim < 1 || layout.n_time < 0)
        throw std::invalid_argument("fields: bad layout");
}

AnalyticField AnalyticField::constant(const Matrix& value, Layout layout) {
    AnalyticField f(value.level(), value.rows(), value.cols(), layout);
    f.add({to_complex(value), Eigen::VectorXi::Zero(layout.dims()), Eigen::VectorXcd::Zero(layout.dims())});
    f.compact();
    return f;
}

AnalyticField AnalyticField::exponential(const CMatrix& c, const Eigen::VectorXcd& rates, Layout layout) {
    if (rates.size() != layout.dims()) throw std::invalid_argument("fields: rate vector length");
    AnalyticField f(c.level(), c.rows(), c.cols(), layout);
    f.add({c, Eigen::VectorXi::Zero(layout.dims()), rates});
    f.compact();
    return f;
}

void AnalyticField::add(Term t) {
    if (t.exps.size() != dims() || t.rates.size() != dims())
        throw std::invalid_argument("fields: term dimension mismatch");
    if (t.coeff.rows() != rows_ || t.coeff.cols() != cols_ || t.coeff.level() != level_)
        throw std::invalid_argument("fields: term shape mismatch");
    if ((t.exps.array() < 0).any()) throw std::invalid_argument("fields: negative exponent");
    normalize(t);
    if (all_zero(t.coeff)) return;
    auto key = key_of(t);
    auto it = index_.find(key);
    if (it != index_.end()) {
        terms_[it->second].coeff += t.coeff;
        return;
    }
    index_.emplace(std::move(key), terms_.size());
    terms_.push_back(std::move(t));
}

void AnalyticField::compact() {
    std::vector<Term> kept;
    kept.reserve(terms_.size());
    for (auto& t : terms_)
        if (!all_zero(t.coeff)) kept.push_back(std::move(t));
    terms_ = std::move(kept);
    index_.clear();
    for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(key_of(terms_[i]), i);
}

Matrix AnalyticField::operator()(const Eigen::VectorXd& u) const {
    if (u.size() != dims()) throw std::invalid_argument("fields: point dimension mismatch");
    Matrix out(rows_, cols_, level_);
    auto& o = out.block();
    for (const auto& t : terms_) {
        double poly = 1.0;
        for (Eigen::Index k = 0; k < t.exps.size(); ++k)
            if (t.exps[k]) poly *= std::pow(u[k], t.exps[k]);
        const Complex s = std::exp(dot(t.rates, u)) * poly;
        o += t.coeff.block().real() * s.real() - t.coeff.block().imag() * s.imag();
    }
    return out;
}

double AnalyticField::decay_rate(const Eigen::VectorXd& dir) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& t : terms_) worst = std::max(worst, dot(t.rates, dir).real());
    return worst;
}

// --- arithmetic ----------------------------------------------------------------------

AnalyticField operator+(const AnalyticField& a, const AnalyticField& b) {
    require_same(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("fields: shape mismatch");
    AnalyticField out = a;
    for (const auto& t : b.terms()) out.add(t);
    out.compact();
    return out;
}

AnalyticField operator*(double s, const AnalyticField& f) {
    return map_coeffs(f, f.rows(), f.cols(), [s](const CMatrix& c) { return c * Complex(s); });
}

AnalyticField operator-(const AnalyticField& f) { return (-1.0) * f; }
AnalyticField operator-(const AnalyticField& a, const AnalyticField& b) { return a + (-b); }

AnalyticField product(const AnalyticField& a, const AnalyticField& b) {
    require_same(a, b);
    if (a.cols() != b.rows()) throw std::invalid_argument("fields: product shape mismatch");
    AnalyticField out(a.level(), a.rows(), b.cols(), a.layout());
    for (const auto& ta : a.terms())
        for (const auto& tb : b.terms()) {
            const Eigen::VectorXi e = ta.exps + tb.exps;
            if (ta.j_real() || tb.j_real()) {
                out.add({mat_mul(ta.coeff, tb.coeff), e, ta.rates + tb.rates});
                continue;
            }
            // Re P Re Q = (Re PQ + Re P conj(Q)) / 2
            CMatrix q = tb.coeff;
            out.add({mat_mul(ta.coeff, q) * Complex(0.5), e, ta.rates + tb.rates});
            q.block() = q.block().conjugate();
            out.add({mat_mul(ta.coeff, q) * Complex(0.5), e, ta.rates + tb.rates.conjugate()});
        }
    out.compact();
    return out;
}

AnalyticField left_mul(const Number& a, const AnalyticField& f) {
    if (a.level() != f.level()) throw std::invalid_argument("fields: level mismatch");
    return map_coeffs(f, f.rows(), f.cols(), [&a](const CMatrix& c) { return cdpde::left_mul(a, c); });
}

AnalyticField right_mul(const AnalyticField& f, const Number& a) {
    if (a.level() != f.level()) throw std::invalid_argument("fields: level mismatch");
    return map_coeffs(f, f.rows(), f.cols(), [&a](const CMatrix& c) { return cdpde::right_mul(c, a); });
}

AnalyticField left_mul(const Matrix& b, const AnalyticField& f) {
    if (b.level() != f.level() || b.cols() != f.rows()) throw std::invalid_argument("fields: shape mismatch");
    const CMatrix bc = to_complex(b);
    return map_coeffs(f, b.rows(), f.cols(), [&bc](const CMatrix& c) { return mat_mul(bc, c); });
}

AnalyticField map_entries(const Eigen::MatrixXd& s, const AnalyticField& f) {
    if (s.rows() != (1 << f.level()) || s.cols() != s.rows())
        throw std::invalid_argument("fields: entry map must be 2^r x 2^r");
    const Eigen::MatrixXcd sc = s.cast<Complex>();
    return map_coeffs(f, f.rows(), f.cols(), [&](const CMatrix& c) {
        return CMatrix(c.rows(), c.cols(), c.level(), sc * c.block());
    });
}

AnalyticField conj(const AnalyticField& f) {
    return map_coeffs(f, f.rows(), f.cols(), [](const CMatrix& c) {
        CMatrix o = c;
        o.block().bottomRows(o.dim() - 1) *= Complex(-1.0);
        return o;
    });
}

// --- calculus -------------------------------------------------------------------------

AnalyticField partial(const AnalyticField& f, int coord) {
    if (coord < 0 || coord >= f.dims()) throw std::invalid_argument("fields: coordinate out of range");
    AnalyticField out = AnalyticField::zero_like(f);
    for (const auto& t : f.terms()) {
        if (t.exps[coord] > 0) {
            Term d = t;
            d.coeff *= Complex(t.exps[coord]);
            d.exps[coord] -= 1;
            out.add(std::move(d));
        }
        if (t.rates[coord] != Complex(0.0)) {
            Term d = t;
            d.coeff *= t.rates[coord];
            out.add(std::move(d));
        }
    }
    out.compact();
    return out;
}

AnalyticField partial_time(const AnalyticField& f) {
    AnalyticField out = AnalyticField::zero_like(f);
    for (int k = 0; k < f.layout().n_time; ++k) out = out + partial(f, f.layout().time_begin() + k);
    return out;
}

AnalyticField substitute(const AnalyticField& f, const Layout& to, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& b) {
    if (A.rows() != f.dims() || A.cols() != to.dims() || b.size() != f.dims())
        throw std::invalid_argument("fields: substitution shape mismatch");
    AnalyticField out(f.level(), f.rows(), f.cols(), to);
    const int n = to.dims();
    for (const auto& t : f.terms()) {
        Eigen::VectorXcd rates = Eigen::VectorXcd::Zero(n);
        for (int j = 0; j < n; ++j)
            for (Eigen::Index k = 0; k < t.rates.size(); ++k) rates[j] += t.rates[k] * A(k, j);
        const Complex shift = std::exp(dot(t.rates, b));

        Poly poly{{std::vector<int>(n, 0), 1.0}};
        for (Eigen::Index k = 0; k < t.exps.size(); ++k)
            for (int rep = 0; rep < t.exps[k]; ++rep) {
                Poly next;
                for (const auto& [mono, c] : poly) {
                    for (int j = 0; j < n; ++j) {
                        if (A(k, j) == 0.0) continue;
                        auto m = mono;
                        ++m[j];
                        next[m] += c * A(k, j);
                    }
                    if (b[k] != 0.0) next[mono] += c * b[k];
                }
                poly = std::move(next);
            }
        for (const auto& [mono, c] : poly) {
            if (c == 0.0) continue;
            Term nt{t.coeff * (shift * c), Eigen::Map<const Eigen::VectorXi>(mono.data(), n), rates};
            out.add(std::move(nt));
        }
    }
    out.compact();
    return out;
}

AnalyticField embed(const AnalyticField& f, const Layout& to, const std::vector<int>& slot_map) {
    const Layout& from = f.layout();
    if (from.slot_dim != to.slot_dim || from.n_time != to.n_time ||
        static_cast<int>(slot_map.size()) != from.arity)
        throw std::invalid_argument("fields: embed layout mismatch");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(from.dims(), to.dims());
    for (int i = 0; i < from.arity; ++i) {
        if (slot_map[i] < 0 || slot_map[i] >= to.arity) throw std::invalid_argument("fields: embed slot");
        for (int c = 0; c < from.slot_dim; ++c) A(from.slot_begin(i) + c, to.slot_begin(slot_map[i]) + c) = 1.0;
    }
    for (int k = 0; k < from.n_time; ++k) A(from.time_begin() + k, to.time_begin() + k) = 1.0;
    return substitute(f, to, A, Eigen::VectorXd::Zero(from.dims()));
}

AnalyticField restrict_diagonal(const AnalyticField& f, int keep, int drop) {
    const Layout& from = f.layout();
    if (keep == drop || keep < 0 || drop < 0 || keep >= from.arity || drop >= from.arity)
        throw std::invalid_argument("fields: bad diagonal restriction");
    Layout to = from;
    to.arity -= 1;
    std::vector<int> slot_map(from.arity);
    for (int i = 0, j = 0; i < from.arity; ++i)
        if (i != drop) slot_map[i] = j++;
    slot_map[drop] = slot_map[keep];
    return embed(f, to, slot_map);
}

AnalyticField integrate_tail(const AnalyticField& f, int coord, const Layout& to) {
    if (coord < 0 || coord >= f.dims() || to.dims() != f.dims() - 1)
        throw std::invalid_argument("fields: tail integration layout mismatch");
    AnalyticField out(f.level(), f.rows(), f.cols(), to);
    const int n = f.dims();
    for (const auto& t : f.terms()) {
        const Complex a = t.rates[coord];
        if (!(a.real() < 0.0)) throw std::domain_error("fields: tail integral of a non-decaying term");
        const int k = t.exps[coord];
        Complex value = 1.0 / (-a);
        for (int i = 1; i <= k; ++i) value *= double(i) / (-a);
        Term nt;
        nt.coeff = t.coeff * value;
        nt.exps.resize(n - 1);
        nt.rates.resize(n - 1);
        for (int i = 0, j = 0; i < n; ++i) {
            if (i == coord) continue;
            nt.exps[j] = t.exps[i];
            nt.rates[j] = t.rates[i];
            ++j;
        }
        out.add(std::move(nt));
    }
    out.compact();
    return out;
}

// --- DiracOperator --------------------------------------------------------------------------

DiracOperator::DiracOperator(DiracSpec spec) : spec_(std::move(spec)), symbol_(spec_.level) {
    spec_.validate();
}

DiracOperator::DiracOperator(DiracSpec spec, Number symbol)
    : spec_(std::move(spec)), symbol_(std::move(symbol)), has_symbol_(true) {
    spec_.validate();
    if (symbol_.level() != spec_.level) throw std::invalid_argument("dirac: symbol level mismatch");
}

AnalyticField DiracOperator::apply(const AnalyticField& f, int slot) const {
    const Layout& l = f.layout();
    if (slot < 0 || slot >= l.arity) throw std::invalid_argument("dirac: slot out of range");
    if (f.level() != spec_.level) throw std::invalid_argument("dirac: level mismatch");
    if (l.slot_dim == spec_.dim()) {
        AnalyticField out = AnalyticField::zero_like(f);
        for (int k = 0; k < l.slot_dim; ++k) {
            const Number g = spec_.generator(k);
            const AnalyticField d = partial(f, l.slot_begin(slot) + k);
            out = out + (spec_.conjugated ? right_mul(d, g) : left_mul(g, d));
        }
        return out;
    }
    if (l.slot_dim != 1) throw std::invalid_argument("dirac: slot is neither full nor a ray parameter");
    if (!has_symbol_) throw std::invalid_argument("dirac: ray slot needs a foliation symbol");
    const AnalyticField d = partial(f, l.slot_begin(slot));
    return spec_.conjugated ? right_mul(d, symbol_) : left_mul(symbol_, d);
}

AnalyticField DiracOperator::power(const AnalyticField& f, int slot, int m) const {
    if (m < 0) throw std::invalid_argument("dirac: negative power");
    AnalyticField out = f;
    for (int i = 0; i < m; ++i) out = apply(out, slot);
    return out;
}

DiracOperator DiracOperator::hat() const {
    DiracSpec s = spec_;
    s.conjugated = !s.conjugated;
    if (!has_symbol_) return DiracOperator(s);
    return DiracOperator(s, symbol_.conj());
}

Matrix sigma_apply(const DiracOperator& d, const AnalyticField& f, int slot, const Eigen::VectorXd& u) {
    return d.apply(f, slot)(u);
}

Matrix sigma_power(const DiracOperator& d, const AnalyticField& f, int slot, int m, const Eigen::VectorXd& u) {
    return d.power(f, slot, m)(u);
}

// --- ordered products --------------------------------------------------------------------------

AssocTree AssocTree::right_nested(int k) {
    AssocTree t;
    if (k < 2) return t;
    // (f_{k-2} f_{k-1}) first, then f_j (...) outward.
    t.nodes.push_back({~(k - 2), ~(k - 1)});
    for (int j = k - 3; j >= 0; --j) t.nodes.push_back({~j, static_cast<int>(t.nodes.size()) - 1});
    return t;
}

AssocTree AssocTree::left_nested(int k) {
    AssocTree t;
    if (k < 2) return t;
    t.nodes.push_back({~0, ~1});
    for (int j = 2; j < k; ++j) t.nodes.push_back({static_cast<int>(t.nodes.size()) - 1, ~j});
    return t;
}

int AssocTree::leaves() const {
    if (nodes.empty()) return 1;
    int n = 0;
    for (const auto& nd : nodes)
        for (int c : nd) n += c < 0;
    return n;
}

void OrderedProduct::validate() const {
    if (factors.empty()) throw std::invalid_argument("product: no factors");
    if (tree.leaves() != static_cast<int>(factors.size()))
        throw std::invalid_argument("product: tree leaf count != factor count");
    std::vector<int> seen(factors.size(), 0);
    for (const auto& nd : tree.nodes)
        for (int c : nd) {
            if (c < 0 && (~c >= static_cast<int>(factors.size()) || seen[~c]++))
                throw std::invalid_argument("product: bad leaf index");
        }
}

namespace {

template <typename Leaf, typename Mul>
auto fold_tree(const AssocTree& tree, Leaf&& leaf, Mul&& mul) {
    using V = decltype(leaf(0));
    if (tree.nodes.empty()) return leaf(0);
    std::vector<V> vals;
    vals.reserve(tree.nodes.size());
    auto get = [&](int c) { return c < 0 ? leaf(~c) : vals[c]; };
    for (const auto& nd : tree.nodes) vals.push_back(mul(get(nd[0]), get(nd[1])));
    return vals.back();
}

}  // namespace

Matrix OrderedProduct::operator()(const Eigen::VectorXd& u) const {
    validate();
    return fold_tree(tree, [&](int i) { return factors[i](u); },
                     [](const Matrix& a, const Matrix& b) { return mat_mul(a, b); });
}

AnalyticField OrderedProduct::collapse() const {
    validate();
    return fold_tree(tree, [&](int i) { return factors[i]; },
                     [](const AnalyticField& a, const AnalyticField& b) { return product(a, b); });
}

Matrix sigma_positional(const DiracOperator& d, const OrderedProduct& prod, int factor, int slot,
                        const Eigen::VectorXd& u) {
    prod.validate();
    if (factor < 0 || factor >= static_cast<int>(prod.factors.size()))
        throw std::invalid_argument("product: factor index out of range");
    const AnalyticField& f = prod.factors[factor];
    const Layout& l = f.layout();
    if (slot < 0 || slot >= l.arity) throw std::invalid_argument("product: slot out of range");
    auto with = [&](const AnalyticField& df) {
        return fold_tree(prod.tree, [&](int i) { return i == factor ? df(u) : prod.factors[i](u); },
                         [](const Matrix& a, const Matrix& b) { return mat_mul(a, b); });
    };
    const bool right = d.spec().conjugated;
    Matrix out(f.rows(), prod(u).cols(), f.level());
    if (l.slot_dim == d.spec().dim()) {
        for (int k = 0; k < l.slot_dim; ++k) {
            const Matrix v = with(partial(f, l.slot_begin(slot) + k));
            const Number g = d.spec().generator(k);
            out += right ? right_mul(v, g) : left_mul(g, v);
        }
        return out;
    }
    if (!d.has_symbol()) throw std::invalid_argument("product: ray slot needs a foliation symbol");
    const Matrix v = with(partial(f, l.slot_begin(slot)));
    return right ? right_mul(v, d.symbol()) : left_mul(d.symbol(), v);
}

double conjugation_duality_defect(const DiracOperator& d, const AnalyticField& f, int slot,
                                  const Eigen::VectorXd& u) {
    if (f.rows() != 1 || f.cols() != 1) throw std::invalid_argument("duality: needs n = 1");
    const Number lhs = Number(f.level(), d.apply(f, slot)(u).block().col(0)).conj();
    const Number rhs(f.level(), d.hat().apply(conj(f), slot)(u).block().col(0));
    return (lhs - rhs).norm();
}

}  // namespace cdpde
