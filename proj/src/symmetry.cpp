#include "cdpde/symmetry.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cdpde {

namespace {

Number imaginary_part(const Number& a) {
    Number b = a;
    b[0] = 0.0;
    return b;
}

// Removes the components of v along each (orthonormal) direction and normalizes.
Number orthonormalize(Number v, const std::vector<Number>& against) {
    for (const Number& w : against) v = v - w * v.coeffs().dot(w.coeffs());
    const double n = v.norm();
    if (n < 1e-8) throw std::invalid_argument("symmetry: degenerate direction");
    return v * (1.0 / n);
}

Number random_imaginary(int level, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Number a(level);
    for (int j = 1; j < a.dim(); ++j) a[j] = g(rng);
    return a;
}

// First unit imaginary in generator order that survives orthogonalization.
Number reference_direction(int level, const std::vector<Number>& against) {
    const int n = 1 << level;
    for (int j = 1; j < n; ++j) {
        Number v = Number::basis(level, j);
        for (const Number& w : against) v = v - w * v.coeffs().dot(w.coeffs());
        if (v.norm() > 1e-6) return v * (1.0 / v.norm());
    }
    throw std::invalid_argument("symmetry: no reference direction");
}

Number random_unit_imaginary(int level, std::mt19937_64& rng) {
    const Number a = random_imaginary(level, rng);
    return a * (1.0 / a.norm());
}

double max_diff(const AnalyticField& a, const AnalyticField& b, const std::vector<Eigen::VectorXd>& points) {
    double worst = 0.0;
    for (const auto& p : points) worst = std::max(worst, (a(p) - b(p)).norm());
    return worst;
}

}  // namespace

std::vector<AnalyticField> probe_fields(int level, int n, std::mt19937_64& rng, int count) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Layout layout{2, 1, 0};
    std::vector<AnalyticField> out;
    for (int p = 0; p < count; ++p) {
        AnalyticField f(level, n, n, layout);
        for (int k = 0; k < 2; ++k) {
            Term t;
            t.coeff = CMatrix(n, n, level);
            for (Eigen::Index j = 0; j < t.coeff.block().cols(); ++j)
                for (Eigen::Index i = 0; i < t.coeff.block().rows(); ++i)
                    t.coeff.block()(i, j) = Complex(u(rng), k == 1 ? u(rng) : 0.0);
            t.exps = Eigen::VectorXi::Zero(2);
            t.exps[k] = 1;
            t.rates = Eigen::VectorXcd(2);
            t.rates[0] = Complex(-1.0 + 0.3 * u(rng), k == 1 ? u(rng) : 0.0);
            t.rates[1] = Complex(-1.0 + 0.3 * u(rng), k == 1 ? u(rng) : 0.0);
            f.add(t);
        }
        out.push_back(f);
    }
    return out;
}

std::vector<Eigen::VectorXd> probe_points(std::mt19937_64& rng, int count) {
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < count; ++i) pts.push_back(Eigen::Vector2d(u(rng), u(rng)));
    return pts;
}

AffineMap AffineMap::inverse() const {
    if (a == 0.0) throw std::invalid_argument("symmetry: affine map is not invertible");
    return {1.0 / a, -b / a};
}

Eigen::MatrixXd automorphism_from_triple(int level, const Number& u, const Number& a, const Number& b) {
    if (level < 2 || level > 3) throw std::invalid_argument("symmetry: automorphisms are built for r = 2, 3");
    const int n = 1 << level;
    std::vector<Number> img(n, Number(level));
    img[0] = Number::real(level, 1.0);
    img[1] = u;
    img[2] = a;
    if (level == 3) img[4] = b;
    for (int j = 3; j < n; ++j) {
        if ((j & (j - 1)) == 0) continue;
        int h = 1;
        while (h * 2 <= j) h *= 2;
        const int low = j - h;
        // i_low i_h = s i_j
        const double s = (Number::basis(level, low) * Number::basis(level, h))[j];
        img[j] = (img[low] * img[h]) * s;
    }
    Eigen::MatrixXd S(n, n);
    for (int j = 0; j < n; ++j) S.col(j) = img[j].coeffs();
    return S;
}

Eigen::MatrixXd random_automorphism_fixing(const Number& u_in, std::mt19937_64& rng) {
    const int level = u_in.level();
    const int n = 1 << level;
    if (level == 4) return Eigen::MatrixXd::Identity(n, n);
    const Number u = orthonormalize(imaginary_part(u_in), {});
    const Number a = orthonormalize(random_imaginary(level, rng), {u});
    const Number a0 = reference_direction(level, {Number::real(level, 1.0), u});
    Number b(level), b0(level);
    if (level == 3) {
        const Number ua = u * a, ua0 = u * a0;
        b = orthonormalize(random_imaginary(level, rng), {u, a, ua});
        b0 = reference_direction(level, {Number::real(level, 1.0), u, a0, ua0});
    }
    const Eigen::MatrixXd T = automorphism_from_triple(level, u, a, b);
    const Eigen::MatrixXd T0 = automorphism_from_triple(level, u, a0, b0);
    return T * T0.transpose();
}

double automorphism_defect(const Eigen::MatrixXd& s, int level, int pairs, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    const int n = 1 << level;
    double worst = (s.col(0) - Eigen::VectorXd::Unit(n, 0)).norm();
    for (int k = 0; k < pairs; ++k) {
        Number x(level), y(level);
        for (int j = 0; j < n; ++j) {
            x[j] = g(rng);
            y[j] = g(rng);
        }
        const Number sx(level, s * x.coeffs()), sy(level, s * y.coeffs());
        const Eigen::VectorXd lhs = s * (x * y).coeffs();
        worst = std::max(worst, (lhs - (sx * sy).coeffs()).norm());
    }
    return worst;
}

EOperator EOperator::identity(int level, int n) {
    const int d = 1 << level;
    return EOperator(level, Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(d, d), {});
}

EOperator::EOperator(int level, Eigen::MatrixXd b, Eigen::MatrixXd s, AffineMap g)
    : level_(level), b_(std::move(b)), s_(std::move(s)), g_(g) {
    check_level(level);
    if (b_.rows() != b_.cols() || b_.rows() < 1 || b_.rows() > kMaxMatrixSize)
        throw std::invalid_argument("symmetry: B must be square of size 1..4");
    if (s_.rows() != (1 << level) || s_.cols() != s_.rows())
        throw std::invalid_argument("symmetry: S must be 2^r x 2^r");
}

void EOperator::validate(int pairs, double tol) const {
    if (std::abs(b_.determinant() - 1.0) > tol) throw std::invalid_argument("symmetry: det B != 1");
    const int d = static_cast<int>(s_.rows());
    if ((s_.transpose() * s_ - Eigen::MatrixXd::Identity(d, d)).norm() > tol)
        throw std::invalid_argument("symmetry: S is not orthogonal");
    std::mt19937_64 rng(0x5eed);
    if (automorphism_defect(s_, level_, pairs, rng) > tol * 10)
        throw std::invalid_argument("symmetry: S is not an algebra automorphism");
    if (g_.a == 0.0) throw std::invalid_argument("symmetry: g is not invertible");
}

Number EOperator::apply_scalar(const Number& a) const { return Number(level_, s_ * a.coeffs()); }

Matrix EOperator::apply_value(const Matrix& m) const {
    const Matrix sm(m.rows(), m.cols(), m.level(), s_ * m.block());
    return mat_mul(Matrix::from_real(b_, level_), sm);
}

AnalyticField EOperator::apply(const AnalyticField& f, int slot) const {
    const Layout& l = f.layout();
    if (slot < 0 || slot >= l.arity || l.slot_dim != 1)
        throw std::invalid_argument("symmetry: E acts on a ray slot");
    if (f.rows() != size()) throw std::invalid_argument("symmetry: B size does not match the field");
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(l.dims(), l.dims());
    Eigen::VectorXd c = Eigen::VectorXd::Zero(l.dims());
    A(slot, slot) = g_.a;
    c[slot] = g_.b;
    const AnalyticField moved = (g_.a == 1.0 && g_.b == 0.0) ? f : substitute(f, l, A, c);
    return left_mul(Matrix::from_real(b_, level_), map_entries(s_, moved));
}

EOperator EOperator::compose(const EOperator& o) const {
    if (o.level_ != level_ || o.size() != size()) throw std::invalid_argument("symmetry: incompatible operators");
    return EOperator(level_, b_ * o.b_, s_ * o.s_, o.g_.after(g_));
}

EOperator EOperator::inverse() const {
    return EOperator(level_, b_.inverse(), s_.transpose(), g_.inverse());
}

AnalyticField NRule::operator()(const AnalyticField& g) const {
    const Layout& l = g.layout();
    if (l.slot_dim != 1 || (l.arity != 2 && l.arity != 3))
        throw std::invalid_argument("symmetry: N is built from a 2- or 3-slot ray kernel");
    const Layout to{3, 1, l.n_time};
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(l.dims(), to.dims());
    A(0, 0) = 1.0;
    A(1, 1) = z_coef;
    A(1, 2) = y_coef;
    if (l.arity == 3) A(2, 2) = 1.0;
    for (int k = 0; k < l.n_time; ++k) A(l.time_begin() + k, to.time_begin() + k) = 1.0;
    return substitute(e.apply(g, 1), to, A, Eigen::VectorXd::Zero(l.dims()));
}

AnalyticField LinearOperator::apply(const DiracOperator& sigma, const AnalyticField& f) const {
    AnalyticField out = AnalyticField::zero_like(f);
    for (const LinearTerm& t : terms) {
        AnalyticField g = sigma.power(sigma.power(f, 0, t.px), 1, t.py);
        for (int k = 0; k < t.pt; ++k) g = partial_time(g);
        out = out + (t.coef.is_real() ? t.coef[0] * g : left_mul(t.coef, g));
    }
    return out;
}

int LinearOperator::max_py() const {
    int m = 0;
    for (const auto& t : terms) m = std::max(m, t.py);
    return m;
}

bool LinearOperator::even_in_y() const {
    for (const auto& t : terms)
        if (t.py % 2 != 0) return false;
    return true;
}

std::string LinearOperator::describe() const {
    std::ostringstream os;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& t = terms[k];
        if (k) os << " + ";
        os << "(" << t.coef.coeffs().transpose() << ")";
        if (t.px) os << " sx^" << t.px;
        if (t.py) os << " sy^" << t.py;
        if (t.pt) os << " dt^" << t.pt;
    }
    return os.str();
}

double commutation_defect(const DiracOperator& sigma, const LinearOperator& l, const EOperator& e,
                          const std::vector<AnalyticField>& probes, const std::vector<Eigen::VectorXd>& points) {
    double worst = 0.0;
    for (const auto& f : probes) {
        const AnalyticField lhs = l.apply(sigma, e.apply(f, 1));
        const AnalyticField rhs = e.apply(l.apply(sigma, f), 1);
        for (const auto& p : points) worst = std::max(worst, (lhs(p) - rhs(p)).norm());
    }
    return worst;
}

EOperator random_admissible(int level, int n, const Number& u, bool allow_reflection, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) B(i, j) += 0.3 * un(rng);
    if (B.determinant() < 0) B.row(0) *= -1.0;
    B /= std::pow(B.determinant(), 1.0 / n);
    AffineMap g{1.0, 0.5 * un(rng)};
    if (allow_reflection && un(rng) < 0) g.a = -1.0;
    return EOperator(level, B, random_automorphism_fixing(u, rng), g);
}

GroupCheck group_check(const DiracOperator& sigma, const std::vector<LinearOperator>& ops, const Number& u,
                       int level, int n, int pairs, std::mt19937_64& rng) {
    bool reflect = true;
    for (const auto& l : ops) reflect = reflect && l.even_in_y();
    const auto probes = probe_fields(level, n, rng, 2);
    const auto points = probe_points(rng, 6);
    GroupCheck out;
    for (int k = 0; k < pairs; ++k) {
        const EOperator e1 = random_admissible(level, n, u, reflect, rng);
        const EOperator e2 = random_admissible(level, n, u, reflect, rng);
        const EOperator e12 = e1.compose(e2), e1i = e1.inverse();
        for (const auto& l : ops) {
            out.closure = std::max(out.closure, commutation_defect(sigma, l, e12, probes, points));
            out.inverse = std::max(out.inverse, commutation_defect(sigma, l, e1i, probes, points));
        }
        for (const auto& f : probes) out.inverse = std::max(out.inverse, max_diff(e1i.apply(e1.apply(f, 1), 1), f, points));

        // The product rule is an identity for arbitrary E, so it is probed off the admissible family.
        const EOperator f1(level, e1.b(), random_automorphism_fixing(random_unit_imaginary(level, rng), rng),
                           {-1.0, e1.g().b});
        const EOperator f12 = f1.compose(e2);
        for (const auto& l : ops)
            for (const auto& f : probes) {
                auto bracket = [&](const EOperator& e, const AnalyticField& h) {
                    return l.apply(sigma, e.apply(h, 1)) - e.apply(l.apply(sigma, h), 1);
                };
                const AnalyticField lhs = bracket(f12, f);
                const AnalyticField rhs = bracket(f1, e2.apply(f, 1)) + f1.apply(bracket(e2, f), 1);
                out.product_rule = std::max(out.product_rule, max_diff(lhs, rhs, points));
            }
    }
    return out;
}

}  // namespace cdpde
