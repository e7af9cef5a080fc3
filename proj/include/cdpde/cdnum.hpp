#pragma once

// Cayley-Dickson numbers A_r (2 <= r <= 4) and small matrices over them.
//
// Doubling convention: (a,b)(c,d) = (ac - conj(d) b, d a + b conj(c)).
// Products are evaluated through a precomputed generator table
// i_j i_k = sign(j,k) i_{index(j,k)}.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <complex>
#include <ostream>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace cdpde {

constexpr int kMinLevel = 2;
constexpr int kMaxLevel = 4;
constexpr int kMaxMatrixSize = 4;

struct GeneratorTable {
    int level = 0;
    int dim = 1;
    std::vector<signed char> sign;   // dim*dim, row j, column k
    std::vector<unsigned char> index;

    int s(int j, int k) const { return sign[j * dim + k]; }
    int idx(int j, int k) const { return index[j * dim + k]; }
};

namespace detail {

// i_j * i_k at a given level, via the doubling rule on basis elements.
inline std::pair<int, int> basis_product(int level, int j, int k) {
    if (level == 0) return {1, 0};
    const int half = 1 << (level - 1);
    const bool jh = j >= half, kh = k >= half;
    const int jl = jh ? j - half : j, kl = kh ? k - half : k;
    if (!jh && !kh) return basis_product(level - 1, jl, kl);
    if (!jh && kh) {  // (a,0)(0,d) = (0, d a)
        auto [s, i] = basis_product(level - 1, kl, jl);
        return {s, i + half};
    }
    if (jh && !kh) {  // (0,b)(c,0) = (0, b conj(c))
        auto [s, i] = basis_product(level - 1, jl, kl);
        return {kl == 0 ? s : -s, i + half};
    }
    // (0,b)(0,d) = (-conj(d) b, 0)
    auto [s, i] = basis_product(level - 1, kl, jl);
    return {kl == 0 ? -s : s, i};
}

inline GeneratorTable build_table(int level) {
    GeneratorTable t;
    t.level = level;
    t.dim = 1 << level;
    t.sign.resize(t.dim * t.dim);
    t.index.resize(t.dim * t.dim);
    for (int j = 0; j < t.dim; ++j)
        for (int k = 0; k < t.dim; ++k) {
            auto [s, i] = basis_product(level, j, k);
            t.sign[j * t.dim + k] = static_cast<signed char>(s);
            t.index[j * t.dim + k] = static_cast<unsigned char>(i);
        }
    return t;
}

template <typename T> struct is_complex : std::false_type {};
template <typename T> struct is_complex<std::complex<T>> : std::true_type {};

}  // namespace detail

inline const GeneratorTable& generator_table(int level) {
    static const std::array<GeneratorTable, kMaxLevel + 1> tables = [] {
        std::array<GeneratorTable, kMaxLevel + 1> t;
        for (int r = 0; r <= kMaxLevel; ++r) t[r] = detail::build_table(r);
        return t;
    }();
    if (level < 0 || level > kMaxLevel) throw std::invalid_argument("cdnum: level out of range");
    return tables[level];
}

// CSV export: cell (j,k) holds the signed generator index of i_j i_k, e.g. "-3".
// Row/column 0 uses "+0"/"-0" so the sign of i_0 stays visible.
inline void write_generator_table_csv(std::ostream& os, int level) {
    const auto& t = generator_table(level);
    os << "j\\k";
    for (int k = 0; k < t.dim; ++k) os << ',' << k;
    os << '\n';
    for (int j = 0; j < t.dim; ++j) {
        os << j;
        for (int k = 0; k < t.dim; ++k) os << ',' << (t.s(j, k) > 0 ? '+' : '-') << t.idx(j, k);
        os << '\n';
    }
}

inline void check_level(int level) {
    if (level < kMinLevel || level > kMaxLevel)
        throw std::invalid_argument("cdnum: level must lie in [2,4]");
}

template <typename Scalar>
class CDNumber {
public:
    using Coeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, 16, 1>;
    using Real = typename Eigen::NumTraits<Scalar>::Real;

    CDNumber() : level_(kMinLevel), c_(Coeffs::Zero(4)) {}
    explicit CDNumber(int level) : level_(level) {
        check_level(level);
        c_ = Coeffs::Zero(1 << level);
    }
    CDNumber(int level, const Coeffs& c) : level_(level), c_(c) {
        check_level(level);
        if (c.size() != (1 << level)) throw std::invalid_argument("cdnum: coefficient length != 2^r");
    }

    static CDNumber basis(int level, int j, Scalar v = Scalar(1)) {
        CDNumber a(level);
        a.c_[j] = v;
        return a;
    }
    static CDNumber real(int level, Scalar v) { return basis(level, 0, v); }

    int level() const { return level_; }
    int dim() const { return static_cast<int>(c_.size()); }
    const Coeffs& coeffs() const { return c_; }
    Coeffs& coeffs() { return c_; }
    Scalar operator[](int j) const { return c_[j]; }
    Scalar& operator[](int j) { return c_[j]; }

    CDNumber conj() const {
        CDNumber a = *this;
        a.c_.tail(dim() - 1) = -a.c_.tail(dim() - 1);
        return a;
    }
    Real norm2() const { return c_.squaredNorm(); }
    Real norm() const { return std::sqrt(norm2()); }
    bool is_real() const { return (c_.tail(dim() - 1).array() == Scalar(0)).all(); }

    CDNumber inverse() const {
        const Real n2 = norm2();
        if (n2 == Real(0)) throw std::domain_error("cdnum: inverse of zero");
        CDNumber a = conj();
        a.c_ /= n2;
        return a;
    }

    CDNumber& operator+=(const CDNumber& o) { same(o); c_ += o.c_; return *this; }
    CDNumber& operator-=(const CDNumber& o) { same(o); c_ -= o.c_; return *this; }
    CDNumber& operator*=(Scalar s) { c_ *= s; return *this; }
    CDNumber operator-() const { return CDNumber(level_, -c_); }

    friend CDNumber operator+(CDNumber a, const CDNumber& b) { return a += b; }
    friend CDNumber operator-(CDNumber a, const CDNumber& b) { return a -= b; }
    friend CDNumber operator*(CDNumber a, Scalar s) { return a *= s; }
    friend CDNumber operator*(Scalar s, CDNumber a) { return a *= s; }
    friend CDNumber operator*(const CDNumber& a, const CDNumber& b) {
        a.same(b);
        const auto& t = generator_table(a.level_);
        CDNumber out(a.level_);
        for (int j = 0; j < t.dim; ++j) {
            if (a.c_[j] == Scalar(0)) continue;
            for (int k = 0; k < t.dim; ++k) {
                const int s = t.s(j, k);
                out.c_[t.idx(j, k)] += s > 0 ? a.c_[j] * b.c_[k] : -(a.c_[j] * b.c_[k]);
            }
        }
        return out;
    }
    bool operator==(const CDNumber& o) const { return level_ == o.level_ && c_ == o.c_; }

    void same(const CDNumber& o) const {
        if (o.level_ != level_) throw std::invalid_argument("cdnum: level mismatch");
    }

private:
    int level_;
    Coeffs c_;
};

template <typename Scalar>
std::ostream& operator<<(std::ostream& os, const CDNumber<Scalar>& a) {
    os << '(';
    for (int j = 0; j < a.dim(); ++j) os << (j ? ", " : "") << a[j];
    return os << ')';
}

template <typename S> CDNumber<S> cd_mul(const CDNumber<S>& a, const CDNumber<S>& b) { return a * b; }
template <typename S> CDNumber<S> cd_conj(const CDNumber<S>& a) { return a.conj(); }
template <typename S> auto cd_norm(const CDNumber<S>& a) { return a.norm(); }
template <typename S> CDNumber<S> cd_inv(const CDNumber<S>& a) { return a.inverse(); }

template <typename S>
CDNumber<S> associator(const CDNumber<S>& a, const CDNumber<S>& b, const CDNumber<S>& c) {
    return (a * b) * c - a * (b * c);
}
template <typename S>
CDNumber<S> commutator(const CDNumber<S>& a, const CDNumber<S>& b) {
    return a * b - b * a;
}

// Matrix of x -> a x (left = true) or x -> x a acting on coefficient vectors.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> multiplication_matrix(const CDNumber<S>& a, bool left) {
    const auto& t = generator_table(a.level());
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> m =
        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>::Zero(t.dim, t.dim);
    for (int j = 0; j < t.dim; ++j)
        for (int k = 0; k < t.dim; ++k) {
            // left: a_j i_j * i_k ; right: i_k * a_j i_j
            const int row = left ? t.idx(j, k) : t.idx(k, j);
            const int s = left ? t.s(j, k) : t.s(k, j);
            m(row, k) += S(s) * a[j];
        }
    return m;
}

// n x n (n <= 4) matrix over A_r. Entries are stored column-wise in a
// dim x (rows*cols) coefficient block, entry (i,j) at column i*cols+j.
template <typename Scalar>
class CDMatrix {
public:
    using Block = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Real = typename Eigen::NumTraits<Scalar>::Real;
    using Number = CDNumber<Scalar>;

    CDMatrix() : CDMatrix(1, 1, kMinLevel) {}
    CDMatrix(int rows, int cols, int level) : rows_(rows), cols_(cols), level_(level) {
        check_level(level);
        if (rows < 1 || cols < 1 || rows > kMaxMatrixSize || cols > kMaxMatrixSize)
            throw std::invalid_argument("cdnum: matrix size must lie in [1,4]");
        data_ = Block::Zero(1 << level, rows * cols);
    }
    CDMatrix(int rows, int cols, int level, Block data) : CDMatrix(rows, cols, level) {
        if (data.rows() != data_.rows() || data.cols() != data_.cols())
            throw std::invalid_argument("cdnum: block shape mismatch");
        data_ = std::move(data);
    }

    static CDMatrix identity(int n, int level) {
        CDMatrix m(n, n, level);
        for (int i = 0; i < n; ++i) m.data_(0, i * n + i) = Scalar(1);
        return m;
    }
    // Real-valued matrix embedded along i_0.
    template <typename Derived>
    static CDMatrix from_real(const Eigen::MatrixBase<Derived>& a, int level) {
        CDMatrix m(static_cast<int>(a.rows()), static_cast<int>(a.cols()), level);
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) m.data_(0, i * a.cols() + j) = Scalar(a(i, j));
        return m;
    }
    static CDMatrix scalar(const Number& a) {
        CDMatrix m(1, 1, a.level());
        m.data_.col(0) = a.coeffs();
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int level() const { return level_; }
    int dim() const { return static_cast<int>(data_.rows()); }
    const Block& block() const { return data_; }
    Block& block() { return data_; }

    Number at(int i, int j) const { return Number(level_, data_.col(i * cols_ + j)); }
    void set(int i, int j, const Number& a) {
        if (a.level() != level_) throw std::invalid_argument("cdnum: level mismatch");
        data_.col(i * cols_ + j) = a.coeffs();
    }

    bool real_only() const { return data_.rows() == 1 || (data_.bottomRows(dim() - 1).array() == Scalar(0)).all(); }
    Real norm() const { return data_.norm(); }  // Frobenius, built from entry norms

    CDMatrix& operator+=(const CDMatrix& o) { same_shape(o); data_ += o.data_; return *this; }
    CDMatrix& operator-=(const CDMatrix& o) { same_shape(o); data_ -= o.data_; return *this; }
    CDMatrix& operator*=(Scalar s) { data_ *= s; return *this; }
    CDMatrix operator-() const { return CDMatrix(rows_, cols_, level_, -data_); }
    friend CDMatrix operator+(CDMatrix a, const CDMatrix& b) { return a += b; }
    friend CDMatrix operator-(CDMatrix a, const CDMatrix& b) { return a -= b; }
    friend CDMatrix operator*(CDMatrix a, Scalar s) { return a *= s; }
    friend CDMatrix operator*(Scalar s, CDMatrix a) { return a *= s; }
    bool operator==(const CDMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && level_ == o.level_ && data_ == o.data_;
    }

    void same_shape(const CDMatrix& o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_ || o.level_ != level_)
            throw std::invalid_argument("cdnum: shape mismatch");
    }

private:
    int rows_, cols_, level_;
    Block data_;
};

// Entrywise Cayley-Dickson product, inner sums accumulated left to right.
template <typename S>
CDMatrix<S> mat_mul(const CDMatrix<S>& a, const CDMatrix<S>& b) {
    if (a.cols() != b.rows() || a.level() != b.level()) throw std::invalid_argument("cdnum: shape mismatch");
    const auto& t = generator_table(a.level());
    CDMatrix<S> out(a.rows(), b.cols(), a.level());
    auto& o = out.block();
    const auto& A = a.block();
    const auto& B = b.block();
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < b.cols(); ++k)
            for (int j = 0; j < a.cols(); ++j) {
                const int ca = i * a.cols() + j, cb = j * b.cols() + k, co = i * b.cols() + k;
                for (int g = 0; g < t.dim; ++g) {
                    const S x = A(g, ca);
                    if (x == S(0)) continue;
                    for (int h = 0; h < t.dim; ++h) {
                        const S y = x * B(h, cb);
                        o(t.idx(g, h), co) += t.s(g, h) > 0 ? y : -y;
                    }
                }
            }
    return out;
}

template <typename S> CDMatrix<S> mat_add(const CDMatrix<S>& a, const CDMatrix<S>& b) { return a + b; }

// alpha * M (left) or M * alpha (right), entrywise.
template <typename S, typename T>
CDMatrix<S> mat_scale(const CDNumber<T>& alpha, const CDMatrix<S>& m, bool left = true) {
    if (alpha.level() != m.level()) throw std::invalid_argument("cdnum: level mismatch");
    const auto L = multiplication_matrix(alpha, left);
    CDMatrix<S> out(m.rows(), m.cols(), m.level());
    out.block() = L.template cast<S>() * m.block();
    return out;
}

template <typename S, typename T>
CDMatrix<S> left_mul(const CDNumber<T>& alpha, const CDMatrix<S>& m) { return mat_scale(alpha, m, true); }
template <typename S, typename T>
CDMatrix<S> right_mul(const CDMatrix<S>& m, const CDNumber<T>& alpha) { return mat_scale(alpha, m, false); }

}  // namespace cdpde
