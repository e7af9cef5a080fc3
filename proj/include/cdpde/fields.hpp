#pragma once

// Closed-form matrix-valued fields over A_r and the Dirac-type operators on them.
//
// A field is a finite sum of terms Re_J[ C * u^e * exp(rho . u) ] over a real
// coordinate vector u. C is a matrix over A_r (x) C, where J is a formal unit
// commuting with every i_j; rho is a complex rate per coordinate. Real-valued
// rates with real C give the plain exponential-polynomial class, complex rates
// give oscillating terms without leaving real arithmetic at evaluation time.
//
// Coordinates are grouped into slots (the A_r arguments x, z, y, ...) followed
// by real time parameters. A slot is either a full 2^r coordinate block or a
// single ray parameter t = d.(x - y0) along a straight foliation.

#include "cdpde/cdnum.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

namespace cdpde {

using Complex = std::complex<double>;
using Number = CDNumber<double>;
using Matrix = CDMatrix<double>;
using CMatrix = CDMatrix<Complex>;

// sigma f = sum_j i_j^* (df/dz_xi(j)) psi_j ; conjugated: sum_j (df/dz_xi(j)) i_j psi_j.
struct DiracSpec {
    int level = 2;
    std::vector<int> xi;
    std::vector<double> psi;
    bool conjugated = false;

    static DiracSpec standard(int level, double psi0 = 0.0, bool conjugated = false);

    int dim() const { return 1 << level; }
    void validate() const;
    // Multiplier of d/dz_k: psi_j i_j^* (or psi_j i_j) with xi(j) = k.
    Number generator(int k) const;
    // Symbol of sigma on functions of d.z: sum_j psi_j d_xi(j) i_j^* (i_j when conjugated).
    Number ray_symbol(const Eigen::VectorXd& d) const;
};

struct Layout {
    int arity = 1;
    int slot_dim = 1;
    int n_time = 0;

    int dims() const { return arity * slot_dim + n_time; }
    int slot_begin(int s) const { return s * slot_dim; }
    int time_begin() const { return arity * slot_dim; }
    bool operator==(const Layout& o) const {
        return arity == o.arity && slot_dim == o.slot_dim && n_time == o.n_time;
    }
    bool operator!=(const Layout& o) const { return !(*this == o); }
};

struct Term {
    CMatrix coeff;
    Eigen::VectorXi exps;
    Eigen::VectorXcd rates;

    bool j_real() const;
};

class AnalyticField {
public:
    AnalyticField() = default;
    AnalyticField(int level, int rows, int cols, Layout layout);

    static AnalyticField zero_like(const AnalyticField& f) { return {f.level_, f.rows_, f.cols_, f.layout_}; }
    static AnalyticField constant(const Matrix& value, Layout layout);
    // Single term Re_J[C exp(rho . u)] (polynomial degree 0).
    static AnalyticField exponential(const CMatrix& c, const Eigen::VectorXcd& rates, Layout layout);

    int level() const { return level_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    const Layout& layout() const { return layout_; }
    int dims() const { return layout_.dims(); }
    const std::vector<Term>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    // Merges with an existing term of identical exponents and (quantized) rates.
    void add(Term t);
    // Drops terms whose coefficient is exactly zero.
    void compact();

    Matrix operator()(const Eigen::VectorXd& u) const;
    Matrix at(const Eigen::VectorXd& u) const { return (*this)(u); }

    // max over terms of Re(rho . dir); -inf for the zero field.
    double decay_rate(const Eigen::VectorXd& dir) const;

private:
    int level_ = 2, rows_ = 1, cols_ = 1;
    Layout layout_;
    std::vector<Term> terms_;
    std::map<std::vector<std::int64_t>, std::size_t> index_;
};

// --- arithmetic -----------------------------------------------------------

AnalyticField operator+(const AnalyticField& a, const AnalyticField& b);
AnalyticField operator-(const AnalyticField& a, const AnalyticField& b);
AnalyticField operator*(double s, const AnalyticField& f);
AnalyticField operator-(const AnalyticField& f);

// Pointwise matrix product a(u) * b(u), honouring left-to-right association of coefficients.
AnalyticField product(const AnalyticField& a, const AnalyticField& b);

AnalyticField left_mul(const Number& a, const AnalyticField& f);
AnalyticField right_mul(const AnalyticField& f, const Number& a);
AnalyticField left_mul(const Matrix& b, const AnalyticField& f);
// Real linear map on each entry's coefficient vector (used for algebra automorphisms).
AnalyticField map_entries(const Eigen::MatrixXd& s, const AnalyticField& f);
// Entrywise conjugation a -> a^*.
AnalyticField conj(const AnalyticField& f);

// --- calculus ----------------------------------------------------------------

AnalyticField partial(const AnalyticField& f, int coord);
// sum over all time coordinates.
AnalyticField partial_time(const AnalyticField& f);

// old coordinates u = A w + b, expressed in the new layout.
AnalyticField substitute(const AnalyticField& f, const Layout& to, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& b);
// f with slot s of `to` feeding slot i of f (slot_map[i] = s); time coordinates shared.
AnalyticField embed(const AnalyticField& f, const Layout& to, const std::vector<int>& slot_map);
// Sets slot `drop` equal to slot `keep` and removes it.
AnalyticField restrict_diagonal(const AnalyticField& f, int keep, int drop);
// Integral over coordinate `coord` on [0, inf) in closed form; the coordinate is removed
// and the rest keep their order. Requires Re(rate) < 0 for every term.
AnalyticField integrate_tail(const AnalyticField& f, int coord, const Layout& to);

// sigma acting on one slot. Full slots use the spec directly; ray slots act as
// symbol * d/dt (left) or d/dt * symbol (right, conjugated spec).
class DiracOperator {
public:
    DiracOperator() = default;
    explicit DiracOperator(DiracSpec spec);
    DiracOperator(DiracSpec spec, Number symbol);

    const DiracSpec& spec() const { return spec_; }
    const Number& symbol() const { return symbol_; }
    bool has_symbol() const { return has_symbol_; }

    AnalyticField apply(const AnalyticField& f, int slot) const;
    AnalyticField power(const AnalyticField& f, int slot, int m) const;
    // Same operator with the opposite conjugation side (symbol conjugated accordingly).
    DiracOperator hat() const;

private:
    DiracSpec spec_;
    Number symbol_;
    bool has_symbol_ = false;
};

// Point-value forms.
Matrix sigma_apply(const DiracOperator& d, const AnalyticField& f, int slot, const Eigen::VectorXd& u);
Matrix sigma_power(const DiracOperator& d, const AnalyticField& f, int slot, int m, const Eigen::VectorXd& u);

// Ordered product {f_1 ... f_k}_q with an explicit association tree.
struct AssocTree {
    // Node children: value >= 0 is an internal node index, value < 0 is leaf ~value.
    std::vector<std::array<int, 2>> nodes;  // root is the last node

    static AssocTree right_nested(int k);
    static AssocTree left_nested(int k);
    int leaves() const;
};

struct OrderedProduct {
    std::vector<AnalyticField> factors;
    AssocTree tree;

    void validate() const;
    Matrix operator()(const Eigen::VectorXd& u) const;
    AnalyticField collapse() const;  // symbolic product honouring the tree
};

// ^s sigma {f_1 ... f_k}_q : only factor s (0-based) is differentiated, generators act on the whole product.
Matrix sigma_positional(const DiracOperator& d, const OrderedProduct& prod, int factor, int slot,
                        const Eigen::VectorXd& u);

// ||(sigma f)^* - sigma_hat(f^*)|| at u (n = 1).
double conjugation_duality_defect(const DiracOperator& d, const AnalyticField& f, int slot,
                                  const Eigen::VectorXd& u);

}  // namespace cdpde
