#pragma once

// Symmetry operators E = B S T_g acting on kernels over ray parameters, the
// constant-coefficient operators L they must commute with, and the rule that
// turns a kernel into the integrand factor N.

#include "cdpde/fields.hpp"

#include <random>
#include <string>
#include <vector>

namespace cdpde {

// eta -> a eta + b on one ray parameter.
struct AffineMap {
    double a = 1.0;
    double b = 0.0;

    double operator()(double eta) const { return a * eta + b; }
    AffineMap inverse() const;
    // (this o other)(eta) = this(other(eta))
    AffineMap after(const AffineMap& other) const { return {a * other.a, a * other.b + b}; }
};

// Automorphism of A_r (r <= 3) sending i1 -> u, i2 -> a (and i4 -> b for r = 3), extended to
// all generators through the multiplication table. Requires a _|_ u and, for r = 3,
// b _|_ {u, a, u a}; all unit imaginary.
Eigen::MatrixXd automorphism_from_triple(int level, const Number& u, const Number& a, const Number& b);
// Random automorphism fixing the unit imaginary u.
Eigen::MatrixXd random_automorphism_fixing(const Number& u, std::mt19937_64& rng);
// max over `pairs` random pairs of |S(xy) - S(x)S(y)|, plus |S(1) - 1|.
double automorphism_defect(const Eigen::MatrixXd& s, int level, int pairs, std::mt19937_64& rng);

class EOperator {
public:
    EOperator() = default;
    static EOperator identity(int level, int n);
    EOperator(int level, Eigen::MatrixXd b, Eigen::MatrixXd s, AffineMap g);

    int level() const { return level_; }
    int size() const { return static_cast<int>(b_.rows()); }
    const Eigen::MatrixXd& b() const { return b_; }
    const Eigen::MatrixXd& s() const { return s_; }
    const AffineMap& g() const { return g_; }

    // det B = 1, S orthogonal with S e0 = e0, multiplicativity certificate over `pairs` pairs, g invertible.
    void validate(int pairs = 1000, double tol = 1e-10) const;

    Matrix apply_value(const Matrix& m) const;   // B S(m)
    Number apply_scalar(const Number& a) const;  // S(a)
    // (E f)(..., eta, ...) = B S(f(..., g(eta), ...)) with T_g on `slot`.
    AnalyticField apply(const AnalyticField& f, int slot) const;

    // (this o other) f = this(other(f)).
    EOperator compose(const EOperator& other) const;
    EOperator inverse() const;

private:
    int level_ = 2;
    Eigen::MatrixXd b_ = Eigen::MatrixXd::Identity(1, 1);
    Eigen::MatrixXd s_ = Eigen::MatrixXd::Identity(4, 4);
    AffineMap g_;
};

// N_G(x, z, y) = E[G](x, c_z z + c_y y, y): the kernel G(x, eta[, y]) is transported by E in eta
// after eta is replaced by an affine combination of z and y.
struct NRule {
    EOperator e;
    double z_coef = 1.0;
    double y_coef = 0.0;

    AnalyticField operator()(const AnalyticField& g) const;
};

// sum of coef * sigma_x^px sigma_y^py d_t^pt, coefficients acting from the left.
struct LinearTerm {
    Number coef;
    int px = 0;
    int py = 0;
    int pt = 0;
};

struct LinearOperator {
    std::vector<LinearTerm> terms;

    // f has ray slots x (0) and y (1) and any number of time parameters.
    AnalyticField apply(const DiracOperator& sigma, const AnalyticField& f) const;
    int max_py() const;
    bool even_in_y() const;  // every sigma_y power is even
    std::string describe() const;
};

// max over probes and points of || L(E f) - E(L f) ||, E acting on the y slot.
double commutation_defect(const DiracOperator& sigma, const LinearOperator& l, const EOperator& e,
                          const std::vector<AnalyticField>& probes, const std::vector<Eigen::VectorXd>& points);

// Random decaying 2-slot ray fields and sample points used as commutation probes.
std::vector<AnalyticField> probe_fields(int level, int n, std::mt19937_64& rng, int count);
std::vector<Eigen::VectorXd> probe_points(std::mt19937_64& rng, int count);

struct GroupCheck {
    double closure = 0.0;      // defect of E1 E2 when E1, E2 commute with every L
    double inverse = 0.0;      // defect of E^{-1} plus |E^{-1} E f - f|
    double product_rule = 0.0; // |[L, E1E2] f - [L,E1] E2 f - E1 [L,E2] f|
};

// Checks over `pairs` random (E1, E2) drawn from the admissible family of the operator set.
GroupCheck group_check(const DiracOperator& sigma, const std::vector<LinearOperator>& ops, const Number& u,
                       int level, int n, int pairs, std::mt19937_64& rng);

// Random admissible E: B in SL_n(R), S fixing u, g a translation (plus reflection when allowed).
EOperator random_admissible(int level, int n, const Number& u, bool allow_reflection, std::mt19937_64& rng);

}  // namespace cdpde
