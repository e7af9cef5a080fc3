#pragma once

// Straight-ray foliations and the sigma-inverting line integral along them.
//
// Along gamma(t) = x + t v0 a field that depends on x only through the ray
// parameter satisfies sigma = Lambda d/dt, so the anti-derivative is
// Lambda^{-1} times the plain 1-D integral (Lambda on the right for sigma-hat).

#include "cdpde/fields.hpp"

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace cdpde {

struct RayFoliation {
    int level = 2;
    Number base;
    Number v0;
    std::vector<Number> transverse;

    // v0 = i_axis, transverse directions the remaining generators in index order.
    static RayFoliation standard(int level, int axis = 0);
    static RayFoliation with_direction(const Number& base, const Number& v0);

    void validate() const;
    Eigen::MatrixXd frame() const;  // columns v0, v1, ...
    // Covector d with d.v0 = 1 and d.vj = 0, so t(x) = d.(x - base).
    Eigen::VectorXd dual() const;
    double parameter(const Number& x) const;
    Number point(double t, const Eigen::VectorXd& offsets) const;
    Number symbol(const DiracSpec& spec) const { return spec.ray_symbol(dual()); }
};

struct QuadratureConfig {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    int initial_panels = 8;
    int max_panels = 20000;
    double t_max = 8.0;
    int max_extensions = 40;
};

struct QuadratureReport {
    int panels = 0;
    double error_estimate = 0.0;
    double tail_bound = 0.0;
    double t_max = 0.0;
};

class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// int_0^length g(u + s w) ds with adaptive Gauss-Kronrod panels; length may be
// +infinity, in which case the decay of g along w must be strictly negative
// and the tail beyond the truncation point is bounded in closed form.
Matrix ray_integral(const AnalyticField& g, const Eigen::VectorXd& u, const Eigen::VectorXd& w, double length,
                    const QuadratureConfig& cfg = {}, QuadratureReport* report = nullptr);

// Closed-form bound on |int_T^inf g(u + s w) ds| from the term majorants.
double tail_bound(const AnalyticField& g, const Eigen::VectorXd& u, const Eigen::VectorXd& w, double T);

// Ray symbol of `spec` for the given slot: the foliation symbol on ray slots
// and on full slots alike.
Number slot_symbol(const DiracSpec& spec, const RayFoliation& fol);

// Applies Lambda^{-1} on the side matching the operator.
Matrix apply_inverse_symbol(const DiracSpec& spec, const Number& lambda, const Matrix& m);

// int_{from}^{to} g along the ray of `fol` in `slot`; both points must lie on one ray.
Matrix line_integral(const DiracSpec& spec, const AnalyticField& g, const RayFoliation& fol, int slot,
                     const Eigen::VectorXd& from, const Eigen::VectorXd& to, const QuadratureConfig& cfg = {},
                     QuadratureReport* report = nullptr);

// int_x^{+inf} (direction = +1) or int_x^{-inf} (direction = -1).
Matrix improper_integral(const DiracSpec& spec, const AnalyticField& g, const RayFoliation& fol, int slot,
                         const Eigen::VectorXd& x, int direction, const QuadratureConfig& cfg = {},
                         QuadratureReport* report = nullptr);

// sigma applied to an arbitrary point function by 8th-order central differences in the slot coordinates.
using PointFunction = std::function<Matrix(const Eigen::VectorXd&)>;
Matrix sigma_fd(const DiracOperator& d, const Layout& layout, int slot, const PointFunction& h,
                const Eigen::VectorXd& u, double step = 1e-2);
// Plain derivative along coordinate `coord`, same stencil.
Matrix derivative_fd(const PointFunction& h, const Eigen::VectorXd& u, int coord, double step = 1e-2);

// Difference step matched to the ray parameter's scale in the slot coordinates.
double fd_step(const RayFoliation& fol, const Layout& layout);

// || sigma_x int_x^inf g + g(x) ||, sigma by finite differences of quadrature values.
// On full slots g must depend on x only through the ray parameter.
double fundamental_theorem_defect(const DiracSpec& spec, const AnalyticField& g, const RayFoliation& fol, int slot,
                                  const Eigen::VectorXd& x, const QuadratureConfig& cfg = {});

}  // namespace cdpde
