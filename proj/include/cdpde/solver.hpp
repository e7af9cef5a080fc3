#pragma once

// K = F + A_x E K with A_x G(x,y) = p int_x^inf F(z,y) N_G(x,z,y) dz.
//
// Kernels are exp-polynomial fields on ray slots (x, eta) plus time parameters.
// A_x E maps that class into itself in closed form, so the Neumann series is
// summed symbolically; the point lattice only measures norms and contraction.

#include "cdpde/commutators.hpp"
#include "cdpde/lineint.hpp"
#include "cdpde/symmetry.hpp"

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdpde {

// Algebra-valued: F and K over A_r with r <= 3. Real seed: F real-valued.
enum class Regime { algebra_valued, real_seed };

struct IntegralEquationProblem {
    DiracSpec spec;
    RayFoliation fol;
    DiracOperator sigma;
    AnalyticField F;  // slots (z, y) + time
    NRule rule;
    double p = 0.0;
    Regime regime = Regime::algebra_valued;

    static IntegralEquationProblem make(int level, AnalyticField F, NRule rule, double p,
                                        Regime regime = Regime::algebra_valued);
    // Ray slots, matching shapes, E admissible, regime constraints, decaying seed. make() calls it.
    void validate() const;
    Layout kernel_layout() const { return Layout{2, 1, F.layout().n_time}; }
    HatContext hat_context() const { return {sigma, rule, p}; }
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, double p) : std::runtime_error(what), p_(p) {}
    double p() const { return p_; }

private:
    double p_;
};

// (A_x E G)(x, y) for a kernel G(x, eta) or G(x, eta, y), closed form.
AnalyticField apply_Ax(const IntegralEquationProblem& pr, const AnalyticField& G);
// Same value by adaptive quadrature of the line integral at one point (x, y, t...).
Matrix apply_Ax_quadrature(const IntegralEquationProblem& pr, const AnalyticField& G, const Eigen::VectorXd& xy,
                           const QuadratureConfig& cfg = {}, QuadratureReport* report = nullptr);
// Lambda^{-1} int_0^inf g(x, x + s, y) ds for a 3-slot integrand g(x, z, y), closed form.
AnalyticField tail_integral(const IntegralEquationProblem& pr, const AnalyticField& g3);
// G - A_x E G, with a 3-slot G first restricted to eta = y.
AnalyticField apply_I_minus_Ax(const IntegralEquationProblem& pr, const AnalyticField& G);

struct LatticeConfig {
    int points = 33;
    double extent = 8.0;  // in decay lengths of the seed along x
    std::vector<double> times{0.0};
};

// Points (x, y, t...) on [0, L]^2 x times, L = extent / decay rate of F.
std::vector<Eigen::VectorXd> kernel_lattice(const AnalyticField& F, const LatticeConfig& cfg);
// A 5 x 5 stride through the lattice (first time value only), used for residual reports.
std::vector<Eigen::VectorXd> report_points(const AnalyticField& F, const LatticeConfig& cfg, int per_axis = 5);
double lattice_sup(const AnalyticField& f, const std::vector<Eigen::VectorXd>& points);

struct NeumannConfig {
    double tol = 1e-10;
    int max_iterations = 200;
    int divergence_window = 5;
    std::size_t max_terms = 20000;
    LatticeConfig lattice;
};

struct NeumannResult {
    AnalyticField K;
    int iterations = 0;
    bool converged = false;
    std::vector<double> increments;  // lattice sup of A^m F, m = 0, 1, ...
    double observed_ratio = 0.0;     // geometric mean of the last few increment ratios
    double fixed_point_residual = 0.0;  // lattice sup of K - F - A_x E K
};

NeumannResult solve_neumann(const IntegralEquationProblem& pr, const NeumannConfig& cfg = {});
// X = S + A_x E X for an arbitrary kernel source S; the seed problem is S = F.
NeumannResult solve_with_source(const IntegralEquationProblem& pr, const AnalyticField& source,
                                const NeumannConfig& cfg = {});
// sum_{n <= N} A^n F, the partial sums written out separately from the iteration.
AnalyticField neumann_partial_sum(const IntegralEquationProblem& pr, int N);
// K^{m+1} = F + A K^m started from K^0 = F, m steps.
AnalyticField fixed_point_iterate(const IntegralEquationProblem& pr, int steps);

struct NormEstimate {
    double value = 0.0;     // largest gain over the history
    bool accepted = false;  // value <= threshold
    std::vector<double> history;  // gain of step k, normalised start
};

// Power iteration on the lattice norm from a random decaying start, `iterations` steps.
NormEstimate estimate_norm(const IntegralEquationProblem& pr, const LatticeConfig& lattice, std::mt19937_64& rng,
                           int iterations = 20, double threshold = 0.9);

// |r_k / h_k - 1| for the last Neumann step k, with r_k the observed increment ratio
// and h_k the power-iteration gain after the same number of steps.
double contraction_mismatch(const NeumannResult& r, const NormEstimate& est);

struct SlopeCheck {
    std::vector<double> ps;
    std::vector<double> slopes;  // ||K(p) - F|| / |p|
    double bound = 0.0;          // C from the norm estimate
    bool passes = false;
};

// K(p) - F = O(p): slopes agree within 1% and stay below the estimated constant.
SlopeCheck p_slope_check(const IntegralEquationProblem& pr, const LatticeConfig& lattice, std::mt19937_64& rng,
                         const std::vector<double>& ps = {1e-3, 1e-4, 1e-5});

// Pointwise |K - F - A K| with A evaluated by quadrature.
double fixed_point_residual_quadrature(const IntegralEquationProblem& pr, const AnalyticField& K,
                                       const std::vector<Eigen::VectorXd>& points);

// d/dt int_x^inf F N_K dz by central differences of quadrature, against the
// quadrature of (d_t F) N_K + F d_t N_K. Largest defect over the points.
double time_derivative_defect(const IntegralEquationProblem& pr, const AnalyticField& K,
                              const std::vector<Eigen::VectorXd>& points);

}  // namespace cdpde
