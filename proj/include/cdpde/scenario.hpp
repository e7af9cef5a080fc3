#pragma once

// Example PDE systems solved by dressing: linear constraints on the seed F,
// the operators whose kernel equations are checked, and the residual evaluators.

#include "cdpde/solver.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cdpde {

// How the nonlinear terms M(K) of a kernel equation are assembled.
//   generic     L = sum p_l sigma_x^l + q_l sigma_y^l (+ d_t): M = p sum (p_l Ahat_l + (-1)^l q_l Bhat_l)
//   pide        generic plus the integral term int K(z,y) sigma_y N(x,z,y) dz
//   multiplier  N carries exponential multipliers f(z) g(x); residual of the shifted operator
//   shifted     N = E K(x, a y + b z), L = -sigma_x^2 - s sigma_y^2
//   kdv         generic kernel equations plus the reduced equation for v = 2 sigma K(x,x)
//   newtonian   generic kernel equation plus the literal kernel and diagonal equations
enum class ResidualKind { generic, pide, multiplier, shifted, kdv, newtonian };

const char* kind_name(ResidualKind k);
ResidualKind kind_from_name(const std::string& s);

struct SeedTermSpec {
    Complex amplitude{1.0, 0.0};
    Eigen::MatrixXd shape;             // real n x n, identity when empty
    std::optional<Complex> x_rate;
    std::optional<Complex> y_rate;
    std::optional<double> y_per_x;     // rho_y = c rho_x when x_rate is solved for
    int root = 0;                      // index among admissible roots, sorted by (Re, Im)
    bool real = false;                 // plain real exponential instead of the idempotent form
};

struct Scenario {
    std::string name;
    std::string title;
    int level = 2;
    int n = 1;
    int n_time = 0;
    double p = 0.05;
    Regime regime = Regime::algebra_valued;
    ResidualKind kind = ResidualKind::generic;

    std::vector<LinearOperator> constraints;  // L_j F = 0
    std::vector<std::string> equation_labels;
    std::vector<LinearOperator> equations;    // kernel equations checked on K

    Eigen::MatrixXd b;  // empty: identity
    unsigned s_seed = 0;  // 0: S = identity, else a seeded automorphism fixing the symbol axis
    AffineMap g;
    double z_coef = 1.0;
    double y_coef = 0.0;

    std::vector<SeedTermSpec> seed;

    // multiplier f(z) = c1 exp(lambda z), g(x) = c2 exp(mu x)
    double lambda = 0.0, mu = 0.0, c1 = 1.0, c2 = 1.0;
    // newtonian pair coefficient
    double q = 2.0;
    // kdv continuation ladder ending at the p = 1 attempt
    std::vector<double> continuation;

    LatticeConfig lattice;
    double ceiling = 1e-4;

    EOperator e_operator() const;
    NRule n_rule() const { return {e_operator(), z_coef, y_coef}; }
    void validate() const;
};

Scenario load_scenario(const std::string& path);

// Term lists in the config format; 17 significant digits, so reading back is bit-exact.
std::string field_to_yaml(const AnalyticField& f);
AnalyticField field_from_yaml(const std::string& text);
Scenario parse_scenario(const std::string& yaml_text);
std::string describe(const Scenario& s);

// Idempotent factor e_+ = (1 - J u)/2 with u the unit symbol; Lambda acts on it as J |Lambda|.
CMatrix idempotent_coefficient(const Matrix& shape, Complex amplitude, const Number& unit_symbol);

// Rates solved from the characteristic equations, checked on the assembled field.
AnalyticField build_seed(const Scenario& s);
// Largest |L_j F| relative to max(1, |F|) over random points.
double constraint_defect(const Scenario& s, const AnalyticField& F, int points = 20, unsigned seed = 7);

// The integral problem solved numerically. For the multiplier kind this is the
// problem for K' = f(y) g(x) K, with the constant ratio f(z)/f(g(z)) folded into p.
IntegralEquationProblem make_problem(const Scenario& s, const AnalyticField& F, double p);

// One kernel equation L K = M(K) + X(K). M is kept as a 3-slot kernel so that
// (I - A_x E) M can be compared with (I - A_x E) L K. When the seed turns y-derivatives
// into +sigma_z instead of -sigma_z, odd orders leave a defect D(K) inside the integral
// and X = (I - A_x E)^{-1} A_x E D is the integral term; D and X are empty otherwise.
struct KernelBalance {
    std::string label;
    AnalyticField LK;
    AnalyticField M3;
    AnalyticField D;
    AnalyticField X;
    AnalyticField M_literal;  // M assembled as if the conversion were -sigma_z
    AnalyticField residual() const;
};

// Throws std::invalid_argument when E fails to commute with an operator or the
// seed conversion needed by the generic formula does not hold.
std::vector<KernelBalance> kernel_balances(const Scenario& s, const IntegralEquationProblem& pr,
                                           const AnalyticField& K);

struct NamedField {
    std::string label;
    AnalyticField field;
    bool gated = true;  // counts against the ceiling; otherwise a diagnostic
};

// Every residual the scenario defines, as closed-form fields over (x, y, t) or (x, t).
std::vector<NamedField> residual_fields(const Scenario& s, const IntegralEquationProblem& pr, const AnalyticField& K);

// Norms of a field at points (x, y, t...); fields with one slot read (x, t...).
std::vector<double> evaluate_norms(const AnalyticField& f, const std::vector<Eigen::VectorXd>& points,
                                   int threads = 1);

// A_m(F; N_G) against (I - A_x E) Ahat_m(K; G) and B_m(F; N_K) against (I - A_x E) Bhat_m.
struct Reconstruction {
    int m = 0;
    double a_defect = 0.0;
    double b_defect = 0.0;
};
std::vector<Reconstruction> reconstruction_defects(const IntegralEquationProblem& pr, const AnalyticField& K,
                                                   int max_m, const std::vector<Eigen::VectorXd>& points);

struct ContinuationStep {
    double p = 0.0;
    bool converged = false;
    int iterations = 0;
    double ratio = 0.0;
    double residual = 0.0;  // reduced equation, NaN when not converged
    std::string message;
};

struct RunOptions {
    std::optional<double> p;
    std::optional<int> lattice_points;
    double tol = 1e-10;
    int threads = 1;
    unsigned seed = 1;
    bool continuation = true;
};

struct RunResult {
    Scenario scenario;
    double p = 0.0;
    AnalyticField F;
    AnalyticField K;  // the physical kernel (after undoing multipliers)
    NeumannResult neumann;
    NormEstimate norm;
    std::vector<Eigen::VectorXd> points;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> residuals;  // [label][point]
    std::vector<bool> gated;
    double max_residual = 0.0;  // over gated residuals
    double transport_defect = 0.0;
    double seed_defect = 0.0;
    std::vector<ContinuationStep> continuation;
    std::vector<std::pair<std::string, double>> diagnostics;
};

// Seed, solve, residuals, transport check; throws DivergenceError or std::invalid_argument.
RunResult run_scenario(const Scenario& s, const RunOptions& opt);

// v = 2 sigma K(x, x) and its samples on [0, L] at the given times (coefficients of v).
AnalyticField kdv_potential(const IntegralEquationProblem& pr, const AnalyticField& K);
struct ProfileRow {
    double t = 0.0, x = 0.0;
    Eigen::VectorXd v;
};
std::vector<ProfileRow> kdv_profile(const RunResult& r, const std::vector<double>& times, int points = 65);

}  // namespace cdpde
