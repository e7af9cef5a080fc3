#pragma once

// Boundary terms produced when powers of sigma pass through int_x^inf ... dz.
//
// Every family is built on ray slots: F(z,y), N(x,z,y), K(x,eta). Positional
// derivatives are realised by giving each factor its own slot and restricting
// to the diagonal only after differentiating.

#include "cdpde/fields.hpp"
#include "cdpde/symmetry.hpp"

#include <string>

namespace cdpde {

constexpr int kMaxBoundaryOrder = 6;

enum class Family { A, B, Ahat, Bhat, P, Q, Atilde, Btilde };
enum class Evaluation { recursive, closed };

const char* family_name(Family f);
Family family_from_name(const std::string& name);

// --- integrands -------------------------------------------------------------

AnalyticField integrand_FN(const AnalyticField& F, const AnalyticField& N);  // F(z,y) N(x,z,y)
AnalyticField split_FN(const AnalyticField& F, const AnalyticField& N);      // F(z1,y) N(x,z2,y)
AnalyticField integrand_NK(const AnalyticField& N, const AnalyticField& K);  // N(x,z,y) K(x,z)
AnalyticField split_NK(const AnalyticField& N, const AnalyticField& K);      // N(x,z1,y) K(x,z2)

// (x,z,y) -> z = x ; (x,z1,z2,y) -> z1 = z2 = x. Result has slots (x,y).
AnalyticField on_diagonal(const AnalyticField& g);

// --- A / B and A~ / B~ ----------------------------------------------------------

// A_1 = -G|, A_m = sigma_x A_{m-1} - [sigma_x^{m-1} G]| on a 3-slot integrand.
AnalyticField diagonal_family(const DiracOperator& sigma, const AnalyticField& g3, int m, Evaluation ev);
// B_1 = -G|, B_m = (-1)^m [sigma_z2^{m-1} G]| + [sigma_z1 B_{m-1}]| on a 4-slot integrand.
AnalyticField split_family(const DiracOperator& sigma, const AnalyticField& g4, int m, Evaluation ev);

AnalyticField A_family(const DiracOperator& sigma, const AnalyticField& F, const AnalyticField& N, int m,
                       Evaluation ev = Evaluation::recursive);
AnalyticField B_family(const DiracOperator& sigma, const AnalyticField& F, const AnalyticField& N, int m,
                       Evaluation ev = Evaluation::recursive);
AnalyticField Atilde_family(const DiracOperator& sigma, const AnalyticField& N, const AnalyticField& K, int m,
                            Evaluation ev = Evaluation::recursive);
AnalyticField Btilde_family(const DiracOperator& sigma, const AnalyticField& N, const AnalyticField& K, int m,
                            Evaluation ev = Evaluation::recursive);

// --- kernel families -----------------------------------------------------------

// Kernels take values in span{1, Lambda}, E fixes that span and B is real, so
// every kernel commutes with the boundary values it multiplies.
struct HatContext {
    DiracOperator sigma;
    NRule rule;
    double p = 0.0;
};

// [sigma_x^k N_G]|_{z=x} on slots (x,y).
AnalyticField boundary_value(const HatContext& ctx, const AnalyticField& g, int k);
// [sigma_z^k N_G]|_{z=x} on slots (x,y).
AnalyticField boundary_value_z(const HatContext& ctx, const AnalyticField& g, int k);
// (x,eta,y) -> K(x,eta) V(x,y); K may already carry a y slot.
AnalyticField kernel_times(const AnalyticField& k, const AnalyticField& v);
// 3-slot kernel restricted to eta = y.
AnalyticField at_eta_equals_y(const AnalyticField& g3);

// Kernel whose image under (I - A_x E) is A_m(F; N_G). G is a 2- or 3-slot kernel.
AnalyticField Ahat_kernel(const HatContext& ctx, const AnalyticField& K, const AnalyticField& G, int m,
                          Evaluation ev = Evaluation::recursive);
// Kernel whose image under (I - A_x E) is B_m(F; N_K).
AnalyticField Bhat_kernel(const HatContext& ctx, const AnalyticField& K, int m, Evaluation ev = Evaluation::recursive);

AnalyticField Ahat_family(const HatContext& ctx, const AnalyticField& K, int m, Evaluation ev = Evaluation::recursive);
AnalyticField Bhat_family(const HatContext& ctx, const AnalyticField& K, int m, Evaluation ev = Evaluation::recursive);

// Evidence that E commutes with every power of sigma in x and y.
struct CommutationCertificate {
    double defect = 0.0;
    double tol = 1e-10;
    bool holds() const { return defect <= tol; }
};

CommutationCertificate certify(const HatContext& ctx, int n_probe_pairs = 4);

// Commutator corrections; they vanish identically under a valid certificate and
// are refused without one.
AnalyticField P_family(const HatContext& ctx, const AnalyticField& K, int m, const CommutationCertificate* cert);
AnalyticField Q_family(const HatContext& ctx, const AnalyticField& K, int m, const CommutationCertificate* cert);

struct HatValues {
    Matrix ahat, bhat, p, q;
};
HatValues Ahat_Bhat_P_Q(const HatContext& ctx, const AnalyticField& K, int m, const CommutationCertificate* cert,
                        const Eigen::VectorXd& xy);

// Human-readable expansion of the closed form, one additive term per line.
std::string term_tree(Family f, int m);

}  // namespace cdpde
