#pragma once

// Random data generators shared by the test binaries.

#include "cdpde/fields.hpp"
#include "cdpde/lineint.hpp"

#include <random>

namespace cdpde::testing {

inline Number random_number(int level, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Number a(level);
    for (int j = 0; j < a.dim(); ++j) a[j] = u(rng);
    return a;
}

inline CMatrix random_cmatrix(int level, int rows, int cols, std::mt19937_64& rng, bool complex_part,
                              bool real_only = false) {
    CMatrix c(rows, cols, level);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index j = 0; j < c.block().cols(); ++j)
        for (Eigen::Index i = 0; i < (real_only ? 1 : c.block().rows()); ++i)
            c.block()(i, j) = Complex(u(rng), complex_part ? u(rng) : 0.0);
    return c;
}

inline Eigen::VectorXd random_point(int dims, std::mt19937_64& rng, double lo = -0.8, double hi = 0.8) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd p(dims);
    for (int i = 0; i < dims; ++i) p[i] = u(rng);
    return p;
}

// Sum of a few terms c t^k e^{rho t} in every coordinate, each decaying along +t of every slot.
inline AnalyticField random_decaying_field(int level, int n, Layout layout, std::mt19937_64& rng,
                                           bool oscillate = true, int terms = 3, bool real_only = false) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), decay(0.6, 1.8);
    AnalyticField f(level, n, n, layout);
    for (int k = 0; k < terms; ++k) {
        Term t;
        const bool osc = oscillate && k % 2 == 1;
        t.coeff = random_cmatrix(level, n, n, rng, osc, real_only);
        t.exps = Eigen::VectorXi::Zero(layout.dims());
        t.rates = Eigen::VectorXcd::Zero(layout.dims());
        for (int c = 0; c < layout.dims(); ++c) t.rates[c] = Complex(0.3 * u(rng), osc ? u(rng) : 0.0);
        for (int s = 0; s < layout.arity; ++s) {
            const int c = layout.slot_begin(s);
            t.rates[c] = Complex(-decay(rng), t.rates[c].imag());
            if (k == 2) t.exps[c] = 1;
        }
        f.add(t);
    }
    return f;
}

// A ray field g(t) pulled back to full coordinates through t = d.(x - base).
inline AnalyticField lift_to_full(const AnalyticField& ray, const RayFoliation& fol) {
    const Layout& from = ray.layout();
    const int n = 1 << fol.level;
    Layout to{from.arity, n, from.n_time};
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(from.dims(), to.dims());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(from.dims());
    const Eigen::VectorXd d = fol.dual();
    for (int s = 0; s < from.arity; ++s) {
        A.block(from.slot_begin(s), to.slot_begin(s), 1, n) = d.transpose();
        b[from.slot_begin(s)] = -d.dot(fol.base.coeffs());
    }
    for (int k = 0; k < from.n_time; ++k) A(from.time_begin() + k, to.time_begin() + k) = 1.0;
    return substitute(ray, to, A, b);
}

}  // namespace cdpde::testing
