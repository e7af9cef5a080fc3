#pragma once

// Identity suites behind `identity-check`: sigma through the tail integral,
// integration by parts in z, closed forms against recursions, and the kernel
// reconstruction on a solved problem.

#include "cdpde/commutators.hpp"
#include "cdpde/solver.hpp"

#include <random>
#include <string>
#include <vector>

namespace cdpde {

struct DefectRow {
    std::string identity;
    int m = 0;
    int point = 0;  // index of the random field pair
    double defect = 0.0;
    std::string status = "ok";  // or the quadrature failure text
};

struct IdentityReport {
    std::string family;
    int level = 2;
    std::vector<DefectRow> rows;
    double max_defect() const;
    bool quadrature_failed() const;
};

// Algebra laws over random pairs. `expected` says whether the law should hold at this level;
// a law that is expected to fail passes when a witness is found.
struct LawResult {
    std::string law;
    double max_defect = 0.0;
    double tol = 0.0;
    bool expected = true;
    bool passed = false;
    std::string witness;
};

struct AlgebraReport {
    int level = 2;
    std::vector<LawResult> laws;
    bool passed() const;
};

AlgebraReport algebra_check(int level, int pairs, unsigned seed);

// Sum of `terms` exponential terms decaying along +t of every ray slot. `real`: real
// matrix coefficients and real rates only.
AnalyticField random_ray_field(int level, int n, Layout layout, std::mt19937_64& rng, int terms = 3,
                               bool real = false);

// family: prop2_5 | cor2_6 | lemma3_5 | prop3_15. Orders 1..max_m, `pairs` random field pairs.
IdentityReport identity_check(const std::string& family, int max_m, int level, unsigned seed, int pairs = 1,
                              bool zero_fields = false);

}  // namespace cdpde
