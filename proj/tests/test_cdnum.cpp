#include "cdpde/cdnum.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace cdpde;
using Num = CDNumber<double>;
using Mat = CDMatrix<double>;

namespace {

// Reference product: the doubling rule applied to whole coefficient vectors.
std::vector<double> doubling(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n == 1) return {x[0] * y[0]};
    const std::size_t h = n / 2;
    auto cj = [](std::vector<double> v) {
        for (std::size_t i = 1; i < v.size(); ++i) v[i] = -v[i];
        return v;
    };
    std::vector<double> a(x.begin(), x.begin() + h), b(x.begin() + h, x.end());
    std::vector<double> c(y.begin(), y.begin() + h), d(y.begin() + h, y.end());
    auto ac = doubling(a, c), db = doubling(cj(d), b), da = doubling(d, a), bc = doubling(b, cj(c));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < h; ++i) {
        out[i] = ac[i] - db[i];
        out[h + i] = da[i] + bc[i];
    }
    return out;
}

Num random_number(int level, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Num a(level);
    for (int j = 0; j < a.dim(); ++j) a[j] = u(rng);
    return a;
}

std::vector<double> to_vec(const Num& a) { return {a.coeffs().data(), a.coeffs().data() + a.dim()}; }

}  // namespace

TEST(CdNum, ProductMatchesDoublingOracle) {
    std::mt19937_64 rng(11);
    for (int level = 2; level <= 4; ++level)
        for (int trial = 0; trial < 200; ++trial) {
            const Num a = random_number(level, rng), b = random_number(level, rng);
            const auto ref = doubling(to_vec(a), to_vec(b));
            const Num p = cd_mul(a, b);
            for (int j = 0; j < a.dim(); ++j) EXPECT_NEAR(p[j], ref[j], 1e-14);
        }
}

TEST(CdNum, GeneratorTablesMatchGoldenFiles) {
    for (int level = 2; level <= 4; ++level) {
        std::ifstream in(std::string(CDPDE_GOLDEN_DIR) + "/generator_table_r" + std::to_string(level) + ".csv");
        ASSERT_TRUE(in) << "missing golden table for r=" << level;
        std::stringstream golden, ours;
        golden << in.rdbuf();
        write_generator_table_csv(ours, level);
        EXPECT_EQ(ours.str(), golden.str()) << "r=" << level;
    }
}

TEST(CdNum, GeneratorRelations) {
    for (int level = 2; level <= 4; ++level) {
        const int n = 1 << level;
        for (int j = 1; j < n; ++j) {
            const Num ij = Num::basis(level, j);
            EXPECT_EQ(ij * ij, Num::real(level, -1.0));
            for (int k = 1; k < n; ++k) {
                if (j == k) continue;
                const Num ik = Num::basis(level, k);
                EXPECT_EQ(ij * ik + ik * ij, Num(level));
            }
        }
    }
    EXPECT_EQ(Num::basis(2, 1) * Num::basis(2, 2), Num::basis(2, 3));
}

TEST(CdNum, IdentityConjNormInverse) {
    std::mt19937_64 rng(3);
    const Num x = random_number(3, rng);
    EXPECT_EQ(Num::real(3, 1.0) * x, x);
    EXPECT_EQ(x * Num::real(3, 1.0), x);
    EXPECT_EQ(cd_conj(Num::basis(2, 2)), Num::basis(2, 2, -1.0));
    EXPECT_EQ(cd_conj(cd_conj(x)), x);

    Num q(2);
    q.coeffs() << 1, 1, 1, 1;
    EXPECT_DOUBLE_EQ(cd_norm(q), 2.0);
    EXPECT_NEAR((x * x.conj())[0], x.norm2(), 1e-15);

    const Num i5 = Num::basis(3, 5);
    EXPECT_EQ(cd_inv(i5), Num::basis(3, 5, -1.0));
    EXPECT_EQ(i5 * cd_inv(i5), Num::real(3, 1.0));
    for (int level = 2; level <= 3; ++level) {
        const Num a = random_number(level, rng);
        const Num one = a * cd_inv(a);
        EXPECT_NEAR((one - Num::real(level, 1.0)).norm(), 0.0, 1e-14);
    }
    EXPECT_THROW(cd_inv(Num(2)), std::domain_error);
    EXPECT_THROW(cd_mul(Num(2), Num(3)), std::invalid_argument);
    EXPECT_THROW(Num(5), std::invalid_argument);
}

TEST(CdNum, Associators) {
    std::mt19937_64 rng(5);
    EXPECT_EQ(associator(Num::basis(2, 1), Num::basis(2, 2), Num::basis(2, 3)), Num(2));
    for (int trial = 0; trial < 100; ++trial) {
        const Num a = random_number(2, rng), b = random_number(2, rng), c = random_number(2, rng);
        EXPECT_LT(associator(a, b, c).norm(), 1e-14);
        const Num o = random_number(3, rng), p = random_number(3, rng);
        EXPECT_LT(associator(o, o, p).norm(), 1e-14);
        EXPECT_LT(associator(Num::real(3, 0.7), o, p).norm(), 1e-15);
    }
    // (i1 i2) i4 - i1 (i2 i4) in the octonions, frozen value.
    EXPECT_EQ(associator(Num::basis(3, 1), Num::basis(3, 2), Num::basis(3, 4)), Num::basis(3, 7, 2.0));
}

TEST(CdNum, NormMultiplicativeForQuaternionsAndOctonions) {
    std::mt19937_64 rng(17);
    for (int level = 2; level <= 3; ++level)
        for (int trial = 0; trial < 1000; ++trial) {
            const Num a = random_number(level, rng), b = random_number(level, rng);
            const double lhs = (a * b).norm(), rhs = a.norm() * b.norm();
            EXPECT_LE(std::abs(lhs - rhs), 1e-12 * rhs);
        }
}

TEST(CdNum, SedenionNormMultiplicativityFails) {
    std::mt19937_64 rng(19);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Num a = random_number(4, rng), b = random_number(4, rng);
        worst = std::max(worst, std::abs((a * b).norm() - a.norm() * b.norm()) / (a.norm() * b.norm()));
    }
    EXPECT_GT(worst, 1e-3);
    // Zero divisors exist: (i1 + i10)(i15 - i4) = 0.
    const Num zd1 = Num::basis(4, 1) + Num::basis(4, 10);
    const Num zd2 = Num::basis(4, 15) - Num::basis(4, 4);
    EXPECT_EQ(zd1 * zd2, Num(4));
}

TEST(CdNum, OctonionAlternativity) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const Num x = random_number(3, rng), a = random_number(3, rng);
        EXPECT_LT(((x * a) * a - x * (a * a)).norm(), 1e-13);
        EXPECT_LT(((a * a) * x - a * (a * x)).norm(), 1e-13);
    }
}

TEST(CdNum, MultiplicationMatrices) {
    std::mt19937_64 rng(29);
    for (int level = 2; level <= 4; ++level) {
        const Num a = random_number(level, rng), x = random_number(level, rng);
        EXPECT_LT((multiplication_matrix(a, true) * x.coeffs() - (a * x).coeffs()).norm(), 1e-14);
        EXPECT_LT((multiplication_matrix(a, false) * x.coeffs() - (x * a).coeffs()).norm(), 1e-14);
    }
}

TEST(CdMatrix, RealOnlyFlagAndIdentity) {
    std::mt19937_64 rng(31);
    Mat m(2, 2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) m.set(i, j, random_number(2, rng));
    EXPECT_FALSE(m.real_only());
    EXPECT_TRUE(Mat::identity(3, 3).real_only());
    EXPECT_EQ(mat_mul(Mat::identity(2, 2), m), m);
    EXPECT_EQ(mat_mul(m, Mat::identity(2, 2)), m);
    EXPECT_THROW(mat_mul(m, Mat(3, 3, 2)), std::invalid_argument);
    EXPECT_THROW(Mat(5, 5, 2), std::invalid_argument);
}

TEST(CdMatrix, RealFactorCommutesWithScalars) {
    std::mt19937_64 rng(37);
    for (int level = 2; level <= 3; ++level) {
        Eigen::Matrix2d r;
        r << 0.3, -1.2, 2.0, 0.7;
        const Mat M = Mat::from_real(r, level);
        Mat N(2, 2, level);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) N.set(i, j, random_number(level, rng));
        const Num alpha = random_number(level, rng);
        EXPECT_LT((left_mul(alpha, M) - right_mul(M, alpha)).norm(), 1e-15);
        if (level == 2) EXPECT_LT((mat_mul(left_mul(alpha, M), N) - left_mul(alpha, mat_mul(M, N))).norm(), 1e-14);
    }
}

TEST(CdMatrix, QuaternionSpotValue) {
    // Entry (0,0) of A B, frozen from an independent recursive-doubling evaluation.
    const double a[2][2][4] = {
        {{-0.35233447033367526, -0.6983016521509962, 0.3018689460797075, -0.8551274266649145},
         {0.0717640086133784, -0.2686221661748289, -0.8840021504505864, 0.014871466378840514}},
        {{-0.9250086831160302, -0.13270863267522826, -0.8602891528507621, -0.8185739733122699},
         {-0.15096162171497207, 0.6537042493440761, -0.7523960777007088, -0.5535220707859709}}};
    const double b[2][2][4] = {
        {{0.2548664448111786, 0.8954178849140113, 0.15420589723499734, -0.20663905069843969},
         {0.9525102111858401, -0.9068346387644874, 0.716936918097359, -0.4207814273366475}},
        {{-0.7114898332851249, -0.7644155238432633, -0.38303635179613127, 0.6322527182400628},
         {-0.638547240152125, 0.1632003273249325, 0.2778269378523681, -0.25520491454853755}}};
    Mat A(2, 2, 2), B(2, 2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            A.set(i, j, Num(2, Eigen::Vector4d(a[i][j][0], a[i][j][1], a[i][j][2], a[i][j][3])));
            B.set(i, j, Num(2, Eigen::Vector4d(b[i][j][0], b[i][j][1], b[i][j][2], b[i][j][3])));
        }
    const Num c = mat_mul(A, B).at(0, 0);
    const double expect[4] = {-0.29218493691462444, -0.8409244984058105, -0.12744913667676694, -1.0611791326361195};
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(c[j], expect[j], 1e-15);
}

TEST(CdMatrix, ModuleNormAxioms) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int level = 2; level <= 3; ++level)
        for (int trial = 0; trial < 200; ++trial) {
            Mat M(3, 2, level), N(3, 2, level);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 2; ++j) {
                    M.set(i, j, random_number(level, rng));
                    N.set(i, j, random_number(level, rng));
                }
            const Num alpha = random_number(level, rng);
            const double s = u(rng);
            EXPECT_LE(left_mul(alpha, M).norm(), alpha.norm() * M.norm() * (1 + 1e-12));
            EXPECT_LE(right_mul(M, alpha).norm(), alpha.norm() * M.norm() * (1 + 1e-12));
            EXPECT_LE((M + N).norm(), (M.norm() + N.norm()) * (1 + 1e-12));
            EXPECT_NEAR((M * s).norm(), std::abs(s) * M.norm(), 1e-12 * M.norm());
        }
}
