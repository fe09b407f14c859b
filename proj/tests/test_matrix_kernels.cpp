#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "pcid/errors.hpp"
#include "pcid/kernels.hpp"
#include "pcid/matrix.hpp"
#include "pcid/rng.hpp"

using namespace pcid;

namespace {

Matrix random_matrix(SplitMix64& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.entries()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return m;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
        }
    }
    return e;
}

}  // namespace

TEST(Matrix, ShapeAndAccess) {
    Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m.size(), 6u);
    EXPECT_EQ(m(1, 2), 6.0);
    EXPECT_EQ(m.transpose()(2, 1), 6.0);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
    EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST(Matrix, Arithmetic) {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{0, 1}, {1, 0}});
    EXPECT_EQ(a * b, Matrix::from_rows({{2, 1}, {4, 3}}));
    EXPECT_EQ(a + b, Matrix::from_rows({{1, 3}, {4, 4}}));
    EXPECT_EQ(a - b, Matrix::from_rows({{1, 1}, {2, 4}}));
    EXPECT_EQ(a * 2.0, Matrix::from_rows({{2, 4}, {6, 8}}));
    EXPECT_DOUBLE_EQ(a.norm(), std::sqrt(30.0));
    EXPECT_THROW(a * Matrix(3, 1), DimensionError);
    EXPECT_THROW(a + Matrix(2, 3), DimensionError);
}

TEST(Matrix, Stacking) {
    const Matrix a = Matrix::column({1, 2});
    const Matrix b = Matrix::column({3});
    const Matrix s = vstack({&a, &b});
    EXPECT_EQ(s, Matrix::column({1, 2, 3}));
    EXPECT_EQ(row_block(s, 1, 2), Matrix::column({2, 3}));
}

TEST(Determinant, Examples) {
    EXPECT_DOUBLE_EQ(determinant(Matrix::identity(3)), 1.0);
    EXPECT_DOUBLE_EQ(determinant(Matrix::from_rows({{1, 1}, {1, 1}})), 0.0);
    EXPECT_DOUBLE_EQ(determinant(Matrix::from_rows({{1, 2}, {3, 4}})), -2.0);
    EXPECT_THROW(determinant(Matrix(2, 3)), DimensionError);
}

TEST(Determinant, MatchesEigenAndIsMultiplicative) {
    SplitMix64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 6);
        const Matrix m = random_matrix(rng, n, n);
        EXPECT_NEAR(determinant(m), to_eigen(m).determinant(), 1e-12);
    }
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix a = random_matrix(rng, 3, 3);
        const Matrix b = random_matrix(rng, 3, 3);
        const double lhs = determinant(a * b);
        const double rhs = determinant(a) * determinant(b);
        EXPECT_NEAR(lhs, rhs, 1e-8 * std::max(1.0, std::abs(rhs)));
    }
}

TEST(Determinant, RankDeficientIsZero) {
    SplitMix64 rng(5);
    for (std::size_t n = 2; n <= 4; ++n) {
        Matrix m = random_matrix(rng, n, n);
        for (std::size_t j = 0; j < n; ++j) {
            m(n - 1, j) = 2.0 * m(0, j);
        }
        EXPECT_NEAR(determinant(m), 0.0, 1e-12);
    }
}

TEST(Adjugate, Examples) {
    EXPECT_EQ(adjugate(Matrix::identity(2)), Matrix::identity(2));
    EXPECT_EQ(adjugate(Matrix(2, 2)), Matrix(2, 2));
    EXPECT_EQ(adjugate(Matrix::from_rows({{1, 2}, {3, 4}})), Matrix::from_rows({{4, -2}, {-3, 1}}));
    EXPECT_EQ(adjugate(Matrix::from_rows({{7}})), Matrix::from_rows({{1}}));
    EXPECT_EQ(adjugate(Matrix::from_rows({{0}})), Matrix::from_rows({{1}}));
    EXPECT_THROW(adjugate(Matrix(3, 2)), DimensionError);
}

TEST(Adjugate, IdentityOn500RandomMatrices) {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 4);
        Matrix m = random_matrix(rng, n, n);
        if (trial % 4 == 3 && n > 1) {
            for (std::size_t i = 0; i < n; ++i) {
                m(i, n - 1) = m(i, 0) - m(i, 1 % n);
            }
        }
        const Matrix dev = adjugate(m) * m - Matrix::identity(n) * determinant(m);
        ASSERT_LT(dev.max_abs(), 1e-9) << "trial " << trial;
        const Matrix dev2 = m * adjugate(m) - Matrix::identity(n) * determinant(m);
        ASSERT_LT(dev2.max_abs(), 1e-9) << "trial " << trial;
    }
}

TEST(Adjugate, MatchesEigenInverseWhenRegular) {
    SplitMix64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 3);
        const Matrix m = random_matrix(rng, n, n);
        const Eigen::MatrixXd e = to_eigen(m);
        const double det = e.determinant();
        if (std::abs(det) < 1e-3) {
            continue;
        }
        const Eigen::MatrixXd oracle = det * e.inverse();
        EXPECT_LT((to_eigen(adjugate(m)) - oracle).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Adjugate, RankOneIsZeroForLargerMatrices) {
    const Matrix v = Matrix::column({1.0, 2.0, -1.0});
    const Matrix m = v * v.transpose();
    EXPECT_LT(adjugate(m).max_abs(), 1e-14);
}

TEST(MinEigenvalue, Examples) {
    EXPECT_DOUBLE_EQ(min_eigenvalue(Matrix::identity(2)), 1.0);
    EXPECT_DOUBLE_EQ(min_eigenvalue(Matrix::from_rows({{2, 0}, {0, 5}})), 2.0);
    EXPECT_NEAR(min_eigenvalue(Matrix::from_rows({{2, 1}, {1, 2}})), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(min_eigenvalue(Matrix::from_rows({{-3}})), -3.0);
}

TEST(MinEigenvalue, RejectsAsymmetricInput) {
    EXPECT_THROW(min_eigenvalue(Matrix::from_rows({{1, 2}, {0, 1}})), ContractError);
    EXPECT_NO_THROW(min_eigenvalue(Matrix::from_rows({{1, 1 + 1e-12}, {1, 1}})));
    EXPECT_THROW(min_eigenvalue(Matrix(2, 3)), DimensionError);
}

TEST(MinEigenvalue, RejectsNonFiniteInput) {
    EXPECT_THROW(min_eigenvalue(Matrix::from_rows({{NAN, 0}, {0, 1}})), ContractError);
    EXPECT_THROW(determinant(Matrix::from_rows({{INFINITY}})), ContractError);
}

TEST(MinEigenvalue, MatchesEigenSolver) {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 5);
        const Matrix a = random_matrix(rng, n, n);
        const Matrix s = (a + a.transpose()) * 0.5;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(s));
        const double oracle = es.eigenvalues().minCoeff();
        EXPECT_NEAR(min_eigenvalue(s), oracle, 1e-8 * std::max(1.0, std::abs(oracle)));
    }
}

TEST(MinEigenvalue, TinyPsdGramKeepsRelativeAccuracy) {
    // Gram of two nearly parallel vectors: the small eigenvalue sits far below
    // the large one, as in the extension filter right after excitation starts.
    const Matrix a = Matrix::column({1.0, 1.0});
    const Matrix b = Matrix::column({1.0, 1.0 + 1e-6});
    const Matrix g = a * a.transpose() + b * b.transpose();
    // Extended-precision oracle on the stored entries: lambda_min = det / lambda_max.
    const long double g00 = g(0, 0);
    const long double g01 = g(0, 1);
    const long double g11 = g(1, 1);
    const long double det = g00 * g11 - g01 * g01;
    const long double tr = g00 + g11;
    const long double lmax = 0.5L * (tr + std::sqrt(tr * tr - 4.0L * det));
    const double oracle = static_cast<double>(det / lmax);
    ASSERT_GT(oracle, 0.0);
    EXPECT_NEAR(min_eigenvalue(g), oracle, 1e-4 * oracle);
}

TEST(MinEigenvalue, RayleighDominance) {
    SplitMix64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 4);
        const Matrix a = random_matrix(rng, n, n);
        const Matrix s = (a + a.transpose()) * 0.5;
        const double lam = min_eigenvalue(s);
        for (int k = 0; k < 100; ++k) {
            const Matrix x = random_matrix(rng, n, 1);
            const double q = (x.transpose() * s * x)(0, 0) / (x.transpose() * x)(0, 0);
            ASSERT_LE(lam, q + 1e-12);
        }
    }
}
