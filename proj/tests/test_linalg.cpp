#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "aggmg/linalg.hpp"
#include "aggmg/matrix_market.hpp"

using namespace aggmg;

namespace {

DenseMatrix random_dense(std::size_t m, std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DenseMatrix a(m, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) a(i, j) = u(rng);
    return a;
}

SparseMatrix random_sparse(std::size_t m, std::size_t n, double density, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (u(rng) * 0.5 + 0.5 < density) t.push_back({i, j, u(rng)});
    return SparseMatrix::from_triplets(m, n, std::move(t));
}

double max_diff(const DenseMatrix& a, const DenseMatrix& b)
{
    EXPECT_EQ(a.rows(), b.rows());
    EXPECT_EQ(a.cols(), b.cols());
    double d = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) d = std::max(d, std::abs(a(i, j) - b(i, j)));
    return d;
}

} // namespace

TEST(SparseMatrix, SpmvKnown3x3)
{
    // [[2,0,3],[0,4,0],[5,0,6]] * (1,2,3) = (11, 8, 23)
    auto a = SparseMatrix::from_triplets(3, 3, {{0, 0, 2}, {0, 2, 3}, {1, 1, 4}, {2, 0, 5}, {2, 2, 6}});
    const Vector y = spmv(a, Vector{1, 2, 3});
    EXPECT_DOUBLE_EQ(y[0], 11.0);
    EXPECT_DOUBLE_EQ(y[1], 8.0);
    EXPECT_DOUBLE_EQ(y[2], 23.0);
    EXPECT_EQ(a.nnz(), 5u);
}

TEST(SparseMatrix, FromTripletsSumsDuplicates)
{
    auto a = SparseMatrix::from_triplets(2, 2, {{1, 0, 1.5}, {0, 1, 2.0}, {1, 0, 2.5}});
    EXPECT_EQ(a.nnz(), 2u);
    EXPECT_DOUBLE_EQ(a.at(1, 0), 4.0);
    EXPECT_DOUBLE_EQ(a.at(0, 0), 0.0);
}

TEST(SparseMatrix, RejectsOutOfRangeTriplet)
{
    EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), Error);
}

TEST(SparseMatrix, SpmvDimensionMismatchThrows)
{
    auto a = SparseMatrix::identity(3);
    EXPECT_THROW(spmv(a, Vector{1, 2}), DimensionError);
}

TEST(SparseMatrix, TransposeMatchesDense)
{
    auto a = random_sparse(7, 5, 0.4, 1);
    EXPECT_EQ(max_diff(transpose(a).to_dense(), a.to_dense().transposed()), 0.0);
}

TEST(SparseMatrix, ProductMatchesDense)
{
    auto a = random_sparse(6, 8, 0.35, 2);
    auto b = random_sparse(8, 5, 0.35, 3);
    EXPECT_LT(max_diff(sparse_product(a, b).to_dense(), a.to_dense().multiply(b.to_dense())), 1e-14);
}

TEST(SparseMatrix, AddMatchesDense)
{
    auto a = random_sparse(5, 5, 0.3, 4);
    auto b = random_sparse(5, 5, 0.3, 5);
    auto c = sparse_add(2.0, a, -0.5, b).to_dense();
    auto ad = a.to_dense(), bd = b.to_dense();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(c(i, j), 2.0 * ad(i, j) - 0.5 * bd(i, j), 1e-15);
}

TEST(SparseMatrix, SpmmMatchesColumnwiseSpmv)
{
    auto a = random_sparse(9, 6, 0.4, 6);
    auto x = random_dense(6, 3, 7);
    auto y = spmm(a, x);
    for (std::size_t j = 0; j < 3; ++j) {
        const Vector yj = spmv(a, x.column(j));
        for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y(i, j), yj[i]);
    }
}

TEST(DenseLU, SolvesKnownSystem)
{
    // x = (1, 2, 3)
    auto a = DenseMatrix::from_rows({{4, -1, 0}, {-1, 4, -1}, {0, -1, 4}});
    const Vector x = dense_lu_solve(a, Vector{2, 4, 10});
    EXPECT_NEAR(x[0], 1.0, 1e-14);
    EXPECT_NEAR(x[1], 2.0, 1e-14);
    EXPECT_NEAR(x[2], 3.0, 1e-14);
}

TEST(DenseLU, NeedsPivoting)
{
    auto a = DenseMatrix::from_rows({{0, 1}, {1, 0}});
    const Vector x = dense_lu_solve(a, Vector{3, 5});
    EXPECT_DOUBLE_EQ(x[0], 5.0);
    EXPECT_DOUBLE_EQ(x[1], 3.0);
}

TEST(DenseLU, SingularThrows)
{
    auto a = DenseMatrix::from_rows({{1, 2}, {2, 4}});
    EXPECT_THROW(DenseLU{a}, SingularMatrixError);
}

TEST(DenseLU, RandomResidual)
{
    auto a = random_dense(30, 30, 8);
    for (std::size_t i = 0; i < 30; ++i) a(i, i) += 5.0;
    const Vector b(30, 1.0);
    const Vector x = dense_lu_solve(a, b);
    const Vector r = a.multiply(x);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(r[i], 1.0, 1e-12);
}

TEST(BlockDiagonalInverse, InvertsEachBlock)
{
    auto a = SparseMatrix::from_triplets(4, 4, {{0, 0, 2}, {0, 1, 1}, {1, 0, 1}, {1, 1, 3}, {2, 2, 4}, {3, 3, 5},
                                                {0, 3, 7}, {3, 0, 9}});
    BlockDiagonalInverse d(a, BlockPartition({0, 2, 3, 4}));
    // block [[2,1],[1,3]]^{-1} (5, 10) = (1, 3); off-block entries ignored
    const Vector y = d.apply(Vector{5, 10, 8, 10});
    EXPECT_NEAR(y[0], 1.0, 1e-15);
    EXPECT_NEAR(y[1], 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(y[2], 2.0);
    EXPECT_DOUBLE_EQ(y[3], 2.0);
}

TEST(BlockPartition, RejectsBadOffsets)
{
    EXPECT_THROW(BlockPartition({1, 2}), Error);
    EXPECT_THROW(BlockPartition({0, 2, 2}), Error);
    const std::vector<std::size_t> sizes{2, 3, 1};
    auto b = BlockPartition::from_sizes(sizes);
    EXPECT_EQ(b.dimension(), 6u);
    EXPECT_EQ(b.begin(2), 5u);
}

TEST(SymmetricEigen, KnownSpectrum)
{
    // tridiag(-1, 2, -1), n = 5: lambda_k = 2 - 2 cos(k pi / 6)
    DenseMatrix a(5, 5);
    for (std::size_t i = 0; i < 5; ++i) {
        a(i, i) = 2.0;
        if (i + 1 < 5) a(i, i + 1) = a(i + 1, i) = -1.0;
    }
    const auto e = symmetric_eigen(a);
    for (std::size_t k = 0; k < 5; ++k)
        EXPECT_NEAR(e.values[k], 2.0 - 2.0 * std::cos(static_cast<double>(k + 1) * std::numbers::pi / 6.0), 1e-13);
    auto vtv = e.vectors.transposed().multiply(e.vectors);
    EXPECT_LT(max_diff(vtv, DenseMatrix::identity(5)), 1e-13);
}

class SvdShapes : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(SvdShapes, ReconstructsAndOrthonormal)
{
    const auto [m, n] = GetParam();
    const auto a = random_dense(m, n, static_cast<unsigned>(m * 31 + n));
    const Svd s = svd(a);
    const std::size_t k = std::min(m, n);
    ASSERT_EQ(s.sigma.size(), k);
    for (std::size_t j = 1; j < k; ++j) EXPECT_GE(s.sigma[j - 1], s.sigma[j]);
    EXPECT_LT(max_diff(s.u.transposed().multiply(s.u), DenseMatrix::identity(k)), 1e-13);
    EXPECT_LT(max_diff(s.v.transposed().multiply(s.v), DenseMatrix::identity(k)), 1e-13);
    DenseMatrix us = s.u;
    for (std::size_t j = 0; j < k; ++j) scale(s.sigma[j], us.column(j));
    EXPECT_LT(max_diff(us.multiply(s.v.transposed()), a), 1e-13);
    // sign convention: largest-magnitude entry of each u_j is positive
    for (std::size_t j = 0; j < k; ++j) {
        auto c = s.u.column(j);
        auto it = std::max_element(c.begin(), c.end(), [](double x, double y) { return std::abs(x) < std::abs(y); });
        EXPECT_GT(*it, 0.0);
    }
}

INSTANTIATE_TEST_SUITE_P(Linalg, SvdShapes,
                         ::testing::Values(std::pair<std::size_t, std::size_t>{12, 5}, std::pair<std::size_t, std::size_t>{5, 12},
                                           std::pair<std::size_t, std::size_t>{8, 8}, std::pair<std::size_t, std::size_t>{1, 4}));

TEST(Svd, RankDeficientHasZeroTail)
{
    // rank 1: outer product
    DenseMatrix a(6, 3);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) a(i, j) = static_cast<double>(i + 1) * static_cast<double>(j + 1);
    const Svd s = svd(a);
    // |a|_F = |(1..6)| |(1..3)| = sqrt(91 * 14)
    EXPECT_NEAR(s.sigma[0], std::sqrt(91.0 * 14.0), 1e-12);
    EXPECT_LT(s.sigma[1], 1e-12 * s.sigma[0]);
}

TEST(Svd, RejectsNonFinite)
{
    DenseMatrix a(2, 2);
    a(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(svd(a), Error);
}

TEST(MatrixMarket, RoundTripIsBitExact)
{
    auto a = random_sparse(11, 7, 0.3, 9);
    std::stringstream s;
    write_matrix_market(s, a);
    const auto b = read_matrix_market(s);
    ASSERT_EQ(b.rows(), a.rows());
    ASSERT_EQ(b.nnz(), a.nnz());
    for (std::size_t k = 0; k < a.nnz(); ++k) {
        EXPECT_EQ(a.col_indices()[k], b.col_indices()[k]);
        EXPECT_EQ(a.values()[k], b.values()[k]);
    }
}

TEST(MatrixMarket, ReadsSymmetricStorage)
{
    std::istringstream s("%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 4\n2 1 -1\n");
    const auto a = read_matrix_market(s);
    EXPECT_DOUBLE_EQ(a.at(0, 1), -1.0);
    EXPECT_DOUBLE_EQ(a.at(1, 0), -1.0);
    EXPECT_EQ(a.nnz(), 3u);
}

TEST(MatrixMarket, MalformedInputThrows)
{
    std::istringstream bad_banner("%%NotMatrixMarket\n");
    EXPECT_THROW(read_matrix_market(bad_banner), Error);
    std::istringstream truncated("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n");
    EXPECT_THROW(read_matrix_market(truncated), Error);
    std::istringstream range("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n");
    EXPECT_THROW(read_matrix_market(range), Error);
}
