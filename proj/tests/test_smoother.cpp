#include <gtest/gtest.h>

#include <random>

#include "aggmg/smoother.hpp"

using namespace aggmg;

namespace {

SparseMatrix laplacian_1d(std::size_t n)
{
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back({i, i, 2.0});
        if (i > 0) t.push_back({i, i - 1, -1.0});
        if (i + 1 < n) t.push_back({i, i + 1, -1.0});
    }
    return SparseMatrix::from_triplets(n, n, std::move(t));
}

SparseMatrix scaled_identity(std::size_t n, double c)
{
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, c});
    return SparseMatrix::from_triplets(n, n, std::move(t));
}

/// Random SPD matrix B^T B + n I with a coupled block structure.
SparseMatrix random_spd(std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DenseMatrix b(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) b(i, j) = u(rng);
    DenseMatrix a = b.transposed().multiply(b);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n) * 0.1;
    return SparseMatrix::from_dense(a);
}

Vector random_vector(std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> g;
    Vector v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

double energy_norm(const SparseMatrix& a, std::span<const double> x) { return std::sqrt(dot(x, spmv(a, x))); }

} // namespace

TEST(SmootherKind, ParseAndPrint)
{
    EXPECT_EQ(parse_smoother_kind("block_jacobi"), SmootherKind::block_jacobi);
    EXPECT_EQ(parse_smoother_kind("jacobi"), SmootherKind::block_jacobi);
    EXPECT_EQ(parse_smoother_kind("gauss_seidel"), SmootherKind::block_gauss_seidel);
    EXPECT_EQ(to_string(SmootherKind::richardson), "richardson");
    EXPECT_THROW(parse_smoother_kind("sor"), Error);
}

TEST(EstimateRho, PointJacobiOnScaledIdentityIsOne)
{
    const auto a = scaled_identity(10, 2.0);
    const SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition::uniform(10, 1));
    EXPECT_NEAR(estimate_rho(a, s, 3, 1), 1.0, 1e-15);
}

TEST(EstimateRho, RichardsonOnScaledIdentity)
{
    const auto a = scaled_identity(6, 5.0);
    const auto s = build_smoother(a, SmootherKind::richardson, BlockPartition::uniform(6, 1), 3);
    EXPECT_NEAR(s.rho_estimate(), 5.0, 1e-14);
    EXPECT_NEAR(s.omega(), 4.0 / 15.0, 1e-15);
}

TEST(EstimateRho, BlockJacobiOnBlockDiagonalMatrix)
{
    auto a = SparseMatrix::from_triplets(4, 4, {{0, 0, 3}, {0, 1, 1}, {1, 0, 1}, {1, 1, 2}, {2, 2, 7}, {2, 3, -2},
                                                {3, 2, -2}, {3, 3, 5}});
    const auto s = build_smoother(a, SmootherKind::block_jacobi, BlockPartition({0, 2, 4}), 9);
    EXPECT_NEAR(s.rho_estimate(), 1.0, 1e-13);
    EXPECT_NEAR(s.omega(), 4.0 / 3.0, 1e-13);
}

TEST(EstimateRho, Laplacian1DWithinFifteenPercent)
{
    // rho(D^{-1} A) = 1 + cos(pi / 65)
    const auto a = laplacian_1d(64);
    const double rho = 1.0 + std::cos(std::numbers::pi / 65.0);
    const SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition::uniform(64, 1));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double est = estimate_rho(a, s, 3, seed);
        EXPECT_LE(est, rho * (1.0 + 1e-12));
        EXPECT_GE(est, 0.85 * rho) << "seed " << seed;
    }
    EXPECT_NEAR(estimate_rho(a, s, 2000, 0), rho, 1e-3);
}

TEST(EstimateRho, RichardsonBoundedByLargestEigenvalue)
{
    const auto a = random_spd(10, 4);
    const double lmax = symmetric_eigen(a.to_dense()).values.back();
    const SmootherSpec s(SmootherKind::richardson, a, BlockPartition::uniform(10, 1));
    double prev = 0.0;
    for (int q : {1, 2, 4, 8, 16, 32}) {
        const double est = estimate_rho(a, s, q, 11);
        EXPECT_LE(est, lmax * (1.0 + 1e-6));
        EXPECT_GE(est, prev * (1.0 - 1e-12)) << "q=" << q;
        prev = est;
    }
}

TEST(EstimateRho, DeterministicPerSeed)
{
    const auto a = laplacian_1d(40);
    const SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition::uniform(40, 1));
    EXPECT_EQ(estimate_rho(a, s, 3, 5), estimate_rho(a, s, 3, 5));
    EXPECT_NE(estimate_rho(a, s, 3, 5), estimate_rho(a, s, 3, 6));
}

TEST(Smooth, ExactSmootherSolvesInOneSweep)
{
    const auto a = random_spd(8, 2);
    SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition({0, 8}));
    s.set_omega(1.0);
    const Vector b = random_vector(8, 3);
    const auto res = smooth(Vector(8, 0.0), a, s, b, StopRule::fixed(1));
    const Vector ref = dense_lu_solve(a.to_dense(), b);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(res.x[i], ref[i], 1e-12);
}

TEST(Smooth, ZeroSweepsReturnsInput)
{
    const auto a = laplacian_1d(5);
    const auto s = build_smoother(a, SmootherKind::block_jacobi, BlockPartition::uniform(5, 1), 0);
    const auto res = smooth(Vector(5, 0.0), a, s, Vector{1, 2, 3, 4, 5}, StopRule::fixed(0));
    for (double v : res.x) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(res.iterations, 0u);
}

TEST(Smooth, DampsHighFrequenciesFaster)
{
    // eigenvectors sin(k pi i / (n+1)); point Jacobi omega = 2/3
    const std::size_t n = 32;
    const auto a = laplacian_1d(n);
    SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition::uniform(n, 1));
    s.set_omega(2.0 / 3.0);
    const Vector x0 = random_vector(n, 17);
    const auto res = smooth(x0, a, s, Vector(n, 0.0), StopRule::fixed(3));
    auto coeff = [&](std::span<const double> x, std::size_t k) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            c += x[i] * std::sin(static_cast<double>(k * (i + 1)) * std::numbers::pi / (n + 1.0));
        return c;
    };
    const double low = std::abs(coeff(res.x, 1) / coeff(x0, 1));
    for (std::size_t k = n / 2 + 1; k <= n; ++k) {
        const double high = std::abs(coeff(res.x, k) / coeff(x0, k));
        EXPECT_LE(3.0 * high, low) << "mode " << k;
    }
}

TEST(Smooth, StagnationOnIdentityRunsToCap)
{
    // |1 - 4/3| = 1/3 per sweep: ratio 3 never drops below 1.03
    const auto a = scaled_identity(4, 1.0);
    SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition::uniform(4, 1));
    s.set_rho(1.0);
    const auto res = smooth(Vector{1, -2, 0.5, 3}, a, s, Vector(4, 0.0), StopRule::stagnation(0.03, 100));
    EXPECT_EQ(res.iterations, 100u);
    EXPECT_NEAR(norm2(res.x), 1.0, 1e-14);
}

TEST(Smooth, KernelVectorOnlyRenormalised)
{
    // A = diag(0, 1): e_0 spans the kernel
    auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 0.0}, {1, 1, 1.0}});
    SmootherSpec s(SmootherKind::richardson, a, BlockPartition::uniform(2, 1));
    s.set_omega(0.5);
    const auto res = smooth(Vector{3.0, 0.0}, a, s, Vector(2, 0.0), StopRule::stagnation(0.03));
    EXPECT_EQ(res.iterations, 1u);
    EXPECT_DOUBLE_EQ(res.x[0], 1.0);
    EXPECT_DOUBLE_EQ(res.x[1], 0.0);
}

TEST(Smooth, StagnationRejectsNonzeroRhs)
{
    const auto a = laplacian_1d(3);
    const auto s = build_smoother(a, SmootherKind::block_jacobi, BlockPartition::uniform(3, 1), 0);
    EXPECT_THROW(smooth(Vector(3, 1.0), a, s, Vector{1, 0, 0}, StopRule::stagnation(0.03)), Error);
    EXPECT_THROW(StopRule::stagnation(0.0), Error);
}

TEST(Smooth, DivergenceIsReported)
{
    const auto a = laplacian_1d(16);
    SmootherSpec s(SmootherKind::richardson, a, BlockPartition::uniform(16, 1));
    s.set_omega(1e150);
    EXPECT_THROW(smooth(random_vector(16, 1), a, s, Vector(16, 0.0), StopRule::fixed(10)), ConvergenceError);
}

TEST(Smooth, EnergyNormNonincreasing)
{
    for (auto kind : {SmootherKind::richardson, SmootherKind::block_jacobi}) {
        const auto a = random_spd(12, 21);
        const auto s = build_smoother(a, kind, BlockPartition::uniform(4, 3), 5);
        Vector x = random_vector(12, 8);
        double prev = energy_norm(a, x);
        for (int k = 0; k < 20; ++k) {
            x = smooth(std::move(x), a, s, Vector(12, 0.0), StopRule::fixed(1)).x;
            const double cur = energy_norm(a, x);
            EXPECT_LE(cur, prev * (1.0 + 1e-12)) << to_string(kind) << " sweep " << k;
            prev = cur;
        }
    }
}

TEST(GaussSeidel, MatchesDenseForwardSolve)
{
    const auto a = random_spd(9, 31);
    const BlockPartition blocks({0, 2, 5, 9});
    const SmootherSpec s(SmootherKind::block_gauss_seidel, a, blocks);
    const Vector r = random_vector(9, 2);
    // (D + L) z = r with the block lower triangle, solved densely
    DenseMatrix lower = a.to_dense();
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = blocks.begin(b); i < blocks.end(b); ++i)
            for (std::size_t j = blocks.end(b); j < 9; ++j) lower(i, j) = 0.0;
    const Vector ref = dense_lu_solve(lower, r);
    const Vector z = s.precondition(r);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(z[i], ref[i], 1e-12);
}

TEST(ProlongationSmoothing, ZeroOmegaKeepsTentative)
{
    const auto a = laplacian_1d(6);
    SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition::uniform(3, 2));
    s.set_omega(0.0);
    const auto p = SparseMatrix::from_triplets(6, 2, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 1, 1}, {4, 1, 1}, {5, 1, 1}});
    const auto t = apply_prolongation_smoothing(a, s, p);
    EXPECT_EQ(t.to_dense().values().size(), p.to_dense().values().size());
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(t.at(i, j), p.at(i, j));
}

TEST(ProlongationSmoothing, IdentityMatchesDenseOracle)
{
    for (auto kind : {SmootherKind::richardson, SmootherKind::block_jacobi, SmootherKind::block_gauss_seidel}) {
        const auto a = random_spd(10, 13);
        const BlockPartition blocks({0, 3, 5, 10});
        const auto s = build_smoother(a, kind, blocks, 2);
        const auto t = apply_prolongation_smoothing(a, s, SparseMatrix::identity(10)).to_dense();
        // I - omega P^{-1} A, column by column
        const auto ad = a.to_dense();
        for (std::size_t j = 0; j < 10; ++j) {
            Vector col(ad.column(j).begin(), ad.column(j).end());
            s.precondition_in_place(col);
            for (std::size_t i = 0; i < 10; ++i)
                EXPECT_NEAR(t(i, j), (i == j ? 1.0 : 0.0) - s.omega() * col[i], 1e-13) << to_string(kind);
        }
    }
}

TEST(ProlongationSmoothing, ExactBlockKernel)
{
    auto a = SparseMatrix::from_triplets(4, 4, {{0, 0, 3}, {0, 1, 1}, {1, 0, 1}, {1, 1, 2}, {2, 2, 7}, {3, 3, 5}});
    SmootherSpec s(SmootherKind::block_jacobi, a, BlockPartition({0, 2, 4}));
    s.set_omega(1.0);
    const auto t = apply_prolongation_smoothing(a, s, SparseMatrix::identity(4));
    EXPECT_LE(t.max_abs(), 1e-15);
}
