#pragma once

/// @file smoother.hpp
/// Damped relaxation x <- x + omega P(A)^{-1} (b - A x) with P(A) the
/// identity (Richardson), the block diagonal (block Jacobi) or the block lower
/// triangle (block Gauss-Seidel). omega = (4/3) / rho~ with rho~ a short power
/// iteration estimate of rho(P(A)^{-1} A).

#include <cstdint>
#include <functional>
#include <random>

#include "linalg.hpp"

namespace aggmg {

/// y = A x, with y.size() == rows.
using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

inline LinearOperator as_operator(const SparseMatrix& a)
{
    return [&a](std::span<const double> x, std::span<double> y) { spmv(a, x, y); };
}

enum class SmootherKind { richardson, block_jacobi, block_gauss_seidel };

inline std::string to_string(SmootherKind k)
{
    switch (k) {
    case SmootherKind::richardson: return "richardson";
    case SmootherKind::block_jacobi: return "block_jacobi";
    case SmootherKind::block_gauss_seidel: return "block_gauss_seidel";
    }
    return "?";
}

inline SmootherKind parse_smoother_kind(const std::string& s)
{
    if (s == "richardson") return SmootherKind::richardson;
    if (s == "block_jacobi" || s == "jacobi") return SmootherKind::block_jacobi;
    if (s == "block_gauss_seidel" || s == "gauss_seidel") return SmootherKind::block_gauss_seidel;
    throw Error("unknown smoother kind '" + s + "'");
}

/// Seeded standard-normal stream; fixed engine so runs are reproducible.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
    double operator()() { return dist_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Factored P(A) plus the damping parameter.
class SmootherSpec {
public:
    SmootherSpec() = default;

    SmootherSpec(SmootherKind kind, const SparseMatrix& a, BlockPartition blocks)
        : kind_(kind), blocks_(std::move(blocks)), n_(a.rows())
    {
        detail::require_dims(a.rows() == a.cols(), "smoother of non-square matrix");
        if (kind_ == SmootherKind::richardson) {
            blocks_ = BlockPartition::uniform(n_, 1);
            return;
        }
        detail::require_dims(blocks_.dimension() == n_, "smoother block partition");
        diag_ = BlockDiagonalInverse(a, blocks_);
        if (kind_ == SmootherKind::block_gauss_seidel) lower_ = strict_block_lower(a, blocks_);
    }

    SmootherKind kind() const noexcept { return kind_; }
    double omega() const noexcept { return omega_; }
    double rho_estimate() const noexcept { return rho_; }
    const BlockPartition& blocks() const noexcept { return blocks_; }
    std::size_t dimension() const noexcept { return n_; }

    /// omega = (4/3) / rho.
    void set_rho(double rho)
    {
        if (!(rho > 0.0) || !std::isfinite(rho)) throw Error("smoother: spectral radius estimate must be positive");
        rho_ = rho;
        omega_ = (4.0 / 3.0) / rho;
    }

    void set_omega(double omega)
    {
        if (!(omega >= 0.0) || !std::isfinite(omega)) throw Error("smoother: omega must be finite and nonnegative");
        omega_ = omega;
    }

    /// z = P(A)^{-1} r (in place).
    void precondition_in_place(std::span<double> r) const
    {
        detail::require_dims(r.size() == n_, "smoother apply");
        switch (kind_) {
        case SmootherKind::richardson: return;
        case SmootherKind::block_jacobi: diag_.apply_in_place(r); return;
        case SmootherKind::block_gauss_seidel: forward_solve(r); return;
        }
    }

    /// Applies the inverse of diagonal block b alone (block Jacobi only).
    void precondition_block(std::size_t b, std::span<double> r) const
    {
        if (kind_ != SmootherKind::block_jacobi) throw Error("precondition_block: block Jacobi only");
        diag_.block(b).solve_in_place(r);
    }

    Vector precondition(std::span<const double> r) const
    {
        Vector z(r.begin(), r.end());
        precondition_in_place(z);
        return z;
    }

private:
    static SparseMatrix strict_block_lower(const SparseMatrix& a, const BlockPartition& blocks)
    {
        std::vector<std::size_t> offsets(a.rows() + 1, 0), cols;
        Vector vals;
        for (std::size_t b = 0; b < blocks.n_blocks(); ++b)
            for (std::size_t i = blocks.begin(b); i < blocks.end(b); ++i) {
                auto c = a.row_cols(i);
                auto v = a.row_values(i);
                for (std::size_t k = 0; k < c.size() && c[k] < blocks.begin(b); ++k) {
                    cols.push_back(c[k]);
                    vals.push_back(v[k]);
                }
                offsets[i + 1] = cols.size();
            }
        return SparseMatrix(a.rows(), a.cols(), std::move(offsets), std::move(cols), std::move(vals));
    }

    void forward_solve(std::span<double> r) const
    {
        for (std::size_t b = 0; b < blocks_.n_blocks(); ++b) {
            for (std::size_t i = blocks_.begin(b); i < blocks_.end(b); ++i) {
                auto c = lower_.row_cols(i);
                auto v = lower_.row_values(i);
                double s = r[i];
                for (std::size_t k = 0; k < c.size(); ++k) s -= v[k] * r[c[k]];
                r[i] = s;
            }
            diag_.block(b).solve_in_place(r.subspan(blocks_.begin(b), blocks_.size(b)));
        }
    }

    SmootherKind kind_ = SmootherKind::block_jacobi;
    BlockPartition blocks_;
    std::size_t n_ = 0;
    BlockDiagonalInverse diag_;
    SparseMatrix lower_;
    double omega_ = 1.0;
    double rho_ = 1.0;
};

/// Power iteration for rho(P(A)^{-1} A): q normalised steps from a seeded
/// unit Gaussian vector, then one more application whose norm is returned.
inline double estimate_rho(const LinearOperator& a, const SmootherSpec& s, int q, std::uint64_t seed)
{
    if (q < 0) throw Error("estimate_rho: q must be nonnegative");
    const std::size_t n = s.dimension();
    if (n == 0) return 1.0;
    NormalStream normal(seed);
    Vector x(n), y(n);
    for (auto& v : x) v = normal();
    scale(1.0 / norm2(x), x);
    for (int i = 0; i < q; ++i) {
        a(x, y);
        s.precondition_in_place(y);
        const double ny = norm2(y);
        if (!std::isfinite(ny)) throw ConvergenceError("estimate_rho: non-finite iterate");
        if (ny == 0.0) return 0.0;
        for (std::size_t j = 0; j < n; ++j) x[j] = y[j] / ny;
    }
    a(x, y);
    s.precondition_in_place(y);
    return norm2(y);
}

inline double estimate_rho(const SparseMatrix& a, const SmootherSpec& s, int q, std::uint64_t seed)
{
    return estimate_rho(as_operator(a), s, q, seed);
}

/// Factors P(A) and sets omega = (4/3)/rho~.
inline SmootherSpec build_smoother(const SparseMatrix& a, SmootherKind kind, const BlockPartition& blocks,
                                   std::uint64_t seed, int q = 3)
{
    SmootherSpec s(kind, a, blocks);
    const double rho = estimate_rho(a, s, q, seed);
    if (!(rho > 0.0)) throw Error("build_smoother: zero spectral radius estimate (A annihilates the start vector)");
    s.set_rho(rho);
    return s;
}

struct StopRule {
    enum class Kind { fixed_count, stagnation };
    Kind kind = Kind::fixed_count;
    std::size_t count = 3;
    double gamma = 0.03;
    std::size_t cap = 100;

    static StopRule fixed(std::size_t t) { return StopRule{Kind::fixed_count, t, 0.03, 100}; }
    static StopRule stagnation(double gamma, std::size_t cap = 100)
    {
        if (!(gamma > 0.0)) throw Error("stagnation tolerance must be positive");
        return StopRule{Kind::stagnation, 0, gamma, cap};
    }
};

struct SmoothResult {
    Vector x;
    std::size_t iterations = 0;
};

/// Runs the relaxation. Under the stagnation rule b must be zero; x is
/// renormalised after every sweep and the loop stops once
/// |x_{m-1}| / |x_m| < 1 + gamma, or after `cap` sweeps.
inline SmoothResult smooth(Vector x, const LinearOperator& a, const SmootherSpec& s, std::span<const double> b,
                           const StopRule& stop)
{
    const std::size_t n = s.dimension();
    detail::require_dims(x.size() == n && b.size() == n, "smooth");
    Vector r(n);
    const double omega = s.omega();
    auto sweep = [&](std::size_t m) {
        a(x, r);
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
        s.precondition_in_place(r);
        for (std::size_t i = 0; i < n; ++i) x[i] += omega * r[i];
        if (!all_finite(x)) throw ConvergenceError("smoother diverged at sweep " + std::to_string(m));
    };

    SmoothResult out;
    if (stop.kind == StopRule::Kind::fixed_count) {
        for (std::size_t m = 1; m <= stop.count; ++m) sweep(m);
        out.iterations = stop.count;
        out.x = std::move(x);
        return out;
    }

    if (std::any_of(b.begin(), b.end(), [](double v) { return v != 0.0; }))
        throw Error("smooth: the stagnation rule applies to the homogeneous problem only");
    double prev = norm2(x);
    if (prev == 0.0) {
        out.x = std::move(x);
        return out;
    }
    for (std::size_t m = 1; m <= stop.cap; ++m) {
        sweep(m);
        out.iterations = m;
        const double cur = norm2(x);
        if (cur == 0.0) break;
        scale(1.0 / cur, x);
        if (prev / cur < 1.0 + stop.gamma) break;
        prev = 1.0;
    }
    out.x = std::move(x);
    return out;
}

inline SmoothResult smooth(Vector x, const SparseMatrix& a, const SmootherSpec& s, std::span<const double> b,
                           const StopRule& stop)
{
    return smooth(std::move(x), as_operator(a), s, b, stop);
}

/// T = (I - omega P(A)^{-1} A) P_tent, assembled sparse.
inline SparseMatrix apply_prolongation_smoothing(const SparseMatrix& a, const SmootherSpec& s,
                                                 const SparseMatrix& p_tent)
{
    detail::require_dims(a.cols() == p_tent.rows() && a.rows() == s.dimension(), "prolongation smoothing");
    if (s.omega() == 0.0) return p_tent;
    const SparseMatrix ap = sparse_product(a, p_tent);
    const std::size_t n = ap.rows();
    SparseMatrix z;

    if (s.kind() == SmootherKind::block_gauss_seidel) {
        // Triangular solve column by column; fill propagates downstream.
        const SparseMatrix apt = transpose(ap);
        std::vector<Triplet> t;
        Vector col(n);
        for (std::size_t j = 0; j < apt.rows(); ++j) {
            std::fill(col.begin(), col.end(), 0.0);
            auto c = apt.row_cols(j);
            auto v = apt.row_values(j);
            for (std::size_t k = 0; k < c.size(); ++k) col[c[k]] = v[k];
            s.precondition_in_place(col);
            for (std::size_t i = 0; i < n; ++i)
                if (col[i] != 0.0) t.push_back({i, j, col[i]});
        }
        z = SparseMatrix::from_triplets(n, ap.cols(), std::move(t));
    } else {
        // Block rows of AP are independent: gather each block's column
        // pattern, apply the block inverse densely and scatter back.
        const auto& blocks = s.blocks();
        std::vector<std::size_t> offsets(n + 1, 0), cols;
        Vector vals;
        std::vector<std::size_t> pattern;
        for (std::size_t b = 0; b < blocks.n_blocks(); ++b) {
            const std::size_t r0 = blocks.begin(b), r1 = blocks.end(b);
            pattern.clear();
            for (std::size_t i = r0; i < r1; ++i)
                for (auto c : ap.row_cols(i)) pattern.push_back(c);
            std::sort(pattern.begin(), pattern.end());
            pattern.erase(std::unique(pattern.begin(), pattern.end()), pattern.end());
            DenseMatrix d(r1 - r0, pattern.size());
            for (std::size_t i = r0; i < r1; ++i) {
                auto c = ap.row_cols(i);
                auto v = ap.row_values(i);
                std::size_t q = 0;
                for (std::size_t k = 0; k < c.size(); ++k) {
                    while (pattern[q] < c[k]) ++q;
                    d(i - r0, q) = v[k];
                }
            }
            if (s.kind() == SmootherKind::block_jacobi)
                for (std::size_t j = 0; j < pattern.size(); ++j) s.precondition_block(b, d.column(j));
            for (std::size_t i = r0; i < r1; ++i) {
                for (std::size_t j = 0; j < pattern.size(); ++j) {
                    cols.push_back(pattern[j]);
                    vals.push_back(d(i - r0, j));
                }
                offsets[i + 1] = cols.size();
            }
        }
        z = SparseMatrix(n, ap.cols(), std::move(offsets), std::move(cols), std::move(vals));
    }
    return sparse_add(1.0, p_tent, -s.omega(), z);
}

} // namespace aggmg
