#pragma once

/// @file hierarchy.hpp
/// Adaptive smoothed-aggregation setup on a geometric aggregate hierarchy.
///
/// Level k+1 is built from level k by
///   1. smoothing the candidate columns B^k on A_k x = 0,
///   2. splitting B^k by coarse aggregate and keeping s_j left singular
///      vectors per aggregate (tentative prolongator P, block orthonormal),
///   3. T = (I - omega P(A_k)^{-1} A_k) P,  R = T^T,
///   4. A_{k+1} = R A_k T,  B^{k+1} = R B^k.
/// An aggregate that equals its only child (h* step) keeps the singular
/// vectors above delta * sigma_1; otherwise (h step) it keeps
/// ceil(dofs / n_cut) of them.

#include <cstdint>
#include <iostream>
#include <optional>

#include "json.hpp"
#include "parallel.hpp"
#include "partition.hpp"
#include "smoother.hpp"

namespace aggmg {

/// SplitMix64 of (seed, stream); independent per-level random streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct SetupConfig {
    double gamma = 0.03;
    double delta = 1e-3;
    std::optional<std::size_t> n_cut;  ///< default 2^d - (d - 1)
    std::size_t kappa = 2;
    std::uint64_t seed = 0;
    bool hstar_top = false;
    /// Smooth the prolongator of intra-aggregate (h*) steps too. Off by
    /// default: the h* transfer stays block diagonal, so A_{k+1} keeps the
    /// face-neighbour block pattern of A_k.
    bool smooth_hstar = false;
    SmootherKind smoother = SmootherKind::block_jacobi;
    int q = 3;
    std::size_t sweep_cap = 100;
    /// Candidate count; the median dof count of the first-level aggregates when unset.
    std::optional<std::size_t> candidates;

    std::size_t resolved_n_cut(int dimension) const
    {
        return n_cut ? *n_cut : (std::size_t{1} << dimension) - static_cast<std::size_t>(dimension - 1);
    }

    void validate() const
    {
        if (!(gamma > 0.0)) throw Error("setup: gamma must be positive");
        if (!(delta > 0.0 && delta < 1.0)) throw Error("setup: delta must lie in (0, 1)");
        if (n_cut && *n_cut < 1) throw Error("setup: n_cut must be at least 1");
        if (q < 0) throw Error("setup: q must be nonnegative");
        if (candidates && *candidates < 1) throw Error("setup: candidate count must be at least 1");
    }
};

struct Level {
    std::optional<SparseMatrix> a;  ///< absent on matrix-free levels
    SmootherSpec smoother;          ///< unused on the bottom level
    bool has_smoother = false;
    SparseMatrix t;                 ///< this level -> next finer (absent at level 0)
    SparseMatrix r;                 ///< next finer -> this level, r = t^T
    DenseMatrix b;                  ///< smoothed candidates (empty on the bottom level)
    BlockPartition blocks;          ///< one block per aggregate
    std::vector<std::size_t> kept;  ///< s_j per block (coarse levels)
    bool is_hstar = false;          ///< produced by an intra-aggregate step
    std::size_t dof = 0;
    std::size_t nnz = 0;
    std::size_t candidate_sweeps = 0;  ///< max stagnation sweeps over columns

    bool implicit() const { return !a.has_value(); }
};

struct MgHierarchy {
    std::vector<Level> levels;
    AggregateHierarchy aggregates;
    std::size_t kappa = 0;
    std::size_t n_candidates = 0;
    std::size_t n_cut = 0;
    DenseLU bottom;
    std::vector<std::string> warnings;

    std::size_t n_levels() const { return levels.size(); }
    const Level& level(std::size_t k) const { return levels.at(k); }
    std::size_t dof(std::size_t k) const { return levels.at(k).dof; }
};

// ---------------------------------------------------------------------------

/// Median (upper middle for even counts) dof count over the first-level
/// aggregates; the single element's dof count for a one-element mesh.
inline std::size_t median_aggregate_dofs(const ElementGraph& graph, const AggregateHierarchy& h)
{
    if (h.n_levels() < 2) return graph.dof_count(0);
    std::vector<std::size_t> dofs(h.counts[1], 0);
    for (std::size_t e = 0; e < graph.n_elements(); ++e) dofs[h.labels[1][e]] += graph.dof_count(e);
    std::sort(dofs.begin(), dofs.end());
    return dofs[dofs.size() / 2];
}

/// n x r standard-normal matrix, filled column by column.
inline DenseMatrix init_candidates(std::size_t n, std::size_t r, std::uint64_t seed)
{
    DenseMatrix b(n, r);
    NormalStream normal(seed);
    for (auto& v : b.values()) v = normal();
    return b;
}

inline DenseMatrix init_candidates(const ElementGraph& graph, const AggregateHierarchy& h, std::uint64_t seed)
{
    return init_candidates(graph.total_dofs(), median_aggregate_dofs(graph, h), seed);
}

/// Smooths every column on A x = 0 under the stagnation rule; columns come
/// back with unit norm. Returns the largest sweep count used.
inline std::size_t smooth_candidates(DenseMatrix& b, const LinearOperator& a, const SmootherSpec& s, double gamma,
                                     std::size_t cap = 100)
{
    detail::require_dims(b.rows() == s.dimension(), "smooth_candidates");
    const Vector zero(b.rows(), 0.0);
    const auto rule = StopRule::stagnation(gamma, cap);
    std::vector<std::size_t> sweeps(b.cols(), 0);
    parallel_for(b.cols(), [&](std::size_t j) {
        auto col = b.column(j);
        auto res = smooth(Vector(col.begin(), col.end()), a, s, zero, rule);
        std::copy(res.x.begin(), res.x.end(), col.begin());
        sweeps[j] = res.iterations;
    });
    return sweeps.empty() ? 0 : *std::max_element(sweeps.begin(), sweeps.end());
}

/// Same result as the operator overload, bit for bit, but sweeps up to
/// `batch` columns per pass over A (interleaved storage), which is what
/// dominates setup time.
inline std::size_t smooth_candidates(DenseMatrix& b, const SparseMatrix& a, const SmootherSpec& s, double gamma,
                                     std::size_t cap = 100, std::size_t batch = 16)
{
    detail::require_dims(b.rows() == s.dimension() && a.rows() == b.rows(), "smooth_candidates");
    if (!(gamma > 0.0)) throw Error("stagnation tolerance must be positive");
    const std::size_t n = b.rows();
    const std::size_t n_batches = (b.cols() + batch - 1) / std::max<std::size_t>(batch, 1);
    std::vector<std::size_t> sweeps(b.cols(), 0);
    const double omega = s.omega();
    const auto ro = a.row_offsets();
    const auto ci = a.col_indices();
    const auto va = a.values();

    parallel_for(n_batches, [&](std::size_t bi) {
        std::vector<std::size_t> active;
        std::vector<double> prev;
        for (std::size_t j = bi * batch; j < std::min(b.cols(), (bi + 1) * batch); ++j) {
            const double nj = norm2(b.column(j));
            if (nj > 0.0) {
                active.push_back(j);
                prev.push_back(nj);
            }
        }
        Vector x, r, col(n);
        for (std::size_t m = 1; m <= cap && !active.empty(); ++m) {
            const std::size_t w = active.size();
            x.assign(n * w, 0.0);
            r.assign(n * w, 0.0);
            for (std::size_t c = 0; c < w; ++c) {
                auto src = b.column(active[c]);
                for (std::size_t i = 0; i < n; ++i) x[i * w + c] = src[i];
            }
            for (std::size_t i = 0; i < n; ++i) {
                double* ri = &r[i * w];
                for (std::size_t k = ro[i]; k < ro[i + 1]; ++k) {
                    const double v = va[k];
                    const double* xk = &x[ci[k] * w];
                    for (std::size_t c = 0; c < w; ++c) ri[c] += v * xk[c];
                }
            }
            std::vector<std::size_t> still;
            std::vector<double> still_prev;
            for (std::size_t c = 0; c < w; ++c) {
                const std::size_t j = active[c];
                for (std::size_t i = 0; i < n; ++i) col[i] = 0.0 - r[i * w + c];
                s.precondition_in_place(col);
                auto dst = b.column(j);
                for (std::size_t i = 0; i < n; ++i) dst[i] += omega * col[i];
                if (!all_finite(dst)) throw ConvergenceError("smoother diverged at sweep " + std::to_string(m));
                sweeps[j] = m;
                const double cur = norm2(dst);
                if (cur == 0.0) continue;
                scale(1.0 / cur, dst);
                if (prev[c] / cur < 1.0 + gamma) continue;
                still.push_back(j);
                still_prev.push_back(1.0);
            }
            active.swap(still);
            prev.swap(still_prev);
        }
    });
    return sweeps.empty() ? 0 : *std::max_element(sweeps.begin(), sweeps.end());
}

enum class CoarseningMode { h, hstar };

struct TentativeProlongator {
    SparseMatrix p;
    std::vector<std::size_t> kept;
    std::vector<std::string> warnings;
};

/// Singular values above max(m, k) * eps * sigma_1 (m block rows, k values).
inline std::size_t numerical_rank(std::span<const double> sigma, std::size_t block_dofs)
{
    if (sigma.empty() || !(sigma[0] > 0.0)) return 0;
    const double tol = static_cast<double>(std::max(block_dofs, sigma.size())) *
                       std::numeric_limits<double>::epsilon() * sigma[0];
    std::size_t rank = 0;
    while (rank < sigma.size() && sigma[rank] > tol) ++rank;
    return rank;
}

/// Column count kept for one aggregate block with singular values sigma.
/// h: ceil(dofs / n_cut), at least 1, at most the column count of the block.
/// h*: #{sigma > delta sigma_1}, at least 1.
inline std::size_t kept_columns(std::span<const double> sigma, std::size_t block_dofs, CoarseningMode mode,
                                std::size_t n_cut, double delta)
{
    if (sigma.empty() || !(sigma[0] > 0.0)) return 0;
    if (mode == CoarseningMode::hstar) {
        std::size_t s = 0;
        while (s < sigma.size() && sigma[s] > delta * sigma[0]) ++s;
        return std::max<std::size_t>(1, s);
    }
    const std::size_t target = std::max<std::size_t>(1, (block_dofs + n_cut - 1) / n_cut);
    return std::min(target, sigma.size());
}

namespace detail {

/// Appends unit vectors e_0, e_1, ... orthogonalised against the columns of
/// q (two Gram-Schmidt passes) until q has `target` columns.
inline DenseMatrix pad_with_identity(const DenseMatrix& q, std::size_t target)
{
    const std::size_t m = q.rows();
    DenseMatrix out(m, target);
    std::size_t c = 0;
    for (; c < q.cols(); ++c) std::copy(q.column(c).begin(), q.column(c).end(), out.column(c).begin());
    for (std::size_t e = 0; e < m && c < target; ++e) {
        Vector v(m, 0.0);
        v[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t k = 0; k < c; ++k) axpy(-dot(out.column(k), v), out.column(k), v);
        const double nv = norm2(v);
        if (nv < 1e-3) continue;
        scale(1.0 / nv, v);
        std::copy(v.begin(), v.end(), out.column(c).begin());
        ++c;
    }
    if (c < target) throw Error("pad_with_identity: cannot complete the basis");
    return out;
}

} // namespace detail

/// Block-diagonal orthonormal P. `groups[j]` lists the fine blocks forming
/// coarse aggregate j (ascending); `modes[j]` picks the truncation rule.
/// Coarse columns are ordered aggregate-major.
inline TentativeProlongator tentative_prolongator(const DenseMatrix& b, const BlockPartition& fine_blocks,
                                                  const std::vector<std::vector<std::size_t>>& groups,
                                                  const std::vector<CoarseningMode>& modes, std::size_t n_cut,
                                                  double delta)
{
    detail::require_dims(b.rows() == fine_blocks.dimension(), "tentative_prolongator: candidate rows");
    detail::require_dims(groups.size() == modes.size(), "tentative_prolongator: modes");
    if (n_cut < 1) throw Error("tentative_prolongator: n_cut must be at least 1");
    const std::size_t n_agg = groups.size();
    std::vector<std::vector<std::size_t>> rows(n_agg);
    for (std::size_t j = 0; j < n_agg; ++j)
        for (auto fb : groups[j])
            for (std::size_t i = fine_blocks.begin(fb); i < fine_blocks.end(fb); ++i) rows[j].push_back(i);

    std::vector<DenseMatrix> basis(n_agg);
    std::vector<std::string> warn(n_agg);
    std::vector<char> padded(n_agg, 0);
    parallel_for(n_agg, [&](std::size_t j) {
        const std::size_t m = rows[j].size();
        DenseMatrix block(m, b.cols());
        for (std::size_t c = 0; c < b.cols(); ++c) {
            auto col = b.column(c);
            for (std::size_t i = 0; i < m; ++i) block(i, c) = col[rows[j][i]];
        }
        std::size_t s = 0;
        Svd dec;
        if (m > 0 && b.cols() > 0 && block.max_abs() > 0.0) {
            dec = svd(block);
            s = kept_columns(dec.sigma, m, modes[j], n_cut, delta);
        }
        if (s == 0) {
            // Zero candidate block: keep the first unit vector.
            basis[j] = DenseMatrix(m, 1);
            if (m > 0) basis[j](0, 0) = 1.0;
            warn[j] = "aggregate " + std::to_string(j) + ": zero candidate block, identity column used";
            return;
        }
        const std::size_t good = std::min(s, numerical_rank(dec.sigma, m));
        DenseMatrix u(m, good);
        for (std::size_t c = 0; c < good; ++c) {
            auto src = dec.u.column(c);
            std::copy(src.begin(), src.end(), u.column(c).begin());
        }
        if (good < s) {
            // Rank-deficient candidates: complete with identity directions.
            basis[j] = detail::pad_with_identity(u, s);
            padded[j] = 1;
        } else {
            basis[j] = std::move(u);
        }
    });

    TentativeProlongator out;
    out.kept.resize(n_agg);
    std::vector<Triplet> t;
    std::size_t col0 = 0;
    for (std::size_t j = 0; j < n_agg; ++j) {
        out.kept[j] = basis[j].cols();
        for (std::size_t c = 0; c < basis[j].cols(); ++c)
            for (std::size_t i = 0; i < rows[j].size(); ++i) t.push_back({rows[j][i], col0 + c, basis[j](i, c)});
        col0 += basis[j].cols();
        if (!warn[j].empty()) out.warnings.push_back(warn[j]);
    }
    out.p = SparseMatrix::from_triplets(b.rows(), col0, std::move(t));
    const auto n_padded = static_cast<std::size_t>(std::count(padded.begin(), padded.end(), 1));
    if (n_padded > 0)
        out.warnings.push_back(std::to_string(n_padded) + " of " + std::to_string(n_agg) +
                               " aggregates have rank-deficient candidates; padded with identity columns");
    return out;
}

// ---------------------------------------------------------------------------

namespace detail {

/// One coarsening step: fine block -> coarse aggregate map.
struct CoarseningStep {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<CoarseningMode> modes;
};

inline std::vector<CoarseningStep> coarsening_steps(const AggregateHierarchy& h, bool hstar_top)
{
    std::vector<CoarseningStep> steps;
    if (hstar_top) {
        CoarseningStep s;
        for (std::size_t e = 0; e < h.counts[0]; ++e) s.groups.push_back({e});
        s.modes.assign(h.counts[0], CoarseningMode::hstar);
        steps.push_back(std::move(s));
    }
    for (std::size_t k = 0; k + 1 < h.n_levels(); ++k) {
        CoarseningStep s;
        s.groups = h.children(k);
        for (const auto& g : s.groups)
            s.modes.push_back(g.size() == 1 ? CoarseningMode::hstar : CoarseningMode::h);
        steps.push_back(std::move(s));
    }
    return steps;
}

} // namespace detail

/// y = A_k x. Matrix-free levels prolong to level 0, apply A_0 and restrict back.
inline void apply_level_operator(const MgHierarchy& h, std::size_t k, std::span<const double> x, std::span<double> y)
{
    const Level& lv = h.levels.at(k);
    detail::require_dims(x.size() == lv.dof && y.size() == lv.dof, "apply_level_operator");
    if (lv.a) {
        spmv(*lv.a, x, y);
        return;
    }
    std::vector<Vector> up(k + 1);
    up[k].assign(x.begin(), x.end());
    for (std::size_t j = k; j > 0; --j) up[j - 1] = spmv(h.levels[j].t, up[j]);
    Vector v = spmv(*h.levels[0].a, up[0]);
    for (std::size_t j = 1; j < k; ++j) v = spmv(h.levels[j].r, v);
    spmv(h.levels[k].r, v, y);
}

inline Vector apply_level_operator(const MgHierarchy& h, std::size_t k, std::span<const double> x)
{
    Vector y(h.levels.at(k).dof);
    apply_level_operator(h, k, x, y);
    return y;
}

inline LinearOperator level_operator(const MgHierarchy& h, std::size_t k)
{
    return [&h, k](std::span<const double> x, std::span<double> y) { apply_level_operator(h, k, x, y); };
}

/// Full setup. Levels 1 <= k < kappa keep only their transfer operators and
/// smoother; their A_k is applied through the chain R A_0 T.
inline MgHierarchy build(const SparseMatrix& a0, const ElementGraph& graph, const AggregateHierarchy& aggregates,
                         const SetupConfig& cfg)
{
    cfg.validate();
    detail::require_dims(a0.rows() == a0.cols(), "build: A_0 must be square");
    detail::require_dims(a0.rows() == graph.total_dofs(), "build: A_0 vs graph dofs");
    detail::require_dims(aggregates.n_elements() == graph.n_elements(), "build: aggregates vs graph");

    MgHierarchy h;
    h.aggregates = aggregates;
    h.kappa = cfg.kappa;
    h.n_cut = cfg.resolved_n_cut(aggregates.dimension);
    h.n_candidates = cfg.candidates ? *cfg.candidates : median_aggregate_dofs(graph, aggregates);

    const auto steps = detail::coarsening_steps(aggregates, cfg.hstar_top);
    h.levels.resize(steps.size() + 1);
    {
        Level& l0 = h.levels[0];
        l0.a = a0;
        l0.blocks = graph.dof_blocks();
        l0.dof = a0.rows();
        l0.nnz = a0.nnz();
    }

    DenseMatrix b = init_candidates(a0.rows(), h.n_candidates, derive_seed(cfg.seed, 0));
    SparseMatrix a_k = a0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        Level& lv = h.levels[k];
        Level& next = h.levels[k + 1];
        lv.smoother = build_smoother(a_k, cfg.smoother, lv.blocks, derive_seed(cfg.seed, 2 * k + 1), cfg.q);
        lv.has_smoother = true;
        lv.candidate_sweeps = smooth_candidates(b, a_k, lv.smoother, cfg.gamma, cfg.sweep_cap);

        auto tp = tentative_prolongator(b, lv.blocks, steps[k].groups, steps[k].modes, h.n_cut, cfg.delta);
        for (auto& w : tp.warnings) h.warnings.push_back("level " + std::to_string(k + 1) + ": " + w);

        next.is_hstar = std::all_of(steps[k].modes.begin(), steps[k].modes.end(),
                                    [](CoarseningMode m) { return m == CoarseningMode::hstar; });
        next.t = next.is_hstar && !cfg.smooth_hstar ? tp.p : apply_prolongation_smoothing(a_k, lv.smoother, tp.p);
        next.r = transpose(next.t);
        next.blocks = BlockPartition::from_sizes(tp.kept);
        next.kept = std::move(tp.kept);

        SparseMatrix a_next = sparse_product(next.r, sparse_product(a_k, next.t));
        DenseMatrix b_next = spmm(next.r, b);
        lv.b = std::move(b);
        b = std::move(b_next);

        next.dof = a_next.rows();
        next.nnz = a_next.nnz();
        const bool matrix_free = k + 1 < cfg.kappa && k + 1 < steps.size();
        if (!matrix_free) next.a = a_next;
        a_k = std::move(a_next);
    }

    const Level& last = h.levels.back();
    try {
        h.bottom = DenseLU(last.a->to_dense());
    } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(std::string("bottom level operator is singular: ") + e.what());
    }
    for (const auto& w : h.warnings) std::cerr << "warning: " << w << '\n';
    return h;
}

/// Builds the geometric aggregate hierarchy first.
inline MgHierarchy build(const SparseMatrix& a0, const ElementGraph& graph, int dimension, const SetupConfig& cfg)
{
    return build(a0, graph, build_hierarchy(graph, dimension), cfg);
}

/// Per-level {k, dof, nnz, is_hstar, implicit, omega, rho_estimate}.
inline nlohmann::json hierarchy_summary(const MgHierarchy& h)
{
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t k = 0; k < h.levels.size(); ++k) {
        const Level& lv = h.levels[k];
        nlohmann::json j{{"k", k},
                         {"dof", lv.dof},
                         {"nnz", lv.nnz},
                         {"is_hstar", lv.is_hstar},
                         {"implicit", lv.implicit()}};
        if (lv.has_smoother) {
            j["omega"] = lv.smoother.omega();
            j["rho_estimate"] = lv.smoother.rho_estimate();
            j["candidate_sweeps"] = lv.candidate_sweeps;
        } else {
            j["omega"] = nullptr;
            j["rho_estimate"] = nullptr;
            j["candidate_sweeps"] = nullptr;
        }
        levels.push_back(std::move(j));
    }
    return nlohmann::json{{"levels", levels},
                          {"n_candidates", h.n_candidates},
                          {"n_cut", h.n_cut},
                          {"kappa", h.kappa},
                          {"warnings", h.warnings}};
}

} // namespace aggmg
