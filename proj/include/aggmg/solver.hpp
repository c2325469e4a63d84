#pragma once

/// @file solver.hpp
/// V-cycle, stationary multigrid, preconditioned CG and left-preconditioned
/// restarted GMRES. All report convergence on the true relative residual
/// |f - A u| / |f| of the unpreconditioned system, from u_0 = 0.

#include <chrono>

#include "hierarchy.hpp"

namespace aggmg {

struct CycleConfig {
    std::size_t t_pre = 3;
    std::size_t t_post = 3;
    double tol = 1e-7;
    std::size_t max_iters = 500;
    std::size_t gmres_restart = 1000;

    void validate() const
    {
        if (!(tol > 0.0)) throw Error("cycle: tol must be positive");
        if (gmres_restart < 1) throw Error("cycle: gmres_restart must be at least 1");
    }
};

struct LevelSize {
    std::size_t dof = 0;
    std::size_t nnz = 0;
};

struct SolveReport {
    std::size_t iterations = 0;
    Vector residual_history;  ///< relative residuals, entry 0 = |f - A u_0| / |f|
    bool converged = false;
    std::string status;       ///< "converged", "max_iters", "stagnation", "breakdown"
    double wall_time = 0.0;
    std::vector<LevelSize> levels;

    double final_residual() const { return residual_history.empty() ? 0.0 : residual_history.back(); }
};

inline std::vector<LevelSize> level_sizes(const MgHierarchy& h)
{
    std::vector<LevelSize> out;
    for (const auto& lv : h.levels) out.push_back({lv.dof, lv.nnz});
    return out;
}

/// One V-cycle from level k on A_k u = b (zero initial guess).
inline Vector vcycle(const MgHierarchy& h, std::size_t k, std::span<const double> b, const CycleConfig& cfg)
{
    const Level& lv = h.levels.at(k);
    detail::require_dims(b.size() == lv.dof, "vcycle");
    if (k + 1 == h.levels.size()) return h.bottom.solve(b);

    const auto a = level_operator(h, k);
    Vector u = smooth(Vector(lv.dof, 0.0), a, lv.smoother, b, StopRule::fixed(cfg.t_pre)).x;
    Vector r(lv.dof);
    a(u, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    const Level& coarse = h.levels[k + 1];
    const Vector bc = spmv(coarse.r, r);
    const Vector uc = vcycle(h, k + 1, bc, cfg);
    spmv(coarse.t, uc, r);
    axpy(1.0, r, u);
    return smooth(std::move(u), a, lv.smoother, b, StopRule::fixed(cfg.t_post)).x;
}

inline Vector vcycle(const MgHierarchy& h, std::span<const double> b, const CycleConfig& cfg)
{
    return vcycle(h, 0, b, cfg);
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

/// u <- u + V(f - A u) until the relative residual drops below tol.
/// Stagnation (less than 1e-3 reduction over 10 cycles) ends the loop.
inline std::pair<Vector, SolveReport> solve_mg(const MgHierarchy& h, std::span<const double> f,
                                               const CycleConfig& cfg)
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = h.levels.at(0).dof;
    detail::require_dims(f.size() == n, "solve_mg");
    const SparseMatrix& a = *h.levels[0].a;
    SolveReport rep;
    rep.levels = level_sizes(h);
    Vector u(n, 0.0), r(f.begin(), f.end());
    const double fn = norm2(f);
    if (fn == 0.0) {
        rep.residual_history = {0.0};
        rep.converged = true;
        rep.status = "converged";
        return {u, rep};
    }
    rep.residual_history.push_back(1.0);
    rep.status = "max_iters";
    while (rep.iterations < cfg.max_iters) {
        if (rep.residual_history.back() < cfg.tol) break;
        const Vector c = vcycle(h, 0, r, cfg);
        axpy(1.0, c, u);
        spmv(a, u, r);
        for (std::size_t i = 0; i < n; ++i) r[i] = f[i] - r[i];
        ++rep.iterations;
        const double rel = norm2(r) / fn;
        if (!std::isfinite(rel)) throw ConvergenceError("solve_mg: residual became non-finite");
        rep.residual_history.push_back(rel);
        if (rep.iterations >= 10 &&
            rel > 1e-3 * rep.residual_history[rep.iterations - 10] && rel >= cfg.tol) {
            rep.status = "stagnation";
            break;
        }
    }
    rep.converged = rep.residual_history.back() < cfg.tol;
    if (rep.converged) rep.status = "converged";
    rep.wall_time = detail::seconds_since(t0);
    return {u, rep};
}

/// Preconditioned conjugate gradients. Throws on nonpositive curvature.
inline std::pair<Vector, SolveReport> pcg(const LinearOperator& a, const LinearOperator& m, std::span<const double> f,
                                          const CycleConfig& cfg)
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = f.size();
    SolveReport rep;
    Vector u(n, 0.0), r(f.begin(), f.end()), z(n), p(n), ap(n);
    const double fn = norm2(f);
    if (fn == 0.0) {
        rep.residual_history = {0.0};
        rep.converged = true;
        rep.status = "converged";
        return {u, rep};
    }
    rep.residual_history.push_back(1.0);
    rep.status = "max_iters";
    m(r, z);
    p = z;
    double rz = dot(r, z);
    while (rep.iterations < cfg.max_iters && rep.residual_history.back() >= cfg.tol) {
        a(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) throw ConvergenceError("pcg: nonpositive curvature <p, A p> = " + std::to_string(pap));
        const double alpha = rz / pap;
        axpy(alpha, p, u);
        axpy(-alpha, ap, r);
        ++rep.iterations;
        rep.residual_history.push_back(norm2(r) / fn);
        m(r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    // Report the true residual at exit.
    a(u, ap);
    for (std::size_t i = 0; i < n; ++i) ap[i] = f[i] - ap[i];
    rep.residual_history.back() = norm2(ap) / fn;
    rep.converged = rep.residual_history.back() < cfg.tol;
    if (rep.converged) rep.status = "converged";
    rep.wall_time = detail::seconds_since(t0);
    return {u, rep};
}

/// Left-preconditioned restarted GMRES (modified Gram-Schmidt with one
/// reorthogonalisation pass). The true residual is tracked each iteration
/// through stored A v_i, so convergence is judged on |f - A u| / |f|.
inline std::pair<Vector, SolveReport> pgmres(const LinearOperator& a, const LinearOperator& m,
                                             std::span<const double> f, const CycleConfig& cfg)
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = f.size();
    SolveReport rep;
    Vector u(n, 0.0);
    const double fn = norm2(f);
    if (fn == 0.0) {
        rep.residual_history = {0.0};
        rep.converged = true;
        rep.status = "converged";
        return {u, rep};
    }
    rep.residual_history.push_back(1.0);
    rep.status = "max_iters";
    Vector r(f.begin(), f.end()), w(n), tmp(n);

    while (rep.iterations < cfg.max_iters && rep.residual_history.back() >= cfg.tol) {
        const std::size_t mmax = std::min(cfg.gmres_restart, cfg.max_iters - rep.iterations);
        Vector z(n);
        m(r, z);
        const double beta = norm2(z);
        if (beta == 0.0) {
            rep.status = "breakdown";
            break;
        }
        std::vector<Vector> v{z}, av;
        scale(1.0 / beta, v[0]);
        DenseMatrix hess(mmax + 1, mmax);
        Vector cs(mmax), sn(mmax), g(mmax + 1, 0.0);
        g[0] = beta;
        Vector r0 = r;
        std::size_t j = 0;
        bool breakdown = false;
        Vector y;
        for (; j < mmax; ++j) {
            a(v[j], tmp);
            av.push_back(tmp);
            m(tmp, w);
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t i = 0; i <= j; ++i) {
                    const double hij = dot(w, v[i]);
                    hess(i, j) += hij;
                    axpy(-hij, v[i], w);
                }
            const double hn = norm2(w);
            hess(j + 1, j) = hn;
            for (std::size_t i = 0; i < j; ++i) {
                const double t = cs[i] * hess(i, j) + sn[i] * hess(i + 1, j);
                hess(i + 1, j) = -sn[i] * hess(i, j) + cs[i] * hess(i + 1, j);
                hess(i, j) = t;
            }
            const double den = std::hypot(hess(j, j), hess(j + 1, j));
            cs[j] = den == 0.0 ? 1.0 : hess(j, j) / den;
            sn[j] = den == 0.0 ? 0.0 : hess(j + 1, j) / den;
            hess(j, j) = den;
            hess(j + 1, j) = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];

            // y from the current triangular system, then r = r0 - sum y_i A v_i.
            y.assign(j + 1, 0.0);
            for (std::size_t ii = j + 1; ii-- > 0;) {
                double s = g[ii];
                for (std::size_t k = ii + 1; k <= j; ++k) s -= hess(ii, k) * y[k];
                y[ii] = hess(ii, ii) == 0.0 ? 0.0 : s / hess(ii, ii);
            }
            r = r0;
            for (std::size_t i = 0; i <= j; ++i) axpy(-y[i], av[i], r);
            ++rep.iterations;
            rep.residual_history.push_back(norm2(r) / fn);
            if (hn < 1e-14 * beta) {
                breakdown = true;
                ++j;
                break;
            }
            if (rep.residual_history.back() < cfg.tol) {
                ++j;
                break;
            }
            v.push_back(w);
            scale(1.0 / hn, v.back());
        }
        for (std::size_t i = 0; i < y.size(); ++i) axpy(y[i], v[i], u);
        if (breakdown) {
            rep.status = "breakdown";
            break;
        }
    }
    a(u, tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] - tmp[i];
    rep.residual_history.back() = norm2(tmp) / fn;
    rep.converged = rep.residual_history.back() < cfg.tol;
    if (rep.converged) rep.status = "converged";
    rep.wall_time = detail::seconds_since(t0);
    return {u, rep};
}

inline LinearOperator identity_operator()
{
    return [](std::span<const double> x, std::span<double> y) { std::copy(x.begin(), x.end(), y.begin()); };
}

inline LinearOperator vcycle_operator(const MgHierarchy& h, const CycleConfig& cfg)
{
    return [&h, cfg](std::span<const double> x, std::span<double> y) {
        const Vector v = vcycle(h, 0, x, cfg);
        std::copy(v.begin(), v.end(), y.begin());
    };
}

inline LinearOperator block_jacobi_operator(const BlockDiagonalInverse& d)
{
    return [&d](std::span<const double> x, std::span<double> y) {
        std::copy(x.begin(), x.end(), y.begin());
        d.apply_in_place(y);
    };
}

/// Homogeneous-problem probe: mean V-cycle error reduction factor over
/// `cycles` stationary cycles on A x = 0 from a seeded random start.
inline double quality_probe(const MgHierarchy& h, const CycleConfig& cfg, std::size_t cycles, std::uint64_t seed)
{
    const std::size_t n = h.levels.at(0).dof;
    const SparseMatrix& a = *h.levels[0].a;
    NormalStream normal(seed);
    Vector x(n);
    for (auto& v : x) v = normal();
    const double n0 = norm2(x);
    Vector r(n);
    for (std::size_t c = 0; c < cycles; ++c) {
        spmv(a, x, r);
        scale(-1.0, r);
        axpy(1.0, vcycle(h, 0, r, cfg), x);
    }
    return std::pow(norm2(x) / n0, 1.0 / static_cast<double>(std::max<std::size_t>(cycles, 1)));
}

} // namespace aggmg
