#pragma once

/// @file dg.hpp
/// Discontinuous Galerkin assembly on structured Cartesian meshes.
///
/// Basis: tensor-product Lagrange polynomials of degree p on Gauss-Lobatto
/// nodes (the element midpoint for p = 0). Bilinear forms use Gauss-Legendre
/// quadrature with p+1 points per axis, right-hand sides p+2.
///
/// Supported operators
///   poisson_ip            symmetric interior penalty, -div(mu grad u)
///   poisson_ldg           minimal-dissipation LDG; u-hat from the upper
///                         (+axis) side, q-hat from the lower side, penalty
///                         only on Dirichlet faces
///   convection            v . grad u with the upwind (Godunov) flux
///   convection_diffusion  LDG diffusion plus upwind convection

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>

#include "meshgraph.hpp"

namespace aggmg {

enum class ProblemKind { poisson_ip, poisson_ldg, convection, convection_diffusion };
enum class BoundaryType { dirichlet, neumann };

inline std::string to_string(ProblemKind k)
{
    switch (k) {
    case ProblemKind::poisson_ip: return "poisson_ip";
    case ProblemKind::poisson_ldg: return "poisson_ldg";
    case ProblemKind::convection: return "convection";
    case ProblemKind::convection_diffusion: return "convection_diffusion";
    }
    return "?";
}

inline std::ostream& operator<<(std::ostream& out, ProblemKind k) { return out << to_string(k); }

inline ProblemKind parse_problem_kind(const std::string& s)
{
    if (s == "poisson_ip") return ProblemKind::poisson_ip;
    if (s == "poisson_ldg") return ProblemKind::poisson_ldg;
    if (s == "convection") return ProblemKind::convection;
    if (s == "convection_diffusion") return ProblemKind::convection_diffusion;
    throw Error("unknown problem kind '" + s + "'");
}

using Point = std::array<double, 3>;

/// u = exp(prod_a sin(pi x_a)) - 1 over the first d coordinates.
struct ManufacturedSolution {
    int dimension = 3;

    double value(const Point& x) const { return std::exp(s(x)) - 1.0; }

    Point gradient(const Point& x) const
    {
        Point g{0.0, 0.0, 0.0};
        const double e = std::exp(s(x));
        for (int a = 0; a < dimension; ++a) g[idx(a)] = e * ds(x, a);
        return g;
    }

    double laplacian(const Point& x) const
    {
        const double sv = s(x);
        double grad2 = 0.0;
        for (int a = 0; a < dimension; ++a) grad2 += ds(x, a) * ds(x, a);
        const double lap_s = -static_cast<double>(dimension) * std::numbers::pi * std::numbers::pi * sv;
        return std::exp(sv) * (grad2 + lap_s);
    }

private:
    static std::size_t idx(int a) { return static_cast<std::size_t>(a); }
    double s(const Point& x) const
    {
        double p = 1.0;
        for (int a = 0; a < dimension; ++a) p *= std::sin(std::numbers::pi * x[idx(a)]);
        return p;
    }
    double ds(const Point& x, int a) const
    {
        double p = std::numbers::pi * std::cos(std::numbers::pi * x[idx(a)]);
        for (int b = 0; b < dimension; ++b)
            if (b != a) p *= std::sin(std::numbers::pi * x[idx(b)]);
        return p;
    }
};

struct ProblemSpec {
    ProblemKind kind = ProblemKind::poisson_ip;
    CartesianMeshSpec mesh;
    double diffusion = 1.0;
    Point velocity{0.0, 0.0, 0.0};
    /// Per domain side, ordered (axis 0 lower, axis 0 upper, axis 1 lower, ...).
    std::array<BoundaryType, 6> boundary{BoundaryType::dirichlet, BoundaryType::neumann, BoundaryType::neumann,
                                         BoundaryType::neumann,   BoundaryType::neumann, BoundaryType::neumann};
    /// Interior-penalty / LDG boundary penalty; (p+1)^2 / h when unset.
    std::optional<double> penalty;
    /// Manufactured right-hand side and boundary data; homogeneous when false.
    bool manufactured = true;

    void validate() const
    {
        mesh.validate();
        const bool convective = kind == ProblemKind::convection || kind == ProblemKind::convection_diffusion;
        double vn = 0.0;
        for (int a = 0; a < mesh.dimension; ++a) vn += velocity[static_cast<std::size_t>(a)] * velocity[static_cast<std::size_t>(a)];
        if (kind == ProblemKind::convection && !(vn > 0.0)) throw Error("convection requires a nonzero velocity");
        if ((kind == ProblemKind::poisson_ip || kind == ProblemKind::poisson_ldg) && !(diffusion > 0.0))
            throw Error("poisson problems require a positive diffusion coefficient");
        if (kind == ProblemKind::convection_diffusion && (diffusion < 0.0 || (diffusion == 0.0 && !(vn > 0.0))))
            throw Error("convection_diffusion requires diffusion >= 0 and a nonzero operator");
        if (!convective && mesh.degree < 1) throw Error("diffusion operators need degree p >= 1");
        if (mesh.degree > 6) throw Error("unsupported polynomial degree " + std::to_string(mesh.degree));
        if (penalty && !(*penalty > 0.0)) throw Error("penalty must be positive");
    }

    /// Default velocity (1,2,3)/|(1,2,3)| truncated to d components and renormalised.
    static Point default_velocity(int dimension)
    {
        Point v{1.0, 2.0, 3.0};
        double n = 0.0;
        for (int a = 0; a < 3; ++a) {
            if (a >= dimension) v[static_cast<std::size_t>(a)] = 0.0;
            n += v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(a)];
        }
        for (auto& c : v) c /= std::sqrt(n);
        return v;
    }
};

/// Peclet number |v| L / mu with L the box width along axis 0 (2 on [-1,1]^d).
inline double peclet(const ProblemSpec& spec)
{
    if (spec.kind != ProblemKind::convection_diffusion && spec.kind != ProblemKind::convection)
        throw Error("peclet: not a convection-diffusion problem");
    double vn = 0.0;
    for (int a = 0; a < spec.mesh.dimension; ++a) vn += spec.velocity[static_cast<std::size_t>(a)] * spec.velocity[static_cast<std::size_t>(a)];
    const double width = spec.mesh.upper[0] - spec.mesh.lower[0];
    if (spec.diffusion == 0.0 || spec.kind == ProblemKind::convection) return std::numeric_limits<double>::infinity();
    return std::sqrt(vn) * width / spec.diffusion;
}

struct DgSystem {
    SparseMatrix a;
    Vector f;
    DofMap dofmap;
    BlockPartition blocks;
    CartesianMesh mesh;
    std::optional<ManufacturedSolution> exact;
};

// ---------------------------------------------------------------------------
// 1D reference quantities on [0, 1]

namespace detail {

/// Legendre P_n and P_n' at x in [-1, 1].
inline std::pair<double, double> legendre(int n, double x)
{
    if (n == 0) return {1.0, 0.0};
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    const double dp = std::abs(x) == 1.0 ? 0.5 * n * (n + 1.0) * std::pow(x, n + 1) : n * (x * p1 - p0) / (x * x - 1.0);
    return {p1, dp};
}

struct Quadrature {
    Vector nodes;    // on [0, 1]
    Vector weights;  // sum to 1
};

inline Quadrature gauss_legendre(int n)
{
    Quadrature q{Vector(static_cast<std::size_t>(n)), Vector(static_cast<std::size_t>(n))};
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre(n, x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const auto [p, dp] = legendre(n, x);
        (void)p;
        const auto ui = static_cast<std::size_t>(n - 1 - i);
        q.nodes[ui] = 0.5 * (x + 1.0);
        q.weights[ui] = 1.0 / ((1.0 - x * x) * dp * dp);  // 2/((1-x^2)P'^2) scaled by 1/2
    }
    return q;
}

inline Vector gauss_lobatto_nodes(int p)
{
    if (p == 0) return {0.5};
    Vector x(static_cast<std::size_t>(p + 1));
    x.front() = 0.0;
    x.back() = 1.0;
    for (int i = 1; i < p; ++i) {
        double t = -std::cos(std::numbers::pi * i / p);
        for (int it = 0; it < 100; ++it) {
            const auto [pv, dp] = legendre(p, t);
            const double d2p = (2.0 * t * dp - p * (p + 1.0) * pv) / (1.0 - t * t);
            const double dt = dp / d2p;
            t -= dt;
            if (std::abs(dt) < 1e-16) break;
        }
        x[static_cast<std::size_t>(i)] = 0.5 * (t + 1.0);
    }
    return x;
}

/// Lagrange basis on a node set.
struct Lagrange1D {
    Vector nodes;

    std::size_t size() const { return nodes.size(); }

    double value(std::size_t i, double x) const
    {
        double v = 1.0;
        for (std::size_t j = 0; j < nodes.size(); ++j)
            if (j != i) v *= (x - nodes[j]) / (nodes[i] - nodes[j]);
        return v;
    }

    double derivative(std::size_t i, double x) const
    {
        double sum = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (k == i) continue;
            double term = 1.0 / (nodes[i] - nodes[k]);
            for (std::size_t j = 0; j < nodes.size(); ++j)
                if (j != i && j != k) term *= (x - nodes[j]) / (nodes[i] - nodes[j]);
            sum += term;
        }
        return sum;
    }
};

/// 1D matrices on the unit interval: mass, stiffness, C(i,j) = int l_i l_j',
/// plus traces and derivative traces at both ends.
struct Reference1D {
    Lagrange1D basis;
    DenseMatrix mass, stiffness, deriv;
    std::array<Vector, 2> trace;
    std::array<Vector, 2> dtrace;

    explicit Reference1D(int p) : basis{gauss_lobatto_nodes(p)}
    {
        const std::size_t n = basis.size();
        const auto q = gauss_legendre(p + 1);
        mass = DenseMatrix(n, n);
        stiffness = DenseMatrix(n, n);
        deriv = DenseMatrix(n, n);
        for (std::size_t k = 0; k < q.nodes.size(); ++k) {
            const double x = q.nodes[k], w = q.weights[k];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    mass(i, j) += w * basis.value(i, x) * basis.value(j, x);
                    stiffness(i, j) += w * basis.derivative(i, x) * basis.derivative(j, x);
                    deriv(i, j) += w * basis.value(i, x) * basis.derivative(j, x);
                }
        }
        for (int s = 0; s < 2; ++s) {
            trace[static_cast<std::size_t>(s)].resize(n);
            dtrace[static_cast<std::size_t>(s)].resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                trace[static_cast<std::size_t>(s)][i] = basis.value(i, s);
                dtrace[static_cast<std::size_t>(s)][i] = basis.derivative(i, s);
            }
        }
    }
};

inline DenseMatrix outer(std::span<const double> a, std::span<const double> b)
{
    DenseMatrix m(a.size(), b.size());
    for (std::size_t j = 0; j < b.size(); ++j)
        for (std::size_t i = 0; i < a.size(); ++i) m(i, j) = a[i] * b[j];
    return m;
}

/// Element-level matrices on an axis-aligned box with widths h_a.
class ReferenceElement {
public:
    ReferenceElement(int dimension, int degree, const std::array<double, 3>& h)
        : d_(dimension), ref_(degree), h_(h)
    {
        n1_ = ref_.basis.size();
        nb_ = 1;
        for (int a = 0; a < d_; ++a) nb_ *= n1_;
        for (int a = 0; a < d_; ++a) {
            scaled_mass_[ax(a)] = ref_.mass;
            scale(h_[ax(a)], scaled_mass_[ax(a)].values());
        }
    }

    int dimension() const { return d_; }
    std::size_t n_basis() const { return nb_; }
    std::size_t n_1d() const { return n1_; }
    const Reference1D& ref() const { return ref_; }
    double h(int a) const { return h_[ax(a)]; }

    /// Multi-index digit of basis function I along axis a.
    std::size_t digit(std::size_t i, int a) const
    {
        for (int b = 0; b < a; ++b) i /= n1_;
        return i % n1_;
    }

    /// Tensor product with `factor` along `axis` and the scaled mass elsewhere.
    DenseMatrix kron_axis(int axis, const DenseMatrix& factor) const
    {
        DenseMatrix out(nb_, nb_);
        for (std::size_t j = 0; j < nb_; ++j)
            for (std::size_t i = 0; i < nb_; ++i) {
                double v = 1.0;
                for (int a = 0; a < d_; ++a) {
                    const auto ia = digit(i, a), ja = digit(j, a);
                    v *= a == axis ? factor(ia, ja) : scaled_mass_[ax(a)](ia, ja);
                }
                out(i, j) = v;
            }
        return out;
    }

    DenseMatrix mass() const { return kron_axis(-1, DenseMatrix()); }

    DenseMatrix stiffness(int a) const
    {
        DenseMatrix f = ref_.stiffness;
        scale(1.0 / h_[ax(a)], f.values());
        return kron_axis(a, f);
    }

    /// (i, j) = int phi_i d_a phi_j
    DenseMatrix derivative(int a) const { return kron_axis(a, ref_.deriv); }

    /// Face coupling on the face normal to `a`: test trace from side st,
    /// trial trace from side ss. Derivative flags switch to d/dx_a traces.
    DenseMatrix face(int a, int st, int ss, bool test_deriv = false, bool trial_deriv = false) const
    {
        const double inv_h = 1.0 / h_[ax(a)];
        Vector t = test_deriv ? ref_.dtrace[ax(st)] : ref_.trace[ax(st)];
        Vector s = trial_deriv ? ref_.dtrace[ax(ss)] : ref_.trace[ax(ss)];
        if (test_deriv) scale(inv_h, t);
        if (trial_deriv) scale(inv_h, s);
        return kron_axis(a, outer(t, s));
    }

    static std::size_t ax(int a) { return static_cast<std::size_t>(a); }

private:
    int d_;
    Reference1D ref_;
    std::array<double, 3> h_;
    std::size_t n1_ = 0;
    std::size_t nb_ = 0;
    std::array<DenseMatrix, 3> scaled_mass_;
};

inline void add_scaled(DenseMatrix& dst, double a, const DenseMatrix& src)
{
    auto d = dst.values();
    auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * s[i];
}

/// Per element row: list of (column element, dense block).
class BlockAssembler {
public:
    BlockAssembler(std::size_t n_elements, std::size_t block) : rows_(n_elements), nb_(block) {}

    DenseMatrix& block(std::size_t r, std::size_t c)
    {
        auto& row = rows_[r];
        for (auto& [col, m] : row)
            if (col == c) return m;
        row.emplace_back(c, DenseMatrix(nb_, nb_));
        return row.back().second;
    }

    void add(std::size_t r, std::size_t c, double a, const DenseMatrix& m) { add_scaled(block(r, c), a, m); }

    /// Dense blocks are stored whole, so the pattern is the element coupling
    /// pattern and does not depend on cancellations inside a block.
    SparseMatrix to_csr()
    {
        const std::size_t n = rows_.size() * nb_;
        std::vector<std::size_t> offsets(n + 1, 0);
        std::vector<std::size_t> cols;
        Vector vals;
        std::size_t total_blocks = 0;
        for (auto& row : rows_) {
            std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
            total_blocks += row.size();
        }
        cols.reserve(total_blocks * nb_ * nb_);
        vals.reserve(total_blocks * nb_ * nb_);
        for (std::size_t e = 0; e < rows_.size(); ++e)
            for (std::size_t i = 0; i < nb_; ++i) {
                for (const auto& [c, m] : rows_[e])
                    for (std::size_t j = 0; j < nb_; ++j) {
                        cols.push_back(c * nb_ + j);
                        vals.push_back(m(i, j));
                    }
                offsets[e * nb_ + i + 1] = cols.size();
            }
        return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(vals));
    }

private:
    std::vector<std::vector<std::pair<std::size_t, DenseMatrix>>> rows_;
    std::size_t nb_;
};

} // namespace detail

// ---------------------------------------------------------------------------

class DgAssembler {
public:
    explicit DgAssembler(ProblemSpec spec)
        : spec_(std::move(spec)), mesh_((spec_.validate(), build_cartesian(spec_.mesh))),
          ref_(spec_.mesh.dimension, spec_.mesh.degree, mesh_.spacing), exact_{spec_.mesh.dimension}
    {
        const auto m_inv_lu = DenseLU(ref_.mass());
        mass_inv_ = DenseMatrix(ref_.n_basis(), ref_.n_basis());
        for (std::size_t j = 0; j < ref_.n_basis(); ++j) {
            Vector e(ref_.n_basis(), 0.0);
            e[j] = 1.0;
            m_inv_lu.solve_in_place(e);
            std::copy(e.begin(), e.end(), mass_inv_.column(j).begin());
        }
    }

    const CartesianMesh& mesh() const { return mesh_; }
    const detail::ReferenceElement& reference() const { return ref_; }
    const ProblemSpec& spec() const { return spec_; }

    int dim() const { return spec_.mesh.dimension; }
    std::size_t nb() const { return ref_.n_basis(); }

    BoundaryType boundary(int axis, int side) const { return spec_.boundary[static_cast<std::size_t>(2 * axis + side)]; }

    /// (p+1)^2 / h: the structured-mesh penalty n(p+1)^2/2 on a width-2 box
    /// with n elements per axis.
    double penalty(int axis) const
    {
        if (spec_.penalty) return *spec_.penalty;
        const double p1 = spec_.mesh.degree + 1.0;
        return p1 * p1 / ref_.h(axis);
    }

    bool has_diffusion() const { return spec_.kind != ProblemKind::convection && spec_.diffusion > 0.0; }
    bool has_convection() const
    {
        if (spec_.kind != ProblemKind::convection && spec_.kind != ProblemKind::convection_diffusion) return false;
        for (int a = 0; a < dim(); ++a)
            if (spec_.velocity[static_cast<std::size_t>(a)] != 0.0) return true;
        return false;
    }
    bool uses_ldg() const
    {
        return spec_.kind == ProblemKind::poisson_ldg || spec_.kind == ProblemKind::convection_diffusion;
    }

    /// Convection boundary faces and all diffusion faces of a convective
    /// problem are Dirichlet.
    BoundaryType diffusion_boundary(int axis, int side) const
    {
        return spec_.kind == ProblemKind::convection_diffusion ? BoundaryType::dirichlet : boundary(axis, side);
    }

    SparseMatrix matrix() const
    {
        detail::BlockAssembler asmb(mesh_.graph.n_elements(), nb());
        if (has_diffusion()) {
            if (uses_ldg())
                assemble_ldg(asmb);
            else
                assemble_ip(asmb);
        }
        if (has_convection()) assemble_convection(asmb);
        for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) asmb.block(e, e);
        return asmb.to_csr();
    }

    Vector rhs() const
    {
        Vector f(mesh_.graph.n_elements() * nb(), 0.0);
        if (!spec_.manufactured) return f;
        volume_source(f);
        if (has_diffusion()) {
            if (uses_ldg())
                ldg_boundary_rhs(f);
            else
                ip_boundary_rhs(f);
        }
        if (has_convection()) convection_boundary_rhs(f);
        return f;
    }

    const ManufacturedSolution& exact() const { return exact_; }

    double source(const Point& x) const
    {
        double f = 0.0;
        if (has_diffusion()) f -= spec_.diffusion * exact_.laplacian(x);
        if (has_convection()) {
            const auto g = exact_.gradient(x);
            for (int a = 0; a < dim(); ++a) f += spec_.velocity[static_cast<std::size_t>(a)] * g[static_cast<std::size_t>(a)];
        }
        return f;
    }

    // -- quadrature helpers --------------------------------------------------

    /// Tensor Gauss points on element e restricted to the face (axis, side)
    /// when axis >= 0. Calls fn(point, weight, basis values).
    template <class Fn>
    void for_each_point(std::size_t e, int n_points, int face_axis, int face_side, Fn&& fn) const
    {
        const auto q = detail::gauss_legendre(n_points);
        const auto& basis = ref_.ref().basis;
        const std::size_t nq = q.nodes.size();
        std::size_t total = 1;
        for (int a = 0; a < dim(); ++a)
            if (a != face_axis) total *= nq;
        Vector phi(nb());
        std::array<std::size_t, 3> k{0, 0, 0};
        for (std::size_t t = 0; t < total; ++t) {
            std::size_t rem = t;
            Point x{0.0, 0.0, 0.0};
            std::array<double, 3> xi{0.0, 0.0, 0.0};
            double w = 1.0;
            for (int a = 0; a < dim(); ++a) {
                const auto ua = static_cast<std::size_t>(a);
                if (a == face_axis) {
                    xi[ua] = face_side;
                } else {
                    k[ua] = rem % nq;
                    rem /= nq;
                    xi[ua] = q.nodes[k[ua]];
                    w *= q.weights[k[ua]] * ref_.h(a);
                }
                x[ua] = mesh_.lower_corner[e][ua] + xi[ua] * ref_.h(a);
            }
            for (std::size_t i = 0; i < nb(); ++i) {
                double v = 1.0;
                for (int a = 0; a < dim(); ++a) v *= basis.value(ref_.digit(i, a), xi[static_cast<std::size_t>(a)]);
                phi[i] = v;
            }
            fn(x, w, std::span<const double>(phi));
        }
    }

    Point node_point(std::size_t e, std::size_t i) const
    {
        Point x{0.0, 0.0, 0.0};
        for (int a = 0; a < dim(); ++a) {
            const auto ua = static_cast<std::size_t>(a);
            x[ua] = mesh_.lower_corner[e][ua] + ref_.ref().basis.nodes[ref_.digit(i, a)] * ref_.h(a);
        }
        return x;
    }

private:
    static std::size_t ax(int a) { return static_cast<std::size_t>(a); }

    void assemble_ip(detail::BlockAssembler& asmb) const
    {
        const double mu = spec_.diffusion;
        std::array<DenseMatrix, 3> stiff;
        DenseMatrix volume(nb(), nb());
        for (int a = 0; a < dim(); ++a) detail::add_scaled(volume, mu, ref_.stiffness(a));
        for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) asmb.add(e, e, 1.0, volume);

        for (int a = 0; a < dim(); ++a) {
            const double sigma = penalty(a);
            // side index per element: lower element sits on its side 1, upper on side 0.
            // Blocks between lower (L) and upper (U) element across an interior face.
            auto coupling = [&](int test_side, int trial_side, double s_test, double s_trial) {
                DenseMatrix m(nb(), nb());
                detail::add_scaled(m, -0.5 * s_test, ref_.face(a, test_side, trial_side, false, true));
                detail::add_scaled(m, -0.5 * s_trial, ref_.face(a, test_side, trial_side, true, false));
                detail::add_scaled(m, sigma * s_test * s_trial, ref_.face(a, test_side, trial_side));
                return m;
            };
            const DenseMatrix ll = coupling(1, 1, 1.0, 1.0);
            const DenseMatrix lu = coupling(1, 0, 1.0, -1.0);
            const DenseMatrix ul = coupling(0, 1, -1.0, 1.0);
            const DenseMatrix uu = coupling(0, 0, -1.0, -1.0);
            std::array<DenseMatrix, 2> dirichlet;
            for (int s = 0; s < 2; ++s) {
                const double n = s == 1 ? 1.0 : -1.0;
                DenseMatrix m(nb(), nb());
                detail::add_scaled(m, -n, ref_.face(a, s, s, false, true));
                detail::add_scaled(m, -n, ref_.face(a, s, s, true, false));
                detail::add_scaled(m, sigma, ref_.face(a, s, s));
                dirichlet[ax(s)] = std::move(m);
            }
            for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
                std::size_t up = 0;
                if (mesh_.neighbor(e, a, 1, up)) {
                    asmb.add(e, e, mu, ll);
                    asmb.add(e, up, mu, lu);
                    asmb.add(up, e, mu, ul);
                    asmb.add(up, up, mu, uu);
                }
                for (int s = 0; s < 2; ++s) {
                    std::size_t nb_e = 0;
                    if (!mesh_.neighbor(e, a, s, nb_e) && boundary(a, s) == BoundaryType::dirichlet)
                        asmb.add(e, e, mu, dirichlet[ax(s)]);
                }
            }
        }
    }

    /// Discrete gradient blocks along axis a: block (K,K) and (K,K+e_a).
    struct GradientBlocks {
        DenseMatrix self;        // interior element, upper face interior
        DenseMatrix upper;       // coupling to upper neighbour
    };

    DenseMatrix ldg_self_block(int a, std::size_t e) const
    {
        DenseMatrix g = ref_.derivative(a);
        std::size_t nbr = 0;
        // upper face: u-hat from the upper element, or from data on a Dirichlet face
        if (mesh_.neighbor(e, a, 1, nbr) || diffusion_boundary(a, 1) == BoundaryType::dirichlet)
            detail::add_scaled(g, -1.0, ref_.face(a, 1, 1));
        // lower face contributes only on a Dirichlet boundary
        if (!mesh_.neighbor(e, a, 0, nbr) && diffusion_boundary(a, 0) == BoundaryType::dirichlet)
            detail::add_scaled(g, 1.0, ref_.face(a, 0, 0));
        return g;
    }

    void assemble_ldg(detail::BlockAssembler& asmb) const
    {
        const double mu = spec_.diffusion;
        for (int a = 0; a < dim(); ++a) {
            const DenseMatrix g_up = ref_.face(a, 1, 0);
            const DenseMatrix g_up_t = g_up.transposed();
            for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
                const DenseMatrix g_self = ldg_self_block(a, e);
                const DenseMatrix g_self_t = g_self.transposed();
                const DenseMatrix minv_self = mass_inv_.multiply(g_self);
                asmb.add(e, e, mu, g_self_t.multiply(minv_self));
                std::size_t up = 0;
                if (mesh_.neighbor(e, a, 1, up)) {
                    const DenseMatrix minv_up = mass_inv_.multiply(g_up);
                    asmb.add(e, up, mu, g_self_t.multiply(minv_up));
                    asmb.add(up, e, mu, g_up_t.multiply(minv_self));
                    asmb.add(up, up, mu, g_up_t.multiply(minv_up));
                }
                for (int s = 0; s < 2; ++s) {
                    std::size_t nbr = 0;
                    if (!mesh_.neighbor(e, a, s, nbr) && diffusion_boundary(a, s) == BoundaryType::dirichlet)
                        asmb.add(e, e, mu * penalty(a), ref_.face(a, s, s));
                }
            }
        }
    }

    void assemble_convection(detail::BlockAssembler& asmb) const
    {
        DenseMatrix volume(nb(), nb());
        for (int a = 0; a < dim(); ++a) {
            const double va = spec_.velocity[ax(a)];
            if (va != 0.0) detail::add_scaled(volume, -va, ref_.derivative(a).transposed());
        }
        for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) asmb.add(e, e, 1.0, volume);
        for (int a = 0; a < dim(); ++a) {
            const double va = spec_.velocity[ax(a)];
            if (va == 0.0) continue;
            for (int s = 0; s < 2; ++s) {
                const double vn = va * (s == 1 ? 1.0 : -1.0);
                if (vn > 0.0) {
                    const DenseMatrix out = ref_.face(a, s, s);
                    for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) asmb.add(e, e, vn, out);
                } else {
                    const DenseMatrix in = ref_.face(a, s, 1 - s);
                    for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
                        std::size_t nbr = 0;
                        if (mesh_.neighbor(e, a, s, nbr)) asmb.add(e, nbr, vn, in);
                    }
                }
            }
        }
    }

    // -- right-hand side ----------------------------------------------------

    int rhs_points() const { return spec_.mesh.degree + 2; }

    void volume_source(Vector& f) const
    {
        for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
            auto fe = std::span<double>(f).subspan(e * nb(), nb());
            for_each_point(e, rhs_points(), -1, 0, [&](const Point& x, double w, std::span<const double> phi) {
                const double s = source(x);
                for (std::size_t i = 0; i < phi.size(); ++i) fe[i] += w * s * phi[i];
            });
        }
    }

    /// int_F g phi_i and int_F g d_a phi_i over boundary face (a, s) of e.
    void boundary_moments(std::size_t e, int a, int s, const std::function<double(const Point&)>& g, Vector& m0,
                          Vector& m1) const
    {
        m0.assign(nb(), 0.0);
        m1.assign(nb(), 0.0);
        const auto& basis = ref_.ref().basis;
        for_each_point(e, rhs_points(), a, s, [&](const Point& x, double w, std::span<const double> phi) {
            const double gv = g(x);
            for (std::size_t i = 0; i < nb(); ++i) {
                m0[i] += w * gv * phi[i];
                // d_a phi_i = phi_i / l_{i_a}(s) * l'_{i_a}(s) / h, computed directly
                const auto ia = ref_.digit(i, a);
                const double la = basis.value(ia, s);
                double rest = 1.0;
                if (la != 0.0) {
                    rest = phi[i] / la;
                } else {
                    rest = 0.0;
                    // recompute the product over the other axes
                    double v = 1.0;
                    for (int b = 0; b < dim(); ++b) {
                        if (b == a) continue;
                        const double xb = (x[ax(b)] - mesh_.lower_corner[e][ax(b)]) / ref_.h(b);
                        v *= basis.value(ref_.digit(i, b), xb);
                    }
                    rest = v;
                }
                m1[i] += w * gv * rest * basis.derivative(ia, s) / ref_.h(a);
            }
        });
    }

    void ip_boundary_rhs(Vector& f) const
    {
        const double mu = spec_.diffusion;
        Vector m0, m1;
        for (int a = 0; a < dim(); ++a)
            for (int s = 0; s < 2; ++s) {
                const double n = s == 1 ? 1.0 : -1.0;
                for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
                    std::size_t nbr = 0;
                    if (mesh_.neighbor(e, a, s, nbr)) continue;
                    auto fe = std::span<double>(f).subspan(e * nb(), nb());
                    if (boundary(a, s) == BoundaryType::dirichlet) {
                        boundary_moments(e, a, s, [&](const Point& x) { return exact_.value(x); }, m0, m1);
                        for (std::size_t i = 0; i < nb(); ++i) fe[i] += mu * (penalty(a) * m0[i] - n * m1[i]);
                    } else {
                        boundary_moments(
                            e, a, s, [&](const Point& x) { return n * exact_.gradient(x)[ax(a)]; }, m0, m1);
                        for (std::size_t i = 0; i < nb(); ++i) fe[i] += mu * m0[i];
                    }
                }
            }
    }

    void ldg_boundary_rhs(Vector& f) const
    {
        const double mu = spec_.diffusion;
        Vector m0, m1;
        for (int a = 0; a < dim(); ++a)
            for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
                Vector b(nb(), 0.0);
                bool any = false;
                auto fe = std::span<double>(f).subspan(e * nb(), nb());
                for (int s = 0; s < 2; ++s) {
                    std::size_t nbr = 0;
                    if (mesh_.neighbor(e, a, s, nbr)) continue;
                    const double n = s == 1 ? 1.0 : -1.0;
                    if (diffusion_boundary(a, s) == BoundaryType::dirichlet) {
                        boundary_moments(e, a, s, [&](const Point& x) { return exact_.value(x); }, m0, m1);
                        // gradient equation: + n int g w ; flux penalty: + C11 int g v
                        for (std::size_t i = 0; i < nb(); ++i) {
                            b[i] += n * m0[i];
                            fe[i] += mu * penalty(a) * m0[i];
                        }
                        any = true;
                    } else {
                        boundary_moments(
                            e, a, s, [&](const Point& x) { return n * exact_.gradient(x)[ax(a)]; }, m0, m1);
                        for (std::size_t i = 0; i < nb(); ++i) fe[i] += mu * m0[i];
                    }
                }
                if (!any) continue;
                // f -= mu G^T M^{-1} b, with G's block row for e: (e,e) and (e,up).
                const Vector minv_b = mass_inv_.multiply(b);
                const DenseMatrix g_self = ldg_self_block(a, e);
                const Vector t_self = g_self.transposed().multiply(minv_b);
                for (std::size_t i = 0; i < nb(); ++i) fe[i] -= mu * t_self[i];
                std::size_t up = 0;
                if (mesh_.neighbor(e, a, 1, up)) {
                    const Vector t_up = ref_.face(a, 1, 0).transposed().multiply(minv_b);
                    auto fu = std::span<double>(f).subspan(up * nb(), nb());
                    for (std::size_t i = 0; i < nb(); ++i) fu[i] -= mu * t_up[i];
                }
            }
    }

    void convection_boundary_rhs(Vector& f) const
    {
        Vector m0, m1;
        for (int a = 0; a < dim(); ++a) {
            const double va = spec_.velocity[ax(a)];
            for (int s = 0; s < 2; ++s) {
                const double vn = va * (s == 1 ? 1.0 : -1.0);
                if (!(vn < 0.0)) continue;
                for (std::size_t e = 0; e < mesh_.graph.n_elements(); ++e) {
                    std::size_t nbr = 0;
                    if (mesh_.neighbor(e, a, s, nbr)) continue;
                    if (boundary(a, s) != BoundaryType::dirichlet && spec_.kind != ProblemKind::convection_diffusion &&
                        spec_.kind != ProblemKind::convection)
                        continue;
                    boundary_moments(e, a, s, [&](const Point& x) { return exact_.value(x); }, m0, m1);
                    auto fe = std::span<double>(f).subspan(e * nb(), nb());
                    for (std::size_t i = 0; i < nb(); ++i) fe[i] -= vn * m0[i];
                }
            }
        }
    }

    ProblemSpec spec_;
    CartesianMesh mesh_;
    detail::ReferenceElement ref_;
    ManufacturedSolution exact_;
    DenseMatrix mass_inv_;
};

/// Assembles A and f. Blocks follow the element-major dof layout.
inline DgSystem assemble(const ProblemSpec& spec)
{
    DgAssembler asmb(spec);
    DgSystem sys;
    sys.a = asmb.matrix();
    sys.f = asmb.rhs();
    sys.mesh = asmb.mesh();
    sys.blocks = sys.mesh.graph.dof_blocks();
    sys.dofmap = DofMap{sys.blocks};
    if (spec.manufactured) sys.exact = asmb.exact();
    return sys;
}

/// Right-hand side for the manufactured solution, and the solution itself.
inline std::pair<Vector, ManufacturedSolution> manufactured_rhs(const ProblemSpec& spec)
{
    ProblemSpec s = spec;
    s.manufactured = true;
    DgAssembler asmb(s);
    return {asmb.rhs(), asmb.exact()};
}

/// Nodal interpolant of a function.
inline Vector interpolate(const ProblemSpec& spec, const std::function<double(const Point&)>& fn)
{
    DgAssembler asmb(spec);
    Vector u(asmb.mesh().graph.n_elements() * asmb.nb());
    for (std::size_t e = 0; e < asmb.mesh().graph.n_elements(); ++e)
        for (std::size_t i = 0; i < asmb.nb(); ++i) u[e * asmb.nb() + i] = fn(asmb.node_point(e, i));
    return u;
}

/// L2 norm of u_h - u over the mesh, with p+3 Gauss points per axis.
inline double l2_error(const ProblemSpec& spec, std::span<const double> uh,
                       const std::function<double(const Point&)>& exact)
{
    DgAssembler asmb(spec);
    detail::require_dims(uh.size() == asmb.mesh().graph.n_elements() * asmb.nb(), "l2_error");
    double err = 0.0;
    for (std::size_t e = 0; e < asmb.mesh().graph.n_elements(); ++e) {
        auto ue = uh.subspan(e * asmb.nb(), asmb.nb());
        asmb.for_each_point(e, spec.mesh.degree + 3, -1, 0, [&](const Point& x, double w, std::span<const double> phi) {
            const double d = dot(ue, phi) - exact(x);
            err += w * d * d;
        });
    }
    return std::sqrt(err);
}

} // namespace aggmg
