#pragma once

/// @file meshgraph.hpp
/// Element adjacency graphs, structured Cartesian DG meshes and the
/// plain-text adjacency file format.
///
/// Graph file format: the first line holds the element count, then one line
/// per element `dof_count k nbr_1 ... nbr_k` with 0-based neighbour indices.

#include <array>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace aggmg {

/// Mesh elements as nodes; an edge joins two elements that share a face.
class ElementGraph {
public:
    ElementGraph() = default;

    /// Validates symmetry, absence of self loops, dof counts and connectivity.
    ElementGraph(std::vector<std::vector<std::size_t>> adjacency, std::vector<std::size_t> dof_counts)
        : adjacency_(std::move(adjacency)), dof_counts_(std::move(dof_counts))
    {
        const std::size_t n = adjacency_.size();
        if (dof_counts_.size() != n) throw Error("graph: dof_counts length differs from element count");
        for (std::size_t i = 0; i < n; ++i) {
            auto& adj = adjacency_[i];
            std::sort(adj.begin(), adj.end());
            if (std::adjacent_find(adj.begin(), adj.end()) != adj.end())
                throw Error("graph: duplicate neighbour at element " + std::to_string(i));
            if (dof_counts_[i] == 0) throw Error("graph: element " + std::to_string(i) + " has zero dofs");
            for (auto j : adj) {
                if (j >= n) throw Error("graph: neighbour index out of range at element " + std::to_string(i));
                if (j == i) throw Error("graph: self loop at element " + std::to_string(i));
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            for (auto j : adjacency_[i])
                if (!std::binary_search(adjacency_[j].begin(), adjacency_[j].end(), i))
                    throw Error("asymmetric adjacency at element " + std::to_string(i));
        if (n > 0 && !is_connected()) throw Error("graph: element graph is disconnected");
    }

    std::size_t n_elements() const noexcept { return adjacency_.size(); }
    std::span<const std::size_t> neighbors(std::size_t e) const { return adjacency_[e]; }
    const std::vector<std::vector<std::size_t>>& adjacency() const noexcept { return adjacency_; }
    std::span<const std::size_t> dof_counts() const noexcept { return dof_counts_; }
    std::size_t dof_count(std::size_t e) const { return dof_counts_[e]; }

    std::size_t n_edges() const
    {
        std::size_t deg = 0;
        for (const auto& a : adjacency_) deg += a.size();
        return deg / 2;
    }

    std::size_t total_dofs() const
    {
        return std::accumulate(dof_counts_.begin(), dof_counts_.end(), std::size_t{0});
    }

    /// Element-major contiguous dof blocks.
    BlockPartition dof_blocks() const { return BlockPartition::from_sizes(dof_counts_); }

    friend bool operator==(const ElementGraph&, const ElementGraph&) = default;

private:
    bool is_connected() const
    {
        std::vector<char> seen(adjacency_.size(), 0);
        std::queue<std::size_t> q;
        q.push(0);
        seen[0] = 1;
        std::size_t count = 1;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop();
            for (auto v : adjacency_[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    ++count;
                    q.push(v);
                }
        }
        return count == adjacency_.size();
    }

    std::vector<std::vector<std::size_t>> adjacency_;
    std::vector<std::size_t> dof_counts_;
};

/// Element -> (first dof, dof count), element-major.
struct DofMap {
    BlockPartition blocks;

    std::size_t first(std::size_t e) const { return blocks.begin(e); }
    std::size_t count(std::size_t e) const { return blocks.size(e); }
    std::size_t total() const { return blocks.dimension(); }
};

// ---------------------------------------------------------------------------
// Structured Cartesian meshes

struct CartesianMeshSpec {
    int dimension = 3;
    int refinement = 2;  ///< 2^refinement elements per axis
    int degree = 1;
    std::array<double, 3> lower{-1.0, -1.0, -1.0};
    std::array<double, 3> upper{1.0, 1.0, 1.0};

    std::size_t elements_per_axis() const { return std::size_t{1} << refinement; }
    std::size_t n_elements() const
    {
        std::size_t n = 1;
        for (int a = 0; a < dimension; ++a) n *= elements_per_axis();
        return n;
    }
    std::size_t dofs_per_element() const
    {
        std::size_t n = 1;
        for (int a = 0; a < dimension; ++a) n *= static_cast<std::size_t>(degree + 1);
        return n;
    }
    double spacing(int axis) const
    {
        return (upper[static_cast<std::size_t>(axis)] - lower[static_cast<std::size_t>(axis)]) /
               static_cast<double>(elements_per_axis());
    }

    void validate() const
    {
        if (dimension < 1 || dimension > 3) throw Error("mesh dimension must be 1, 2 or 3");
        if (refinement < 0 || refinement > 10) throw Error("mesh refinement out of range");
        if (degree < 0) throw Error("polynomial degree must be nonnegative");
        for (int a = 0; a < dimension; ++a)
            if (!(upper[static_cast<std::size_t>(a)] > lower[static_cast<std::size_t>(a)]))
                throw Error("mesh box must have positive width");
    }
};

struct CartesianMesh {
    CartesianMeshSpec spec;
    ElementGraph graph;
    std::vector<std::array<double, 3>> lower_corner;  ///< per element
    std::array<double, 3> spacing{0.0, 0.0, 0.0};

    std::size_t n_per_axis() const { return spec.elements_per_axis(); }

    /// Lexicographic coordinates, axis 0 fastest.
    std::array<std::size_t, 3> coords(std::size_t e) const
    {
        const std::size_t n = n_per_axis();
        std::array<std::size_t, 3> c{0, 0, 0};
        for (int a = 0; a < spec.dimension; ++a) {
            c[static_cast<std::size_t>(a)] = e % n;
            e /= n;
        }
        return c;
    }

    std::size_t index(const std::array<std::size_t, 3>& c) const
    {
        const std::size_t n = n_per_axis();
        std::size_t e = 0;
        for (int a = spec.dimension - 1; a >= 0; --a) e = e * n + c[static_cast<std::size_t>(a)];
        return e;
    }

    /// Face neighbour across side (0 = lower, 1 = upper) of `axis`; false on the domain boundary.
    bool neighbor(std::size_t e, int axis, int side, std::size_t& out) const
    {
        auto c = coords(e);
        auto& ca = c[static_cast<std::size_t>(axis)];
        if (side == 0) {
            if (ca == 0) return false;
            --ca;
        } else {
            if (ca + 1 == n_per_axis()) return false;
            ++ca;
        }
        out = index(c);
        return true;
    }
};

inline CartesianMesh build_cartesian(const CartesianMeshSpec& spec)
{
    spec.validate();
    CartesianMesh mesh;
    mesh.spec = spec;
    const std::size_t n_el = spec.n_elements();
    for (int a = 0; a < spec.dimension; ++a) mesh.spacing[static_cast<std::size_t>(a)] = spec.spacing(a);

    std::vector<std::vector<std::size_t>> adj(n_el);
    mesh.lower_corner.resize(n_el);
    for (std::size_t e = 0; e < n_el; ++e) {
        const auto c = mesh.coords(e);
        for (int a = 0; a < spec.dimension; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            mesh.lower_corner[e][ua] = spec.lower[ua] + static_cast<double>(c[ua]) * mesh.spacing[ua];
            for (int side = 0; side < 2; ++side) {
                std::size_t nb = 0;
                if (mesh.neighbor(e, a, side, nb)) adj[e].push_back(nb);
            }
        }
    }
    mesh.graph = ElementGraph(std::move(adj), std::vector<std::size_t>(n_el, spec.dofs_per_element()));
    return mesh;
}

// ---------------------------------------------------------------------------
// Graph file IO

inline ElementGraph read_graph(std::istream& in)
{
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    };
    if (!next_line()) throw Error("graph file: empty input");
    std::size_t n = 0;
    {
        std::istringstream s(line);
        if (!(s >> n)) throw Error("graph file: malformed element count on line " + std::to_string(line_no));
    }
    std::vector<std::vector<std::size_t>> adj(n);
    std::vector<std::size_t> dofs(n);
    for (std::size_t e = 0; e < n; ++e) {
        if (!next_line()) throw Error("graph file: missing line for element " + std::to_string(e));
        std::istringstream s(line);
        std::size_t k = 0;
        if (!(s >> dofs[e] >> k)) throw Error("graph file: malformed line " + std::to_string(line_no));
        adj[e].resize(k);
        for (auto& v : adj[e])
            if (!(s >> v)) throw Error("graph file: malformed line " + std::to_string(line_no));
        std::string extra;
        if (s >> extra) throw Error("graph file: trailing tokens on line " + std::to_string(line_no));
    }
    return ElementGraph(std::move(adj), std::move(dofs));
}

inline ElementGraph load_graph(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open graph file " + path);
    return read_graph(in);
}

inline void write_graph(std::ostream& out, const ElementGraph& g)
{
    out << g.n_elements() << '\n';
    for (std::size_t e = 0; e < g.n_elements(); ++e) {
        out << g.dof_count(e) << ' ' << g.neighbors(e).size();
        for (auto v : g.neighbors(e)) out << ' ' << v;
        out << '\n';
    }
}

inline void write_graph(const std::string& path, const ElementGraph& g)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_graph(out, g);
}

} // namespace aggmg
