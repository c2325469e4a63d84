#pragma once

/// @file partition.hpp
/// Multilevel element aggregation by recursive balanced k-way splitting.
///
/// A k-way split is built from repeated 2-way cuts. Each cut orders the nodes
/// by an approximate Fiedler vector and takes the prefix of the target size,
/// improves it with boundary moves that reduce the edge cut while keeping
/// balance (lowest index wins ties), and finally repairs connectivity by
/// handing detached fragments to the other side.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <vector>

#include "json.hpp"
#include "meshgraph.hpp"

namespace aggmg {

namespace detail {

/// Adjacency restricted to a node subset, with local ids in [0, n).
struct LocalGraph {
    std::vector<std::size_t> global;          // local -> global, ascending
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> adj;

    LocalGraph(const ElementGraph& g, std::vector<std::size_t> subset) : global(std::move(subset))
    {
        std::sort(global.begin(), global.end());
        global.erase(std::unique(global.begin(), global.end()), global.end());
        offsets.assign(global.size() + 1, 0);
        for (std::size_t l = 0; l < global.size(); ++l) {
            for (auto nb : g.neighbors(global[l])) {
                auto it = std::lower_bound(global.begin(), global.end(), nb);
                if (it != global.end() && *it == nb) adj.push_back(static_cast<std::size_t>(it - global.begin()));
            }
            offsets[l + 1] = adj.size();
        }
    }

    std::size_t size() const { return global.size(); }
    std::span<const std::size_t> nbrs(std::size_t v) const { return {adj.data() + offsets[v], offsets[v + 1] - offsets[v]}; }
};

/// Connected components of the nodes with side[v] == s, restricted to `nodes`.
/// Returns per-node component ids (or npos for nodes not on side s) and the count.
inline std::size_t side_components(const LocalGraph& g, std::span<const std::size_t> nodes,
                                   const std::vector<int>& side, int s, std::vector<std::size_t>& comp)
{
    constexpr auto npos = static_cast<std::size_t>(-1);
    for (auto v : nodes) comp[v] = npos;
    std::size_t count = 0;
    std::vector<std::size_t> stack;
    for (auto v : nodes) {
        if (side[v] != s || comp[v] != npos) continue;
        comp[v] = count;
        stack.push_back(v);
        while (!stack.empty()) {
            auto u = stack.back();
            stack.pop_back();
            for (auto w : g.nbrs(u))
                if (side[w] == s && comp[w] == npos) {
                    comp[w] = count;
                    stack.push_back(w);
                }
        }
        ++count;
    }
    return count;
}

class Bisector {
public:
    explicit Bisector(const LocalGraph& g) : g_(g), side_(g.size(), -1), comp_(g.size()), pos_(g.size()) {}

    /// Splits `nodes` (side -1 on entry means "outside") into side 0 with
    /// `target` nodes and side 1 with the rest.
    void bisect(std::span<const std::size_t> nodes, std::size_t target)
    {
        for (auto v : nodes) side_[v] = 1;
        if (target == 0) return;
        grow(nodes, target);
        refine(nodes, target);
        repair(nodes);
        rebalance(nodes, target);
    }

    int side(std::size_t v) const { return side_[v]; }
    void reset(std::span<const std::size_t> nodes)
    {
        for (auto v : nodes) side_[v] = -1;
    }

private:
    bool member(std::size_t v) const { return side_[v] >= 0; }

    /// internal - external edge count if v switched sides.
    long gain(std::size_t v) const
    {
        long g = 0;
        for (auto w : g_.nbrs(v)) {
            if (!member(w)) continue;
            g += side_[w] == side_[v] ? -1 : 1;
        }
        return g;
    }

    /// Orders nodes by an approximate Fiedler vector of the induced subgraph
    /// (Lanczos on the graph Laplacian, constants deflated) and puts the
    /// first `target` nodes on side 0.
    void grow(std::span<const std::size_t> nodes, std::size_t target)
    {
        const std::size_t n = nodes.size();
        std::vector<double> key(n, 0.0);
        if (n > 2) key = fiedler(nodes);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return key[a] != key[b] ? key[a] < key[b] : nodes[a] < nodes[b];
        });
        for (std::size_t i = 0; i < target; ++i) side_[nodes[order[i]]] = 0;
    }

    std::vector<double> fiedler(std::span<const std::size_t> nodes)
    {
        const std::size_t n = nodes.size();
        for (std::size_t i = 0; i < n; ++i) pos_[nodes[i]] = i;
        auto laplacian = [&](std::span<const double> x, std::span<double> y) {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                std::size_t deg = 0;
                for (auto w : g_.nbrs(nodes[i]))
                    if (member(w)) {
                        s += x[pos_[w]];
                        ++deg;
                    }
                y[i] = static_cast<double>(deg) * x[i] - s;
            }
        };
        const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
        auto deflate = [&](std::span<double> v) {
            double m = 0.0;
            for (double x : v) m += x;
            m *= inv_sqrt_n;
            for (double& x : v) x -= m * inv_sqrt_n;
        };

        // Start from the centred node numbering, which follows the mesh
        // layout for structured and most generated meshes.
        const std::size_t steps = std::min<std::size_t>(n - 1, 80);
        std::vector<std::vector<double>> q;
        std::vector<double> alpha, beta;
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
        deflate(v);
        double nv = norm2(v);
        scale(1.0 / nv, v);
        std::vector<double> w(n);
        for (std::size_t j = 0; j < steps; ++j) {
            q.push_back(v);
            laplacian(q.back(), w);
            alpha.push_back(dot(w, q.back()));
            for (int pass = 0; pass < 2; ++pass) {
                deflate(w);
                for (const auto& qi : q) axpy(-dot(w, qi), qi, w);
            }
            const double b = norm2(w);
            if (b < 1e-10 * std::max(1.0, std::abs(alpha.back())) || j + 1 == steps) break;
            beta.push_back(b);
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;
        }
        const std::size_t m = alpha.size();
        DenseMatrix t(m, m);
        for (std::size_t i = 0; i < m; ++i) {
            t(i, i) = alpha[i];
            if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
        }
        auto [evals, evecs] = symmetric_eigen(t);
        std::size_t best = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (evals[i] < evals[best]) best = i;
        std::vector<double> f(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) axpy(evecs(i, best), q[i], f);
        // Fix the sign so the lowest-numbered node sorts first.
        if (f[0] > 0.0) scale(-1.0, f);
        return f;
    }

    std::size_t count_side0(std::span<const std::size_t> nodes) const
    {
        std::size_t c = 0;
        for (auto v : nodes) c += side_[v] == 0;
        return c;
    }

    void refine(std::span<const std::size_t> nodes, std::size_t target)
    {
        std::size_t size0 = count_side0(nodes);
        const std::size_t cap = 8 * nodes.size() + 16;
        for (std::size_t iter = 0; iter < cap; ++iter) {
            std::size_t best = 0;
            long best_gain = 0;
            bool found = false;
            for (auto v : nodes) {
                bool boundary = false;
                for (auto w : g_.nbrs(v))
                    if (member(w) && side_[w] != side_[v]) {
                        boundary = true;
                        break;
                    }
                if (!boundary) continue;
                const std::size_t new_size = side_[v] == 0 ? size0 - 1 : size0 + 1;
                if (new_size + 1 < target || new_size > target + 1 || new_size == 0 || new_size == nodes.size())
                    continue;
                const long gv = gain(v);
                const bool toward = (new_size > size0) == (size0 < target) && size0 != target;
                if (gv > 0 || (gv == 0 && toward)) {
                    const long score = 2 * gv + (toward ? 1 : 0);
                    if (!found || score > best_gain || (score == best_gain && v < best)) {
                        best = v;
                        best_gain = score;
                        found = true;
                    }
                }
            }
            if (!found) break;
            size0 = side_[best] == 0 ? size0 - 1 : size0 + 1;
            side_[best] = 1 - side_[best];
        }
    }

    /// Keeps the largest component of each side and hands the rest over.
    void repair(std::span<const std::size_t> nodes)
    {
        for (int pass = 0; pass < 4; ++pass) {
            bool changed = false;
            for (int s = 0; s < 2; ++s) {
                const std::size_t n_comp = side_components(g_, nodes, side_, s, comp_);
                if (n_comp <= 1) continue;
                std::vector<std::size_t> sizes(n_comp, 0);
                for (auto v : nodes)
                    if (side_[v] == s) ++sizes[comp_[v]];
                const auto keep = static_cast<std::size_t>(
                    std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
                for (auto v : nodes)
                    if (side_[v] == s && comp_[v] != keep) side_[v] = 1 - s;
                changed = true;
            }
            if (!changed) break;
        }
    }

    bool stays_connected_without(std::span<const std::size_t> nodes, std::size_t v)
    {
        const int s = side_[v];
        side_[v] = 2;  // temporarily excluded
        const std::size_t n_comp = side_components(g_, nodes, side_, s, comp_);
        side_[v] = s;
        return n_comp <= 1;
    }

    void rebalance(std::span<const std::size_t> nodes, std::size_t target)
    {
        std::size_t size0 = count_side0(nodes);
        while (size0 != target) {
            const int from = size0 > target ? 0 : 1;
            std::vector<std::pair<long, std::size_t>> cands;
            for (auto v : nodes) {
                if (side_[v] != from) continue;
                bool touches = false;
                for (auto w : g_.nbrs(v))
                    if (member(w) && side_[w] == 1 - from) touches = true;
                if (touches) cands.emplace_back(-gain(v), v);
            }
            std::sort(cands.begin(), cands.end());
            bool moved = false;
            for (auto [neg_gain, v] : cands) {
                if (stays_connected_without(nodes, v)) {
                    side_[v] = 1 - from;
                    size0 = from == 0 ? size0 - 1 : size0 + 1;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;  // connectivity wins over exact balance
        }
    }

    const LocalGraph& g_;
    std::vector<int> side_;
    std::vector<std::size_t> comp_;
    std::vector<std::size_t> pos_;
};

} // namespace detail

/// Splits a connected node subset into `parts` connected, balanced parts.
/// Returns one label in [0, parts) per entry of `subset` (same order).
/// Part i targets floor(n/parts) nodes plus one for the lowest n % parts parts.
inline std::vector<std::size_t> kway_split(const ElementGraph& graph, std::span<const std::size_t> subset,
                                           std::size_t parts)
{
    if (subset.empty()) throw Error("kway_split: empty subset");
    if (parts == 0) throw Error("kway_split: parts must be positive");
    parts = std::min(parts, subset.size());

    detail::LocalGraph local(graph, std::vector<std::size_t>(subset.begin(), subset.end()));
    const std::size_t n = local.size();
    std::vector<std::size_t> target(parts, n / parts);
    for (std::size_t i = 0; i < n % parts; ++i) ++target[i];

    std::vector<std::size_t> label(n, 0);
    detail::Bisector bisector(local);

    struct Task {
        std::vector<std::size_t> nodes;
        std::size_t part_lo;
        std::size_t part_count;
    };
    std::vector<Task> stack;
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    stack.push_back({std::move(all), 0, parts});
    while (!stack.empty()) {
        Task t = std::move(stack.back());
        stack.pop_back();
        if (t.part_count == 1) {
            for (auto v : t.nodes) label[v] = t.part_lo;
            continue;
        }
        const std::size_t left_parts = t.part_count / 2;
        std::size_t left_target = 0;
        for (std::size_t p = 0; p < left_parts; ++p) left_target += target[t.part_lo + p];
        bisector.bisect(t.nodes, left_target);
        Task left{{}, t.part_lo, left_parts};
        Task right{{}, t.part_lo + left_parts, t.part_count - left_parts};
        for (auto v : t.nodes) (bisector.side(v) == 0 ? left.nodes : right.nodes).push_back(v);
        bisector.reset(t.nodes);
        if (left.nodes.empty() || right.nodes.empty()) {
            // Degenerate cut; fall back to one part per remaining side.
            auto& nonempty = left.nodes.empty() ? right : left;
            nonempty.part_lo = t.part_lo;
            nonempty.part_count = t.part_count;
            if (nonempty.nodes.size() < t.part_count) nonempty.part_count = nonempty.nodes.size();
            stack.push_back(std::move(nonempty));
            continue;
        }
        stack.push_back(std::move(right));
        stack.push_back(std::move(left));
    }

    // Map back to the caller's ordering of `subset`.
    std::vector<std::size_t> out(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        auto it = std::lower_bound(local.global.begin(), local.global.end(), subset[i]);
        out[i] = label[static_cast<std::size_t>(it - local.global.begin())];
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Nested element aggregations. labels[k][e] is the aggregate of element e at
/// level k; level 0 is the identity, the last level is the coarsest.
struct AggregateHierarchy {
    int dimension = 0;
    std::vector<std::vector<std::size_t>> labels;
    std::vector<std::size_t> counts;

    std::size_t n_levels() const { return labels.size(); }
    std::size_t n_elements() const { return labels.empty() ? 0 : labels.front().size(); }

    /// parent[a] = level-(k+1) aggregate containing level-k aggregate a.
    std::vector<std::size_t> parents(std::size_t k) const
    {
        std::vector<std::size_t> p(counts[k], 0);
        for (std::size_t e = 0; e < n_elements(); ++e) p[labels[k][e]] = labels[k + 1][e];
        return p;
    }

    /// Level-k aggregates contained in each level-(k+1) aggregate, ascending.
    std::vector<std::vector<std::size_t>> children(std::size_t k) const
    {
        std::vector<std::vector<std::size_t>> c(counts[k + 1]);
        const auto p = parents(k);
        for (std::size_t a = 0; a < p.size(); ++a) c[p[a]].push_back(a);
        return c;
    }

    /// Elements per aggregate at level k.
    std::vector<std::vector<std::size_t>> members(std::size_t k) const
    {
        std::vector<std::vector<std::size_t>> m(counts[k]);
        for (std::size_t e = 0; e < n_elements(); ++e) m[labels[k][e]].push_back(e);
        return m;
    }

    friend bool operator==(const AggregateHierarchy&, const AggregateHierarchy&) = default;
};

/// Builds levels coarsest-first: the whole mesh is split into 2^d parts, and
/// every aggregate is split again into 2^d parts (or singletons when it has
/// fewer than 2^d elements) until only singletons remain.
inline AggregateHierarchy build_hierarchy(const ElementGraph& graph, int dimension)
{
    if (dimension < 1 || dimension > 3) throw Error("build_hierarchy: dimension must be 1, 2 or 3");
    const std::size_t n = graph.n_elements();
    if (n == 0) throw Error("build_hierarchy: empty graph");
    const std::size_t fan = std::size_t{1} << dimension;

    std::vector<std::vector<std::vector<std::size_t>>> coarse_first;
    std::vector<std::vector<std::size_t>> current;
    {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        current.push_back(std::move(all));
    }
    bool all_singletons = n == 1;
    while (!all_singletons) {
        std::vector<std::vector<std::size_t>> next;
        all_singletons = true;
        for (const auto& agg : current) {
            if (agg.size() < fan) {
                for (auto e : agg) next.push_back({e});
            } else {
                const auto lab = kway_split(graph, agg, fan);
                const std::size_t k = *std::max_element(lab.begin(), lab.end()) + 1;
                std::vector<std::vector<std::size_t>> parts(k);
                for (std::size_t i = 0; i < agg.size(); ++i) parts[lab[i]].push_back(agg[i]);
                for (auto& p : parts) next.push_back(std::move(p));
            }
        }
        for (const auto& a : next)
            if (a.size() > 1) all_singletons = false;
        coarse_first.push_back(next);
        current = std::move(next);
    }

    AggregateHierarchy h;
    h.dimension = dimension;
    const std::size_t n_levels = std::max<std::size_t>(1, coarse_first.size());
    h.labels.assign(n_levels, std::vector<std::size_t>(n, 0));
    h.counts.assign(n_levels, 0);
    std::iota(h.labels[0].begin(), h.labels[0].end(), std::size_t{0});
    h.counts[0] = n;
    for (std::size_t k = 1; k < n_levels; ++k) {
        const auto& aggs = coarse_first[n_levels - 1 - k];
        for (std::size_t a = 0; a < aggs.size(); ++a)
            for (auto e : aggs[a]) h.labels[k][e] = a;
        h.counts[k] = aggs.size();
    }
    return h;
}

/// Quotient graph: one node per aggregate, dof counts summed.
inline ElementGraph aggregate_graph(const ElementGraph& graph, std::span<const std::size_t> labels)
{
    if (labels.size() != graph.n_elements()) throw DimensionError("aggregate_graph: label count");
    const std::size_t n_agg = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> adj(n_agg);
    std::vector<std::size_t> dofs(n_agg, 0);
    for (std::size_t e = 0; e < graph.n_elements(); ++e) {
        dofs[labels[e]] += graph.dof_count(e);
        for (auto nb : graph.neighbors(e))
            if (labels[nb] != labels[e]) adj[labels[e]].push_back(labels[nb]);
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return ElementGraph(std::move(adj), std::move(dofs));
}

/// True when every aggregate of `labels` induces a connected subgraph.
inline bool aggregates_connected(const ElementGraph& graph, std::span<const std::size_t> labels)
{
    const std::size_t n_agg = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<char> seen(graph.n_elements(), 0);
    std::vector<char> agg_done(n_agg, 0);
    for (std::size_t e = 0; e < graph.n_elements(); ++e) {
        if (agg_done[labels[e]]) {
            if (!seen[e]) return false;
            continue;
        }
        agg_done[labels[e]] = 1;
        std::vector<std::size_t> stack{e};
        seen[e] = 1;
        while (!stack.empty()) {
            auto u = stack.back();
            stack.pop_back();
            for (auto w : graph.neighbors(u))
                if (!seen[w] && labels[w] == labels[e]) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
        }
    }
    return true;
}

inline nlohmann::json hierarchy_to_json(const AggregateHierarchy& h)
{
    nlohmann::json j;
    j["dimension"] = h.dimension;
    j["n_elements"] = h.n_elements();
    j["counts"] = h.counts;
    j["levels"] = h.labels;
    return j;
}

} // namespace aggmg
