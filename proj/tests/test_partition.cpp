#include <gtest/gtest.h>

#include <map>

#include "aggmg/partition.hpp"

using namespace aggmg;

namespace {

ElementGraph cycle4()
{
    return ElementGraph({{1, 3}, {0, 2}, {1, 3}, {0, 2}}, {1, 1, 1, 1});
}

ElementGraph grid(std::size_t n)
{
    std::vector<std::vector<std::size_t>> adj(n * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t e = j * n + i;
            if (i > 0) adj[e].push_back(e - 1);
            if (i + 1 < n) adj[e].push_back(e + 1);
            if (j > 0) adj[e].push_back(e - n);
            if (j + 1 < n) adj[e].push_back(e + n);
        }
    return ElementGraph(std::move(adj), std::vector<std::size_t>(n * n, 1));
}

ElementGraph cube(int d, int m)
{
    CartesianMeshSpec s;
    s.dimension = d;
    s.refinement = m;
    return build_cartesian(s).graph;
}

std::vector<std::size_t> all_nodes(const ElementGraph& g)
{
    std::vector<std::size_t> v(g.n_elements());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

void expect_nested(const AggregateHierarchy& h)
{
    for (std::size_t k = 0; k + 1 < h.n_levels(); ++k) {
        std::map<std::size_t, std::size_t> parent;
        for (std::size_t e = 0; e < h.n_elements(); ++e) {
            auto [it, fresh] = parent.emplace(h.labels[k][e], h.labels[k + 1][e]);
            EXPECT_EQ(it->second, h.labels[k + 1][e]) << "level " << k << " aggregate " << it->first;
        }
    }
}

} // namespace

TEST(KwaySplit, CycleIntoTwoPairs)
{
    const auto g = cycle4();
    const auto lab = kway_split(g, all_nodes(g), 2);
    // every balanced connected 2-partition of C4 pairs adjacent nodes
    std::vector<std::size_t> size(2, 0);
    for (auto l : lab) ++size[l];
    EXPECT_EQ(size[0], 2u);
    EXPECT_EQ(size[1], 2u);
    EXPECT_TRUE(aggregates_connected(g, lab));
}

TEST(KwaySplit, SingletonSubset)
{
    const auto g = cycle4();
    const std::vector<std::size_t> one{2};
    const auto lab = kway_split(g, one, 1);
    ASSERT_EQ(lab.size(), 1u);
    EXPECT_EQ(lab[0], 0u);
}

TEST(KwaySplit, GridIntoFour)
{
    const auto g = grid(4);
    const auto lab = kway_split(g, all_nodes(g), 4);
    std::vector<std::size_t> size(4, 0);
    for (auto l : lab) ++size[l];
    for (auto s : size) EXPECT_EQ(s, 4u);
    EXPECT_TRUE(aggregates_connected(g, lab));
}

TEST(KwaySplit, RemainderGoesToLowestParts)
{
    const auto g = grid(3);
    const auto lab = kway_split(g, all_nodes(g), 4);
    std::vector<std::size_t> size(4, 0);
    for (auto l : lab) ++size[l];
    EXPECT_EQ(size, (std::vector<std::size_t>{3, 2, 2, 2}));
    EXPECT_TRUE(aggregates_connected(g, lab));
}

TEST(KwaySplit, RejectsEmptyInput)
{
    const auto g = cycle4();
    EXPECT_THROW(kway_split(g, std::vector<std::size_t>{}, 2), Error);
    EXPECT_THROW(kway_split(g, all_nodes(g), 0), Error);
}

TEST(BuildHierarchy, CubeRefinementFour)
{
    const auto g = cube(3, 4);
    const auto h = build_hierarchy(g, 3);
    // N = ceil(log_8 4096) = 4 levels, finest first
    EXPECT_EQ(h.counts, (std::vector<std::size_t>{4096, 512, 64, 8}));
}

TEST(BuildHierarchy, ExactlyTwoToTheD)
{
    const auto g = cube(2, 1);
    const auto h = build_hierarchy(g, 2);
    ASSERT_EQ(h.n_levels(), 1u);
    EXPECT_EQ(h.counts[0], 4u);
    for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(h.labels[0][e], e);
}

TEST(BuildHierarchy, Grid4x4Quadrants)
{
    const auto g = grid(4);
    const auto h = build_hierarchy(g, 2);
    ASSERT_EQ(h.n_levels(), 2u);
    EXPECT_EQ(h.counts[1], 4u);
    for (const auto& m : h.members(1)) EXPECT_EQ(m.size(), 4u);
    expect_nested(h);
    EXPECT_TRUE(aggregates_connected(g, h.labels[1]));
}

class HierarchyInvariants : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(HierarchyInvariants, NestedConnectedBalanced)
{
    const auto [d, m] = GetParam();
    const auto g = cube(d, m);
    const auto h = build_hierarchy(g, d);
    const std::size_t fan = std::size_t{1} << d;
    for (std::size_t e = 0; e < g.n_elements(); ++e) EXPECT_EQ(h.labels[0][e], e);
    EXPECT_EQ(h.counts.back(), std::min(fan, g.n_elements()));
    expect_nested(h);
    for (std::size_t k = 0; k < h.n_levels(); ++k) {
        EXPECT_TRUE(aggregates_connected(g, h.labels[k])) << "level " << k;
        const auto members = h.members(k);
        std::size_t lo = g.n_elements(), hi = 0;
        for (const auto& a : members) {
            lo = std::min(lo, a.size());
            hi = std::max(hi, a.size());
        }
        EXPECT_LE(hi, 2 * lo) << "level " << k;
    }
    for (std::size_t k = 0; k + 1 < h.n_levels(); ++k)
        for (const auto& c : h.children(k)) EXPECT_LE(c.size(), fan);
    EXPECT_EQ(build_hierarchy(g, d), h);
}

INSTANTIATE_TEST_SUITE_P(Partition, HierarchyInvariants,
                         ::testing::Values(std::pair{1, 4}, std::pair{2, 3}, std::pair{2, 4}, std::pair{3, 2},
                                           std::pair{3, 3}));

TEST(BuildHierarchy, StructuredCubeGivesOctants)
{
    // on 8^3 the coarsest aggregates are the eight 4^3 octants
    CartesianMeshSpec s;
    s.refinement = 3;
    const auto mesh = build_cartesian(s);
    const auto h = build_hierarchy(mesh.graph, 3);
    const auto& top = h.labels.back();
    for (std::size_t e = 0; e < mesh.graph.n_elements(); ++e) {
        const auto c = mesh.coords(e);
        const auto ref = mesh.index({c[0] & ~std::size_t{3}, c[1] & ~std::size_t{3}, c[2] & ~std::size_t{3}});
        EXPECT_EQ(top[e], top[ref]);
    }
}

TEST(AggregateGraph, Singletons)
{
    const auto g = grid(3);
    EXPECT_EQ(aggregate_graph(g, all_nodes(g)), g);
}

TEST(AggregateGraph, CyclePairs)
{
    const auto g = cycle4();
    const auto q = aggregate_graph(g, std::vector<std::size_t>{0, 0, 1, 1});
    EXPECT_EQ(q.n_elements(), 2u);
    EXPECT_EQ(q.n_edges(), 1u);
    EXPECT_EQ(q.dof_count(0), 2u);
}

TEST(AggregateGraph, QuadrantsGiveTwoByTwo)
{
    const auto g = grid(4);
    std::vector<std::size_t> lab(16);
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < 4; ++i) lab[j * 4 + i] = (j / 2) * 2 + i / 2;
    EXPECT_EQ(aggregate_graph(g, lab), ElementGraph(grid(2).adjacency(), {4, 4, 4, 4}));
}

TEST(AggregatesConnected, DetectsSplitAggregate)
{
    const auto g = grid(3);
    std::vector<std::size_t> lab(9, 1);
    lab[0] = 0;
    lab[8] = 0;
    EXPECT_FALSE(aggregates_connected(g, lab));
}

TEST(HierarchyJson, HasCountsAndLabels)
{
    const auto h = build_hierarchy(grid(4), 2);
    const auto j = hierarchy_to_json(h);
    EXPECT_EQ(j["counts"].get<std::vector<std::size_t>>(), h.counts);
    EXPECT_EQ(j["levels"].size(), h.n_levels());
}
