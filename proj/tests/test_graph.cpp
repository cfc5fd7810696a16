#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <attn_graphs/graph.hpp>
#include <attn_graphs/random.hpp>

#include "oracles.hpp"
#include "synthetic.hpp"

using namespace attn_graphs;

namespace {

Graph make(std::size_t n, std::vector<Edge> edges, std::vector<std::uint32_t> labels, std::size_t k) {
    return Graph(n, edges, RowMatrix<double>::Zero(n, 1), std::move(labels), k);
}

Graph random_graph(std::size_t n, double p, std::uint64_t seed, std::size_t k = 3) {
    Rng rng(seed);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rng.uniform01() < p) edges.emplace_back(i, j);
        }
    }
    std::vector<std::uint32_t> labels(n);
    for (auto& y : labels) y = static_cast<std::uint32_t>(rng.uniform_below(k));
    labels[0] = 0;
    labels[1] = 1;
    return make(n, edges, labels, k);
}

}  // namespace

TEST(Graph, SymmetrizesAndCountsBothOrientations) {
    auto g = make(3, {{0, 1}, {1, 2}, {2, 1}}, {0, 1, 0}, 2);
    EXPECT_TRUE(g.has_edge(1, 0));
    EXPECT_TRUE(g.has_edge(2, 1));
    EXPECT_FALSE(g.has_edge(0, 0));
    EXPECT_EQ(g.directed_edge_count(), 4u);
    EXPECT_EQ(g.undirected_edge_count(), 2u);
}

TEST(Graph, RejectsInvalidInput) {
    EXPECT_THROW(make(3, {{0, 0}}, {0, 1, 0}, 2), DomainError);
    EXPECT_THROW(make(3, {{0, 3}}, {0, 1, 0}, 2), DomainError);
    EXPECT_THROW(make(3, {}, {0, 2, 0}, 2), DomainError);
    EXPECT_THROW(make(3, {}, {0, 0, 0}, 1), DomainError);
    EXPECT_THROW(Graph(3, {}, RowMatrix<double>::Zero(2, 1), {0, 1, 0}, 2), ShapeError);
}

TEST(DegreeVector, PathAndIsolatedNode) {
    EXPECT_EQ(degree_vector(synth::path_graph(3)), (std::vector<std::size_t>{1, 2, 1}));
    auto g = make(3, {{0, 1}}, {0, 1, 0}, 2);
    EXPECT_EQ(degree_vector(g)[2], 0u);
}

TEST(DegreeVector, SumsToDirectedEdgeCount) {
    auto g = random_graph(40, 0.2, 3);
    auto d = degree_vector(g);
    EXPECT_EQ(std::accumulate(d.begin(), d.end(), std::size_t{0}), g.directed_edge_count());
}

TEST(ShortestPaths, PathAndDisconnected) {
    auto dist = shortest_path_lengths(synth::path_graph(3));
    EXPECT_EQ(dist.at(0, 2), 2u);
    EXPECT_EQ(dist.at(1, 1), 0u);
    auto iso = shortest_path_lengths(make(2, {}, {0, 1}, 2));
    EXPECT_EQ(iso.at(0, 1), HopDistanceMatrix::kUnreachable);
    EXPECT_FALSE(iso.reachable(0, 1));
}

TEST(ShortestPaths, MatchesFloydWarshallOracle) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const std::size_t n = 5 + seed * 4;  // up to 49 nodes
        auto g = random_graph(n, seed % 3 == 0 ? 0.04 : 0.12, seed);
        auto dist = shortest_path_lengths(g);
        auto oracle = oracles::floyd_warshall(g);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                ASSERT_EQ(dist.at(i, j), oracle[i][j]) << "n=" << n << " pair " << i << "," << j;
            }
        }
    }
}

TEST(ShortestPaths, SymmetricUnitOnEdgesTriangleInequality) {
    auto g = random_graph(30, 0.1, 11);
    auto dist = shortest_path_lengths(g);
    for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t j = 0; j < 30; ++j) {
            EXPECT_EQ(dist.at(i, j), dist.at(j, i));
            EXPECT_EQ(dist.at(i, j) == 1, g.has_edge(i, j));
            for (std::size_t k = 0; k < 30; ++k) {
                if (dist.reachable(i, k) && dist.reachable(k, j)) {
                    EXPECT_LE(dist.at(i, j), dist.at(i, k) + dist.at(k, j));
                }
            }
        }
    }
}

TEST(HopHistogram, PathEdgelessAndTotals) {
    auto h = hop_histogram(shortest_path_lengths(synth::path_graph(3)));
    EXPECT_EQ(h.by_hop, (std::map<std::uint32_t, std::uint64_t>{{0, 3}, {1, 4}, {2, 2}}));
    EXPECT_EQ(h.unreachable, 0u);
    auto e = hop_histogram(shortest_path_lengths(make(2, {}, {0, 1}, 2)));
    EXPECT_EQ(e.by_hop, (std::map<std::uint32_t, std::uint64_t>{{0, 2}}));
    EXPECT_EQ(e.unreachable, 2u);
    auto r = hop_histogram(shortest_path_lengths(random_graph(37, 0.05, 5)));
    EXPECT_EQ(r.total(), 37u * 37u);
}

TEST(Homophily, NodeHomophilyExamples) {
    EXPECT_DOUBLE_EQ(node_homophily(make(3, {{0, 1}, {1, 2}, {0, 2}}, {1, 1, 1}, 2)), 1.0);
    EXPECT_DOUBLE_EQ(node_homophily(make(2, {{0, 1}}, {0, 1}, 2)), 0.0);
    EXPECT_THROW(node_homophily(make(2, {}, {0, 1}, 2)), DomainError);
}

TEST(Homophily, NodeHomophilyExcludesIsolatedNodes) {
    // Node 2 is isolated and must not drag the mean toward 0 or 1.
    auto g = make(4, {{0, 1}, {0, 3}}, {0, 0, 1, 1}, 2);
    // node 0: 1/2, node 1: 1/1, node 3: 0/1
    EXPECT_DOUBLE_EQ(node_homophily(g), (0.5 + 1.0 + 0.0) / 3.0);
}

TEST(Homophily, EdgeHomophilyExamples) {
    EXPECT_DOUBLE_EQ(edge_homophily(make(3, {{0, 1}, {1, 2}}, {0, 0, 0}, 2)), 1.0);
    EXPECT_DOUBLE_EQ(edge_homophily(make(3, {{0, 1}, {1, 2}, {0, 2}}, {0, 1, 2}, 3)), 0.0);
    EXPECT_THROW(edge_homophily(make(3, {}, {0, 1, 0}, 2)), DomainError);
}

TEST(Homophily, AdjustedIsZeroWhenObservedEqualsExpected) {
    EXPECT_DOUBLE_EQ(adjusted_homophily_from(0.5, std::vector<double>{0.5, 0.5}), 0.0);
    // 4-cycle 0-1-2-3 with labels 0,0,1,1: two of four edges homophilous,
    // degree-weighted shares (0.5, 0.5).
    auto g = make(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, {0, 0, 1, 1}, 2);
    EXPECT_DOUBLE_EQ(edge_homophily(g), 0.5);
    EXPECT_NEAR(adjusted_homophily(g), 0.0, 1e-15);
}

TEST(Homophily, AdjustedMatchesIndependentComputation) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto g = random_graph(60, 0.08, 100 + seed, 4);
        for (auto mode : {ClassShareMode::Degree, ClassShareMode::Uniform}) {
            const double expected = oracles::adjusted_homophily(g, mode == ClassShareMode::Degree);
            EXPECT_NEAR(adjusted_homophily(g, mode), expected, 1e-12);
        }
    }
}

TEST(Homophily, SingleClassAdjustedIsDomainError) {
    auto g = make(3, {{0, 1}, {1, 2}}, {0, 0, 0}, 2);
    EXPECT_THROW(adjusted_homophily(g), DomainError);
}

TEST(Homophily, ReportInvariants) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto g = random_graph(50, 0.1, 200 + seed, 3);
        auto r = homophily_report(g);
        double sum = 0.0;
        for (double p : r.class_shares) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-9);
        EXPECT_GE(r.node_homophily, 0.0);
        EXPECT_LE(r.node_homophily, 1.0);
        EXPECT_GE(r.edge_homophily, 0.0);
        EXPECT_LE(r.edge_homophily, 1.0);
        EXPECT_GE(r.adjusted_homophily, -1.0);
        EXPECT_LE(r.adjusted_homophily, 1.0);
        EXPECT_DOUBLE_EQ(r.adjusted_homophily, adjusted_homophily_from(r.edge_homophily, r.class_shares));
    }
}

TEST(Graph, PermutationRelabelsEverything) {
    auto g = random_graph(12, 0.3, 9);
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(4);
    rng.shuffle(std::span(perm));
    auto p = permute_graph(g, perm);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(p.label(perm[i]), g.label(i));
        for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(p.has_edge(perm[i], perm[j]), g.has_edge(i, j));
    }
    EXPECT_DOUBLE_EQ(node_homophily(p), node_homophily(g));
}
