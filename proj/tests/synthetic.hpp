#pragma once

#include <cstdint>
#include <vector>

#include <attn_graphs/graph.hpp>
#include <attn_graphs/random.hpp>

namespace attn_graphs::synth {

/// Planted-partition graph: `n` nodes in `k` classes, each within-class pair
/// linked with probability p_in and each cross pair with p_out. Features are
/// a noisy one-hot of the class followed by `extra_dims` pure-noise columns.
inline Graph planted_partition(std::size_t n, std::size_t k, double p_in, double p_out, double feature_noise,
                               std::size_t extra_dims, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % k);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? p_in : p_out;
            if (rng.uniform01() < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    }
    RowMatrix<double> x(n, k + extra_dims);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k + extra_dims; ++c) {
            x(i, c) = feature_noise * rng.normal() + (c == labels[i] ? 1.0 : 0.0);
        }
    }
    return Graph(n, edges, std::move(x), std::move(labels), k, "planted");
}

/// Path 0-1-...-(n-1) with alternating labels and constant features.
inline Graph path_graph(std::size_t n) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i + 1));
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % 2);
    return Graph(n, edges, RowMatrix<double>::Ones(n, 2), std::move(labels), 2, "path");
}

}  // namespace attn_graphs::synth
