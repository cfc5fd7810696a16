#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "attn_graphs/errors.hpp"

namespace attn_graphs {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Undirected, unweighted node-classification graph.
///
/// Adjacency is stored twice: as sorted neighbor lists (for traversal) and as
/// a dense byte matrix (for O(1) lookups from the n x n analyses). Edge
/// features are the adjacency entries themselves, so there is no separate
/// edge-feature storage.
class Graph {
public:
    Graph() = default;

    /// Builds a graph from an edge list in either or both orientations.
    /// Duplicates collapse; self-loops and out-of-range ids throw.
    Graph(std::size_t n, std::span<const Edge> edges, RowMatrix<double> features,
          std::vector<std::uint32_t> labels, std::size_t num_classes, std::string name = {})
        : n_(n),
          features_(std::move(features)),
          labels_(std::move(labels)),
          num_classes_(num_classes),
          name_(std::move(name)) {
        if (static_cast<std::size_t>(features_.rows()) != n_) {
            throw ShapeError("feature matrix has " + std::to_string(features_.rows()) +
                             " rows, expected " + std::to_string(n_));
        }
        if (labels_.size() != n_) {
            throw ShapeError("label vector has " + std::to_string(labels_.size()) +
                             " entries, expected " + std::to_string(n_));
        }
        if (num_classes_ < 2) throw DomainError("a classification graph needs at least 2 classes");
        for (auto y : labels_) {
            if (y >= num_classes_) throw DomainError("label " + std::to_string(y) + " outside [0, K)");
        }

        adjacency_.assign(n_ * n_, 0);
        for (auto [u, v] : edges) {
            if (u >= n_ || v >= n_) throw DomainError("edge endpoint outside [0, n)");
            if (u == v) throw DomainError("self-loop on node " + std::to_string(u));
            adjacency_[u * n_ + v] = 1;
            adjacency_[v * n_ + u] = 1;
        }
        offsets_.assign(n_ + 1, 0);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto* row = &adjacency_[i * n_];
            offsets_[i + 1] = offsets_[i] + static_cast<std::size_t>(std::count(row, row + n_, 1));
        }
        neighbors_.resize(offsets_[n_]);
        for (std::size_t i = 0; i < n_; ++i) {
            std::size_t k = offsets_[i];
            for (std::size_t j = 0; j < n_; ++j) {
                if (adjacency_[i * n_ + j]) neighbors_[k++] = static_cast<NodeId>(j);
            }
        }
    }

    std::size_t num_nodes() const noexcept { return n_; }
    std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    /// 2|E|: every undirected edge counted in both orientations.
    std::size_t directed_edge_count() const noexcept { return neighbors_.size(); }
    std::size_t undirected_edge_count() const noexcept { return neighbors_.size() / 2; }
    const std::string& name() const noexcept { return name_; }

    bool has_edge(std::size_t i, std::size_t j) const { return adjacency_[i * n_ + j] != 0; }
    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
    std::span<const NodeId> neighbors(std::size_t i) const {
        return {neighbors_.data() + offsets_[i], degree(i)};
    }

    const RowMatrix<double>& features() const noexcept { return features_; }
    const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
    std::uint32_t label(std::size_t i) const { return labels_[i]; }

    /// Both orientations, sorted by (source, target).
    std::vector<Edge> directed_edges() const {
        std::vector<Edge> out;
        out.reserve(neighbors_.size());
        for (std::size_t i = 0; i < n_; ++i) {
            for (auto j : neighbors(i)) out.emplace_back(static_cast<NodeId>(i), j);
        }
        return out;
    }

    RowMatrix<double> adjacency_matrix() const {
        RowMatrix<double> a(n_, n_);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) a(i, j) = adjacency_[i * n_ + j];
        }
        return a;
    }

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> adjacency_;
    std::vector<std::size_t> offsets_;
    std::vector<NodeId> neighbors_;
    RowMatrix<double> features_;
    std::vector<std::uint32_t> labels_;
    std::size_t num_classes_ = 0;
    std::string name_;
};

/// Graph with nodes relabelled so that old node i becomes perm[i].
inline Graph permute_graph(const Graph& g, std::span<const std::size_t> perm) {
    const auto n = g.num_nodes();
    std::vector<Edge> edges;
    for (auto [u, v] : g.directed_edges()) {
        edges.emplace_back(static_cast<NodeId>(perm[u]), static_cast<NodeId>(perm[v]));
    }
    RowMatrix<double> x(n, g.feature_dim());
    std::vector<std::uint32_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x.row(perm[i]) = g.features().row(i);
        y[perm[i]] = g.label(i);
    }
    return Graph(n, edges, std::move(x), std::move(y), g.num_classes(), g.name());
}

inline std::vector<std::size_t> degree_vector(const Graph& g) {
    std::vector<std::size_t> d(g.num_nodes());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g.degree(i);
    return d;
}

/// All-pairs hop distances. Unreachable pairs hold a sentinel that is never
/// interpreted as a distance.
class HopDistanceMatrix {
public:
    static constexpr std::uint32_t kUnreachable = std::numeric_limits<std::uint32_t>::max();

    HopDistanceMatrix() = default;
    explicit HopDistanceMatrix(std::size_t n) : n_(n), dist_(n * n, kUnreachable) {}

    std::size_t size() const noexcept { return n_; }
    std::uint32_t at(std::size_t i, std::size_t j) const { return dist_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, std::uint32_t d) { dist_[i * n_ + j] = d; }
    bool reachable(std::size_t i, std::size_t j) const { return at(i, j) != kUnreachable; }

    friend bool operator==(const HopDistanceMatrix&, const HopDistanceMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint32_t> dist_;
};

/// Breadth-first search from every source.
inline HopDistanceMatrix shortest_path_lengths(const Graph& g) {
    const auto n = g.num_nodes();
    HopDistanceMatrix dist(n);
    std::vector<NodeId> frontier;
    frontier.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        frontier.clear();
        frontier.push_back(static_cast<NodeId>(s));
        dist.set(s, s, 0);
        for (std::size_t head = 0; head < frontier.size(); ++head) {
            const auto u = frontier[head];
            const auto du = dist.at(s, u);
            for (auto v : g.neighbors(u)) {
                if (!dist.reachable(s, v)) {
                    dist.set(s, v, du + 1);
                    frontier.push_back(v);
                }
            }
        }
    }
    return dist;
}

/// Ordered-pair counts per hop value.
struct HopHistogram {
    std::map<std::uint32_t, std::uint64_t> by_hop;
    std::uint64_t unreachable = 0;

    std::uint64_t total() const {
        std::uint64_t t = unreachable;
        for (const auto& [hop, count] : by_hop) t += count;
        return t;
    }
};

inline HopHistogram hop_histogram(const HopDistanceMatrix& dist) {
    HopHistogram h;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        for (std::size_t j = 0; j < dist.size(); ++j) {
            if (dist.reachable(i, j)) {
                ++h.by_hop[dist.at(i, j)];
            } else {
                ++h.unreachable;
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Homophily

enum class ClassShareMode {
    Degree,   ///< p(k) = sum of degrees of class-k nodes / 2|E|
    Uniform,  ///< p(k) = |{v : y_v = k}| / n
};

inline std::vector<double> class_shares(const Graph& g, ClassShareMode mode) {
    std::vector<double> p(g.num_classes(), 0.0);
    double total = 0.0;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        const double w = mode == ClassShareMode::Degree ? static_cast<double>(g.degree(v)) : 1.0;
        p[g.label(v)] += w;
        total += w;
    }
    if (total == 0.0) throw DomainError("class shares undefined: no edges");
    for (auto& x : p) x /= total;
    return p;
}

/// Mean over nodes of the same-label fraction of their neighbors. Isolated
/// nodes have no defined fraction and are left out of the mean.
inline double node_homophily(const Graph& g) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        const auto nbrs = g.neighbors(v);
        if (nbrs.empty()) continue;
        const auto same = std::count_if(nbrs.begin(), nbrs.end(),
                                        [&](NodeId u) { return g.label(u) == g.label(v); });
        sum += static_cast<double>(same) / static_cast<double>(nbrs.size());
        ++counted;
    }
    if (counted == 0) throw DomainError("node homophily undefined: every node has degree 0");
    return sum / static_cast<double>(counted);
}

inline double edge_homophily(const Graph& g) {
    if (g.undirected_edge_count() == 0) throw DomainError("edge homophily undefined on an edgeless graph");
    std::size_t same = 0;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        for (auto u : g.neighbors(v)) {
            if (u > v && g.label(u) == g.label(v)) ++same;
        }
    }
    return static_cast<double>(same) / static_cast<double>(g.undirected_edge_count());
}

/// (h_edge - sum p(k)^2) / (1 - sum p(k)^2), given the edge homophily and
/// the class shares.
inline double adjusted_homophily_from(double h_edge, std::span<const double> shares) {
    double expected = 0.0;
    for (auto p : shares) expected += p * p;
    if (expected >= 1.0) throw DomainError("adjusted homophily undefined for a single occupied class");
    return (h_edge - expected) / (1.0 - expected);
}

inline double adjusted_homophily(const Graph& g, ClassShareMode mode = ClassShareMode::Degree) {
    const double h = edge_homophily(g);
    const auto p = class_shares(g, mode);
    return adjusted_homophily_from(h, p);
}

struct HomophilyReport {
    double node_homophily = 0.0;
    double edge_homophily = 0.0;
    /// NaN when every edge endpoint falls in one class.
    double adjusted_homophily = 0.0;
    std::vector<double> class_shares;
    ClassShareMode share_mode = ClassShareMode::Degree;
};

inline HomophilyReport homophily_report(const Graph& g, ClassShareMode mode = ClassShareMode::Degree) {
    HomophilyReport r;
    r.node_homophily = node_homophily(g);
    r.edge_homophily = edge_homophily(g);
    r.class_shares = class_shares(g, mode);
    double expected = 0.0;
    for (auto p : r.class_shares) expected += p * p;
    r.adjusted_homophily = expected >= 1.0 ? std::numeric_limits<double>::quiet_NaN()
                                           : adjusted_homophily_from(r.edge_homophily, r.class_shares);
    r.share_mode = mode;
    return r;
}

}  // namespace attn_graphs
