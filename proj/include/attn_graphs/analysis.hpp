#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_graphs/errors.hpp"
#include "attn_graphs/graph.hpp"
#include "attn_graphs/model.hpp"

namespace attn_graphs {

struct Provenance {
    std::string dataset;
    AttentionVariant variant = AttentionVariant::DL;
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::uint64_t seed = 0;
};

/// End-to-end information flow among nodes: heads averaged within each
/// layer, layers multiplied in order.
struct AttentionGraph {
    RowMatrix<double> matrix;
    Provenance provenance;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
};

/// Elementwise mean of the per-head matrices of one layer.
inline RowMatrix<double> aggregate_heads(std::span<const RowMatrix<double>> heads) {
    if (heads.empty()) throw DomainError("aggregate_heads: no attention matrices");
    RowMatrix<double> out = heads.front();
    for (std::size_t h = 1; h < heads.size(); ++h) {
        if (heads[h].rows() != out.rows() || heads[h].cols() != out.cols()) {
            throw ShapeError("aggregate_heads: heads differ in shape");
        }
        out += heads[h];
    }
    out /= static_cast<double>(heads.size());
    return out;
}

/// Product A_{L_N} ... A_{L_2} A_{L_1} of layer matrices given in forward
/// order: row i of the result mixes the rows of earlier layers weighted by
/// how strongly i attends to each intermediate node in later ones.
inline RowMatrix<double> aggregate_layers(std::span<const RowMatrix<double>> layers) {
    if (layers.empty()) throw DomainError("aggregate_layers: no layers");
    for (const auto& m : layers) {
        if (m.rows() != m.cols() || m.rows() != layers.front().rows()) {
            throw ShapeError("aggregate_layers: every layer matrix must be the same n x n");
        }
    }
    RowMatrix<double> out = layers.front();
    for (std::size_t l = 1; l < layers.size(); ++l) out = (layers[l] * out).eval();
    return out;
}

inline AttentionGraph attention_graph(const AttentionRecord& record, std::string dataset = {}) {
    if (record.matrices.empty()) throw DomainError("attention record is empty");
    std::vector<RowMatrix<double>> per_layer;
    per_layer.reserve(record.matrices.size());
    for (const auto& heads : record.matrices) per_layer.push_back(aggregate_heads(heads));
    AttentionGraph ag;
    ag.matrix = aggregate_layers(per_layer);
    ag.provenance = {std::move(dataset), record.config.variant, record.config.n_layers, record.config.n_heads,
                     record.seed};
    return ag;
}

// ---------------------------------------------------------------------------
// Quasi-adjacency

struct QuasiAdjacency {
    std::size_t n = 0;
    std::vector<std::uint8_t> binary;  ///< row-major n x n, 1 iff value > threshold
    double threshold = 0.0;
    std::size_t grid_index = 0;  ///< threshold == grid_index / 1000
    std::uint64_t target_edges = 0;
    std::uint64_t achieved_edges = 0;

    bool at(std::size_t i, std::size_t j) const { return binary[i * n + j] != 0; }
    std::uint64_t gap() const {
        return achieved_edges > target_edges ? achieved_edges - target_edges : target_edges - achieved_edges;
    }
    /// No threshold on the grid separates the entries (empty or full result).
    bool degenerate() const { return achieved_edges == 0 || achieved_edges == std::uint64_t{n} * n; }
};

inline constexpr std::size_t kThresholdSteps = 1000;

inline double threshold_at(std::size_t k) { return static_cast<double>(k) / static_cast<double>(kThresholdSteps); }

/// Scans t in {0.000, 0.001, ..., 1.000} for the edge count (entries > t)
/// closest to `target_edges`, preferring the smaller t on ties.
inline QuasiAdjacency threshold_to_quasi_adjacency(const RowMatrix<double>& m, std::uint64_t target_edges) {
    if (target_edges < 1) throw DomainError("threshold search needs a positive target edge count");
    if (m.rows() != m.cols()) throw ShapeError("threshold search needs a square matrix");
    std::vector<double> sorted(m.data(), m.data() + m.size());
    std::sort(sorted.begin(), sorted.end());
    auto count_above = [&](double t) {
        return static_cast<std::uint64_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
    };
    QuasiAdjacency q;
    q.n = static_cast<std::size_t>(m.rows());
    q.target_edges = target_edges;
    std::uint64_t best_gap = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t k = 0; k <= kThresholdSteps; ++k) {
        const auto c = count_above(threshold_at(k));
        const auto gap = c > target_edges ? c - target_edges : target_edges - c;
        if (gap < best_gap) {
            best_gap = gap;
            q.grid_index = k;
            q.achieved_edges = c;
        }
    }
    q.threshold = threshold_at(q.grid_index);
    q.binary.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) q.binary[i] = m.data()[i] > q.threshold;
    return q;
}

inline QuasiAdjacency threshold_to_quasi_adjacency(const AttentionGraph& ag, std::uint64_t target_edges) {
    return threshold_to_quasi_adjacency(ag.matrix, target_edges);
}

// ---------------------------------------------------------------------------
// Structure recovery

struct F1Score {
    std::uint64_t true_positives = 0;
    std::uint64_t false_positives = 0;
    std::uint64_t false_negatives = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1_percent = 0.0;
};

/// F1 of a binary prediction against a binary reference, both row-major
/// n x n. With `include_diagonal` false the n self pairs are skipped.
inline F1Score f1_binary(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference, std::size_t n,
                         bool include_diagonal = true) {
    if (predicted.size() != n * n || reference.size() != n * n) throw ShapeError("f1: matrices must be n x n");
    F1Score s;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!include_diagonal && i == j) continue;
            const bool p = predicted[i * n + j] != 0, r = reference[i * n + j] != 0;
            s.true_positives += p && r;
            s.false_positives += p && !r;
            s.false_negatives += !p && r;
        }
    }
    const auto tp = static_cast<double>(s.true_positives);
    if (s.true_positives + s.false_positives > 0) s.precision = tp / static_cast<double>(s.true_positives + s.false_positives);
    if (s.true_positives + s.false_negatives > 0) s.recall = tp / static_cast<double>(s.true_positives + s.false_negatives);
    if (s.precision + s.recall > 0.0) s.f1_percent = 100.0 * 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

inline std::vector<std::uint8_t> adjacency_bytes(const Graph& g) {
    const auto n = g.num_nodes();
    std::vector<std::uint8_t> a(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto j : g.neighbors(i)) a[i * n + j] = 1;
    }
    return a;
}

/// Compares every ordered entry of the quasi-adjacency with the input
/// adjacency. Self-attention mass counts as false positives unless the
/// diagonal is excluded.
inline F1Score f1_structure_recovery(const QuasiAdjacency& q, const Graph& g, bool include_diagonal = true) {
    if (q.n != g.num_nodes()) throw ShapeError("quasi-adjacency and graph differ in node count");
    return f1_binary(q.binary, adjacency_bytes(g), q.n, include_diagonal);
}

// ---------------------------------------------------------------------------
// Attention ratio

enum class RatioMode {
    EntryMean,    ///< mean over all non-neighbor entries / mean over all neighbor-or-self entries
    PerNodeMean,  ///< mean over nodes of the same ratio restricted to one row
};

/// Average attention to non-neighbors relative to neighbors, with each node
/// counted as its own neighbor.
inline double attention_ratio(const RowMatrix<double>& ag, const Graph& g, RatioMode mode = RatioMode::EntryMean) {
    const auto n = g.num_nodes();
    if (static_cast<std::size_t>(ag.rows()) != n || static_cast<std::size_t>(ag.cols()) != n) {
        throw ShapeError("attention graph and input graph differ in node count");
    }
    if (g.directed_edge_count() == n * (n - 1)) throw DomainError("attention ratio undefined on a complete graph");
    double near_sum = 0.0, far_sum = 0.0;
    std::uint64_t near_count = 0, far_count = 0;
    double per_node_sum = 0.0;
    std::size_t per_node_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double rn = 0.0, rf = 0.0;
        std::size_t cn = 0, cf = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || g.has_edge(i, j)) {
                rn += ag(i, j);
                ++cn;
            } else {
                rf += ag(i, j);
                ++cf;
            }
        }
        near_sum += rn;
        far_sum += rf;
        near_count += cn;
        far_count += cf;
        if (cf > 0 && rn > 0.0) {
            per_node_sum += (rf / static_cast<double>(cf)) / (rn / static_cast<double>(cn));
            ++per_node_count;
        }
    }
    if (mode == RatioMode::PerNodeMean) {
        if (per_node_count == 0) throw DomainError("no node has both non-neighbors and neighbor attention");
        return per_node_sum / static_cast<double>(per_node_count);
    }
    const double near_mean = near_sum / static_cast<double>(near_count);
    if (near_mean == 0.0) throw DomainError("attention ratio undefined: zero attention inside neighborhoods");
    return (far_sum / static_cast<double>(far_count)) / near_mean;
}

// ---------------------------------------------------------------------------
// Hop distribution

struct HopBucket {
    std::uint32_t hop = 0;  ///< HopDistanceMatrix::kUnreachable for disconnected pairs
    double mean = 0.0;
    std::uint64_t count = 0;
};

struct HopSample {
    std::uint32_t hop;
    double value;
};

struct HopDistribution {
    std::vector<HopBucket> buckets;  ///< ascending hop, unreachable last
    std::vector<HopSample> samples;
};

/// Buckets every ordered pair by hop distance (self = hop 0). At most
/// `max_samples` raw (hop, value) pairs are kept, taken at a fixed stride.
inline HopDistribution hop_attention_distribution(const RowMatrix<double>& ag, const HopDistanceMatrix& dist,
                                                  std::size_t max_samples = std::numeric_limits<std::size_t>::max()) {
    const auto n = dist.size();
    if (static_cast<std::size_t>(ag.rows()) != n || static_cast<std::size_t>(ag.cols()) != n) {
        throw ShapeError("attention graph and distance matrix differ in size");
    }
    std::map<std::uint32_t, std::pair<double, std::uint64_t>> acc;
    HopDistribution out;
    const std::uint64_t total = std::uint64_t{n} * n;
    const std::uint64_t stride = max_samples == 0 ? 0 : std::max<std::uint64_t>(1, (total + max_samples - 1) / max_samples);
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j, ++idx) {
            const auto hop = dist.at(i, j);
            auto& [s, c] = acc[hop];
            s += ag(i, j);
            ++c;
            if (stride != 0 && idx % stride == 0) out.samples.push_back({hop, ag(i, j)});
        }
    }
    for (const auto& [hop, sc] : acc) {
        out.buckets.push_back({hop, sc.first / static_cast<double>(sc.second), sc.second});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Correlation

enum class CorrelationDomain {
    All,           ///< every entry
    UnionSupport,  ///< entries where either matrix is nonzero
};

struct Correlation {
    enum class Status { Ok, NoVariance, TooFewPairs };
    Status status = Status::Ok;
    double r = 0.0;  ///< meaningful only when status == Ok
    std::uint64_t pairs = 0;

    bool ok() const { return status == Status::Ok; }
};

inline std::string_view to_string(CorrelationDomain d) { return d == CorrelationDomain::All ? "all" : "union_support"; }

inline CorrelationDomain default_correlation_domain(AttentionVariant v) {
    return v == AttentionVariant::SL ? CorrelationDomain::UnionSupport : CorrelationDomain::All;
}

/// Pearson r over the chosen entry domain, accumulated with Welford's
/// co-moment update.
inline Correlation pairwise_correlation(const RowMatrix<double>& x, const RowMatrix<double>& y,
                                        CorrelationDomain domain = CorrelationDomain::All) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("correlation: matrices differ in shape");
    double mx = 0.0, my = 0.0, cxx = 0.0, cyy = 0.0, cxy = 0.0;
    std::uint64_t k = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double a = x.data()[i], b = y.data()[i];
        if (domain == CorrelationDomain::UnionSupport && a == 0.0 && b == 0.0) continue;
        ++k;
        const double dx = a - mx;
        const double dy = b - my;
        mx += dx / static_cast<double>(k);
        my += dy / static_cast<double>(k);
        cxx += dx * (a - mx);
        cyy += dy * (b - my);
        cxy += dx * (b - my);
    }
    Correlation c;
    c.pairs = k;
    if (k < 2) {
        c.status = Correlation::Status::TooFewPairs;
        return c;
    }
    if (cxx <= 0.0 || cyy <= 0.0) {
        c.status = Correlation::Status::NoVariance;
        return c;
    }
    c.r = std::clamp(cxy / std::sqrt(cxx * cyy), -1.0, 1.0);
    return c;
}

/// (x, y) entry pairs inside the domain, thinned to at most `max_samples`
/// by a fixed stride.
inline std::vector<std::pair<double, double>> correlation_samples(const RowMatrix<double>& x, const RowMatrix<double>& y,
                                                                  CorrelationDomain domain, std::size_t max_samples) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("correlation: matrices differ in shape");
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (domain == CorrelationDomain::UnionSupport && x.data()[i] == 0.0 && y.data()[i] == 0.0) continue;
        idx.push_back(i);
    }
    std::vector<std::pair<double, double>> out;
    if (max_samples == 0 || idx.empty()) return out;
    const std::size_t stride = std::max<std::size_t>(1, (idx.size() + max_samples - 1) / max_samples);
    for (std::size_t k = 0; k < idx.size(); k += stride) out.emplace_back(x.data()[idx[k]], y.data()[idx[k]]);
    return out;
}

struct CorrelationPair {
    std::string label;  ///< e.g. "L0:H0-H1" or "L0-L1"
    Correlation correlation;
    CorrelationDomain domain = CorrelationDomain::All;
};

/// Every head pair within every layer.
inline std::vector<CorrelationPair> head_correlations(const AttentionRecord& r, CorrelationDomain domain) {
    std::vector<CorrelationPair> out;
    for (std::size_t l = 0; l < r.matrices.size(); ++l) {
        const auto& heads = r.matrices[l];
        for (std::size_t a = 0; a < heads.size(); ++a) {
            for (std::size_t b = a + 1; b < heads.size(); ++b) {
                out.push_back({"L" + std::to_string(l) + ":H" + std::to_string(a) + "-H" + std::to_string(b),
                               pairwise_correlation(heads[a], heads[b], domain), domain});
            }
        }
    }
    return out;
}

/// Consecutive layer pairs, each layer head-averaged first.
inline std::vector<CorrelationPair> layer_correlations(const AttentionRecord& r, CorrelationDomain domain) {
    std::vector<CorrelationPair> out;
    for (std::size_t l = 0; l + 1 < r.matrices.size(); ++l) {
        out.push_back({"L" + std::to_string(l) + "-L" + std::to_string(l + 1),
                       pairwise_correlation(aggregate_heads(r.matrices[l]), aggregate_heads(r.matrices[l + 1]), domain),
                       domain});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Column mass

/// Gini coefficient of a non-negative vector (0 = perfectly even).
inline double gini(std::span<const double> values) {
    if (values.empty()) return 0.0;
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    if (total <= 0.0) return 0.0;
    const double n = static_cast<double>(v.size());
    double weighted = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * v[i];
    return weighted / (n * total);
}

struct ColumnMass {
    std::vector<double> mass;          ///< attention received per node
    std::vector<std::size_t> top;      ///< highest-mass nodes, descending
    double gini = 0.0;
};

inline ColumnMass column_mass(const RowMatrix<double>& ag, std::size_t top_k = 10) {
    ColumnMass c;
    c.mass.resize(static_cast<std::size_t>(ag.cols()));
    for (Eigen::Index j = 0; j < ag.cols(); ++j) c.mass[j] = ag.col(j).sum();
    std::vector<std::size_t> order(c.mass.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c.mass[a] > c.mass[b]; });
    order.resize(std::min(top_k, order.size()));
    c.top = std::move(order);
    c.gini = gini(c.mass);
    return c;
}

// ---------------------------------------------------------------------------
// Report

struct AnalysisOptions {
    bool f1_include_diagonal = true;
    RatioMode ratio_mode = RatioMode::EntryMean;
    std::optional<CorrelationDomain> correlation_domain;  ///< default depends on the variant
    std::size_t max_hop_samples = 20000;
    std::size_t top_k = 10;
};

struct AnalysisReport {
    Provenance provenance;
    std::optional<F1Score> f1;  ///< absent when the graph has no edges
    QuasiAdjacency quasi;
    std::optional<double> attention_ratio;
    HopDistribution hops;
    std::vector<CorrelationPair> head_correlations;
    std::vector<CorrelationPair> layer_correlations;
    ColumnMass column_mass;
    HomophilyReport homophily;
    bool row_stochastic = false;
};

inline bool is_row_stochastic(const RowMatrix<double>& m, double tol) {
    if ((m.array() < 0.0).any()) return false;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m.row(i).sum() - 1.0) > tol) return false;
    }
    return true;
}

inline AnalysisReport analyze(const AttentionRecord& record, const Graph& g, const HopDistanceMatrix& dist,
                              const AnalysisOptions& opts = {}) {
    AnalysisReport rep;
    auto ag = attention_graph(record, g.name());
    rep.provenance = ag.provenance;
    rep.row_stochastic = is_row_stochastic(ag.matrix, 1e-4);
    if (g.directed_edge_count() > 0) {
        rep.quasi = threshold_to_quasi_adjacency(ag.matrix, g.directed_edge_count());
        rep.f1 = f1_structure_recovery(rep.quasi, g, opts.f1_include_diagonal);
        rep.homophily = homophily_report(g);
    }
    if (g.directed_edge_count() < g.num_nodes() * (g.num_nodes() - 1)) {
        rep.attention_ratio = attention_ratio(ag.matrix, g, opts.ratio_mode);
    }
    rep.hops = hop_attention_distribution(ag.matrix, dist, opts.max_hop_samples);
    const auto domain = opts.correlation_domain.value_or(default_correlation_domain(record.config.variant));
    rep.head_correlations = head_correlations(record, domain);
    rep.layer_correlations = layer_correlations(record, domain);
    rep.column_mass = column_mass(ag.matrix, opts.top_k);
    return rep;
}

inline nlohmann::json to_json(const Correlation& c) {
    switch (c.status) {
        case Correlation::Status::Ok: return {{"status", "ok"}, {"r", c.r}, {"pairs", c.pairs}};
        case Correlation::Status::NoVariance: return {{"status", "no_variance"}, {"pairs", c.pairs}};
        case Correlation::Status::TooFewPairs: return {{"status", "too_few_pairs"}, {"pairs", c.pairs}};
    }
    return {};
}

inline nlohmann::json to_json(const AnalysisReport& r) {
    using nlohmann::json;
    json j;
    j["provenance"] = {{"dataset", r.provenance.dataset},
                       {"variant", to_string(r.provenance.variant)},
                       {"n_layers", r.provenance.n_layers},
                       {"n_heads", r.provenance.n_heads},
                       {"seed", r.provenance.seed}};
    j["row_stochastic"] = r.row_stochastic;
    if (r.f1) {
        j["f1"] = {{"f1_percent", r.f1->f1_percent},
                   {"precision", r.f1->precision},
                   {"recall", r.f1->recall},
                   {"true_positives", r.f1->true_positives},
                   {"false_positives", r.f1->false_positives},
                   {"false_negatives", r.f1->false_negatives}};
        j["quasi_adjacency"] = {{"threshold", r.quasi.threshold},
                                {"target_edges", r.quasi.target_edges},
                                {"achieved_edges", r.quasi.achieved_edges},
                                {"gap", r.quasi.gap()},
                                {"degenerate", r.quasi.degenerate()}};
        j["homophily"] = {{"node", r.homophily.node_homophily},
                          {"edge", r.homophily.edge_homophily},
                          {"adjusted", r.homophily.adjusted_homophily}};
    }
    j["attention_ratio"] = r.attention_ratio ? json(*r.attention_ratio) : json(nullptr);
    json buckets = json::array();
    for (const auto& b : r.hops.buckets) {
        buckets.push_back({{"hop", b.hop == HopDistanceMatrix::kUnreachable ? json("unreachable") : json(b.hop)},
                           {"mean", b.mean},
                           {"count", b.count}});
    }
    j["hop_distribution"] = buckets;
    auto corr = [](const std::vector<CorrelationPair>& ps) {
        json a = json::array();
        for (const auto& p : ps) {
            auto c = to_json(p.correlation);
            c["pair"] = p.label;
            c["domain"] = to_string(p.domain);
            a.push_back(c);
        }
        return a;
    };
    j["head_correlations"] = corr(r.head_correlations);
    j["layer_correlations"] = corr(r.layer_correlations);
    j["column_mass"] = {{"gini", r.column_mass.gini}, {"top_nodes", r.column_mass.top}};
    return j;
}

/// Binary PBM (P4) with white = edge, matching the usual quasi-adjacency
/// rendering (1 bits are black in PBM, so bits are inverted).
inline std::string encode_pbm(const QuasiAdjacency& q) {
    std::string out = "P4\n" + std::to_string(q.n) + " " + std::to_string(q.n) + "\n";
    const std::size_t row_bytes = (q.n + 7) / 8;
    for (std::size_t i = 0; i < q.n; ++i) {
        std::string row(row_bytes, '\0');
        for (std::size_t j = 0; j < q.n; ++j) {
            if (!q.at(i, j)) row[j / 8] = static_cast<char>(row[j / 8] | (0x80 >> (j % 8)));
        }
        out += row;
    }
    return out;
}

}  // namespace attn_graphs
