#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_graphs/errors.hpp"
#include "attn_graphs/graph.hpp"
#include "attn_graphs/random.hpp"

namespace attn_graphs {

// ---------------------------------------------------------------------------
// Canonical binary format "AGRF" (all integers little-endian):
//
//   0   char[4]  magic "AGRF"
//   4   u32      format version (1)
//   8   u64      n   node count
//   16  u64      d   feature dimension
//   24  u64      K   class count
//   32  u64      E   directed edge records (2|E| for a symmetric graph)
//   40  u64      upstream edge count before cleaning (0 = unknown)
//   48  u32      name length L, followed by L bytes of UTF-8 name
//   ..  E x (u32 source, u32 target)
//   ..  n x d f64 features, row-major
//   ..  n x u32 labels
//   EOF
// ---------------------------------------------------------------------------

inline constexpr char kDatasetMagic[4] = {'A', 'G', 'R', 'F'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct LoadedDataset {
    Graph graph;
    /// Edge count reported by the upstream source (raw records, possibly
    /// asymmetric); zero when unknown.
    std::uint64_t source_edge_count = 0;
    std::vector<std::string> warnings;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "canonical I/O assumes a little-endian host");

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::uint64_t offset() const { return pos_; }
    std::uint64_t remaining() const { return bytes_.size() - pos_; }

    template <typename T>
    bool read(T& out) {
        if (remaining() < sizeof(T)) return false;
        std::memcpy(&out, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return true;
    }

    bool read_bytes(std::size_t count, std::string& out) {
        if (remaining() < count) return false;
        out.assign(bytes_.data() + pos_, count);
        pos_ += count;
        return true;
    }

private:
    std::string bytes_;
    std::uint64_t pos_ = 0;
};

template <typename T>
void put(std::string& buf, T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf.append(raw, sizeof(T));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file then renames, so readers never observe a
/// partially written artifact.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Collects directed edge records into a symmetric edge set, validating ids
/// and reporting one-sided or duplicated records as warnings.
class EdgeCollector {
public:
    explicit EdgeCollector(std::uint64_t n) : n_(n) {}

    void add(std::uint64_t u, std::uint64_t v, std::uint64_t offset) {
        if (u >= n_ || v >= n_) {
            throw NodeIdRangeError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                       ") references a node outside [0, " + std::to_string(n_) + ")",
                                   offset);
        }
        if (u == v) throw SelfLoopError("self-loop edge (" + std::to_string(u) + ", " + std::to_string(v) + ")", offset);
        if (!records_.emplace(static_cast<NodeId>(u), static_cast<NodeId>(v)).second) ++duplicates_;
    }

    std::vector<Edge> finish(std::vector<std::string>& warnings) const {
        std::size_t one_sided = 0;
        for (auto [u, v] : records_) {
            if (!records_.contains({v, u})) ++one_sided;
        }
        if (duplicates_ > 0) {
            warnings.push_back(std::to_string(duplicates_) + " duplicate edge records were collapsed");
        }
        if (one_sided > 0) {
            warnings.push_back(std::to_string(one_sided) +
                               " edges were present in one orientation only; the graph was symmetrized");
        }
        return {records_.begin(), records_.end()};
    }

private:
    std::uint64_t n_;
    std::set<Edge> records_;
    std::size_t duplicates_ = 0;
};

}  // namespace detail

inline LoadedDataset decode_canonical(std::string bytes) {
    detail::ByteReader in(std::move(bytes));
    char magic[4];
    if (!in.read(magic) || std::memcmp(magic, kDatasetMagic, 4) != 0) {
        throw HeaderError("missing AGRF magic", 0);
    }
    std::uint32_t version = 0;
    if (!in.read(version)) throw HeaderError("truncated header", in.offset());
    if (version != kDatasetVersion) {
        throw HeaderError("unsupported format version " + std::to_string(version), 4);
    }
    std::uint64_t n = 0, d = 0, k = 0, e = 0, source_edges = 0;
    if (!in.read(n) || !in.read(d) || !in.read(k) || !in.read(e) || !in.read(source_edges)) {
        throw HeaderError("truncated header", in.offset());
    }
    if (n == 0 || n > std::numeric_limits<NodeId>::max()) throw HeaderError("invalid node count", 8);
    if (k < 2) throw HeaderError("class count must be at least 2", 24);
    std::uint32_t name_len = 0;
    std::string name;
    if (!in.read(name_len) || !in.read_bytes(name_len, name)) {
        throw HeaderError("truncated dataset name", in.offset());
    }
    if (in.remaining() / 8 < e) throw HeaderError("edge section shorter than header edge count", in.offset());

    LoadedDataset out;
    out.source_edge_count = source_edges;
    detail::EdgeCollector edges(n);
    for (std::uint64_t r = 0; r < e; ++r) {
        const auto at = in.offset();
        std::uint32_t u = 0, v = 0;
        in.read(u);
        in.read(v);
        edges.add(u, v, at);
    }
    auto symmetric = edges.finish(out.warnings);

    const std::uint64_t feature_bytes = n * d * sizeof(double);
    if (d != 0 && feature_bytes / d / sizeof(double) != n) throw HeaderError("feature section size overflows", 16);
    if (in.remaining() < feature_bytes) {
        throw FeatureCountError("feature section holds fewer than n x d values", in.offset());
    }
    RowMatrix<double> x(n, d);
    for (std::uint64_t i = 0; i < n * d; ++i) in.read(x.data()[i]);

    std::vector<std::uint32_t> labels(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto at = in.offset();
        if (!in.read(labels[i])) throw FeatureCountError("label section holds fewer than n entries", at);
        if (labels[i] >= k) {
            throw LabelRangeError("label " + std::to_string(labels[i]) + " of node " + std::to_string(i) +
                                      " outside [0, " + std::to_string(k) + ")",
                                  at);
        }
    }
    if (in.remaining() != 0) {
        throw FeatureCountError("unexpected trailing bytes after label section", in.offset());
    }
    out.graph = Graph(n, symmetric, std::move(x), std::move(labels), k, std::move(name));
    return out;
}

inline LoadedDataset load_canonical(const std::filesystem::path& path) {
    return decode_canonical(detail::read_file(path));
}

inline std::string encode_canonical(const Graph& g, std::uint64_t source_edge_count = 0) {
    std::string buf;
    buf.append(kDatasetMagic, 4);
    detail::put<std::uint32_t>(buf, kDatasetVersion);
    detail::put<std::uint64_t>(buf, g.num_nodes());
    detail::put<std::uint64_t>(buf, g.feature_dim());
    detail::put<std::uint64_t>(buf, g.num_classes());
    detail::put<std::uint64_t>(buf, g.directed_edge_count());
    detail::put<std::uint64_t>(buf, source_edge_count);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(g.name().size()));
    buf += g.name();
    for (auto [u, v] : g.directed_edges()) {
        detail::put<std::uint32_t>(buf, u);
        detail::put<std::uint32_t>(buf, v);
    }
    const auto& x = g.features();
    for (Eigen::Index i = 0; i < x.size(); ++i) detail::put<double>(buf, x.data()[i]);
    for (auto y : g.labels()) detail::put<std::uint32_t>(buf, y);
    return buf;
}

inline void write_canonical(const Graph& g, const std::filesystem::path& path, std::uint64_t source_edge_count = 0) {
    detail::write_file_atomic(path, encode_canonical(g, source_edge_count));
}

// ---------------------------------------------------------------------------
// JSON-lines twin. Line 1 is the header object, then one {"edge":[u,v]} line
// per directed record, then one {"node":i,"x":[...],"y":k} line per node.
// Offsets in errors are byte offsets of the offending line.

inline std::string encode_jsonl(const Graph& g, std::uint64_t source_edge_count = 0) {
    using nlohmann::json;
    std::ostringstream out;
    out << json{{"magic", "AGRF"},
                {"version", kDatasetVersion},
                {"n", g.num_nodes()},
                {"d", g.feature_dim()},
                {"K", g.num_classes()},
                {"directed_edge_count", g.directed_edge_count()},
                {"source_edge_count", source_edge_count},
                {"name", g.name()}}
               .dump()
        << '\n';
    for (auto [u, v] : g.directed_edges()) out << json{{"edge", {u, v}}}.dump() << '\n';
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        std::vector<double> row(g.features().row(i).begin(), g.features().row(i).end());
        out << json{{"node", i}, {"x", row}, {"y", g.label(i)}}.dump() << '\n';
    }
    return out.str();
}

inline LoadedDataset decode_jsonl(const std::string& text) {
    using nlohmann::json;
    std::uint64_t offset = 0;
    std::size_t pos = 0;
    auto next_line = [&](std::string& line) {
        if (pos >= text.size()) return false;
        offset = pos;
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        line = text.substr(pos, end - pos);
        pos = end + 1;
        return true;
    };
    std::string line;
    if (!next_line(line)) throw HeaderError("empty file", 0);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw HeaderError(std::string("header is not JSON: ") + e.what(), 0);
    }
    if (header.value("magic", "") != "AGRF") throw HeaderError("missing AGRF magic", 0);
    if (header.value("version", 0u) != kDatasetVersion) throw HeaderError("unsupported format version", 0);
    std::uint64_t n = 0, d = 0, k = 0;
    try {
        n = header.at("n").get<std::uint64_t>();
        d = header.at("d").get<std::uint64_t>();
        k = header.at("K").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw HeaderError(std::string("malformed header: ") + e.what(), 0);
    }
    if (n == 0) throw HeaderError("invalid node count", 0);
    if (k < 2) throw HeaderError("class count must be at least 2", 0);

    LoadedDataset out;
    out.source_edge_count = header.value("source_edge_count", std::uint64_t{0});
    detail::EdgeCollector edges(n);
    RowMatrix<double> x = RowMatrix<double>::Zero(n, d);
    std::vector<std::uint32_t> labels(n, 0);
    std::vector<bool> seen(n, false);
    while (next_line(line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw HeaderError(std::string("record is not JSON: ") + e.what(), offset);
        }
        if (rec.contains("edge")) {
            const auto& pair = rec["edge"];
            edges.add(pair.at(0).get<std::uint64_t>(), pair.at(1).get<std::uint64_t>(), offset);
        } else if (rec.contains("node")) {
            const auto i = rec["node"].get<std::uint64_t>();
            if (i >= n) throw NodeIdRangeError("node record id outside [0, n)", offset);
            const auto& row = rec.at("x");
            if (row.size() != d) throw FeatureCountError("feature row length differs from d", offset);
            for (std::size_t c = 0; c < d; ++c) x(i, c) = row[c].get<double>();
            const auto y = rec.at("y").get<std::uint64_t>();
            if (y >= k) throw LabelRangeError("label outside [0, K)", offset);
            labels[i] = static_cast<std::uint32_t>(y);
            seen[i] = true;
        } else {
            throw HeaderError("unrecognized record", offset);
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw FeatureCountError("fewer node records than n", offset);
    }
    auto symmetric = edges.finish(out.warnings);
    out.graph = Graph(n, symmetric, std::move(x), std::move(labels), k, header.value("name", ""));
    return out;
}

inline LoadedDataset load_jsonl(const std::filesystem::path& path) { return decode_jsonl(detail::read_file(path)); }

inline void write_jsonl(const Graph& g, const std::filesystem::path& path, std::uint64_t source_edge_count = 0) {
    detail::write_file_atomic(path, encode_jsonl(g, source_edge_count));
}

/// Dispatches on extension: ".jsonl" is the text twin, anything else binary.
inline LoadedDataset load_dataset(const std::filesystem::path& path) {
    if (path.extension() == ".jsonl") return load_jsonl(path);
    return load_canonical(path);
}

// ---------------------------------------------------------------------------
// Splits

struct NodeSplit {
    std::vector<std::uint32_t> train_ids;
    std::vector<std::uint32_t> val_ids;
    std::vector<std::uint32_t> test_ids;
    std::uint64_t seed = 0;
};

struct SplitSizes {
    std::size_t train, val, test;
};

/// 40 / 30 / remainder, with floors taken in integer arithmetic.
constexpr SplitSizes split_sizes(std::size_t n) {
    const std::size_t train = (4 * n) / 10;
    const std::size_t val = (3 * n) / 10;
    return {train, val, n - train - val};
}

namespace detail {

inline NodeSplit partition(const std::vector<std::uint32_t>& order, std::uint64_t seed) {
    const auto sizes = split_sizes(order.size());
    NodeSplit s;
    s.seed = seed;
    s.train_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes.train));
    s.val_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                     order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val));
    s.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val), order.end());
    return s;
}

}  // namespace detail

/// Uniform split: a seeded permutation of [0, n) cut by the 40/30/30 rule.
inline NodeSplit generate_split(std::size_t n, std::uint64_t seed) {
    if (n < 10) throw DomainError("splitting needs at least 10 nodes");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    rng.shuffle(std::span(order));
    return detail::partition(order, seed);
}

inline NodeSplit generate_split(const Graph& g, std::uint64_t seed) { return generate_split(g.num_nodes(), seed); }

/// Class-stratified variant. Each class is shuffled independently and its
/// members are spread over [0, 1) by rank; the global order sorts by that
/// position, so every prefix holds classes in proportion. Split sizes follow
/// the same rule as the uniform split.
inline NodeSplit generate_stratified_split(const Graph& g, std::uint64_t seed) {
    const auto n = g.num_nodes();
    if (n < 10) throw DomainError("splitting needs at least 10 nodes");
    Rng rng(seed);
    std::vector<std::vector<std::uint32_t>> by_class(g.num_classes());
    for (std::uint32_t i = 0; i < n; ++i) by_class[g.label(i)].push_back(i);
    struct Keyed {
        double key;
        std::uint32_t id;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(n);
    for (auto& members : by_class) {
        rng.shuffle(std::span(members));
        for (std::size_t r = 0; r < members.size(); ++r) {
            const double key = (static_cast<double>(r) + rng.uniform01()) / static_cast<double>(members.size());
            keyed.push_back({key, members[r]});
        }
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
    std::vector<std::uint32_t> order(n);
    std::transform(keyed.begin(), keyed.end(), order.begin(), [](const Keyed& k) { return k.id; });
    return detail::partition(order, seed);
}

// ---------------------------------------------------------------------------

struct DatasetStats {
    std::string name;
    std::size_t num_nodes = 0;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::size_t directed_edge_count = 0;
    std::uint64_t source_edge_count = 0;
    std::size_t isolated_nodes = 0;
    HomophilyReport homophily;
};

inline DatasetStats dataset_stats(const Graph& g, ClassShareMode mode = ClassShareMode::Degree,
                                  std::uint64_t source_edge_count = 0) {
    DatasetStats s;
    s.name = g.name();
    s.num_nodes = g.num_nodes();
    s.feature_dim = g.feature_dim();
    s.num_classes = g.num_classes();
    s.directed_edge_count = g.directed_edge_count();
    s.source_edge_count = source_edge_count;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) s.isolated_nodes += g.degree(v) == 0;
    s.homophily = homophily_report(g, mode);
    return s;
}

inline nlohmann::json to_json(const DatasetStats& s) {
    return {{"name", s.name},
            {"num_nodes", s.num_nodes},
            {"feature_dim", s.feature_dim},
            {"num_classes", s.num_classes},
            {"directed_edge_count", s.directed_edge_count},
            {"source_edge_count", s.source_edge_count},
            {"isolated_nodes", s.isolated_nodes},
            {"node_homophily", s.homophily.node_homophily},
            {"edge_homophily", s.homophily.edge_homophily},
            {"adjusted_homophily", s.homophily.adjusted_homophily},
            {"class_shares", s.homophily.class_shares},
            {"class_share_mode", s.homophily.share_mode == ClassShareMode::Degree ? "degree" : "uniform"}};
}

}  // namespace attn_graphs
