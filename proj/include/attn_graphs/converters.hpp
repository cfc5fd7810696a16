#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "attn_graphs/dataset_io.hpp"

// Importers for the text layouts the benchmark graphs are distributed in.
// Each produces a LoadedDataset whose graph is ready for write_canonical.

namespace attn_graphs {

namespace detail {

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto end = s.find(sep, start);
        out.push_back(s.substr(start, end == std::string::npos ? std::string::npos : end - start));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(std::move(tok));
    return out;
}

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& tok, std::uint64_t offset) {
    T value{};
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, value);
    if (ec != std::errc() || ptr != end) throw FormatError("cannot parse number '" + tok + "'", offset);
    return value;
}

/// Line iterator that remembers the byte offset of the current line.
class LineReader {
public:
    explicit LineReader(std::string text) : text_(std::move(text)) {}

    bool next(std::string& line) {
        if (pos_ >= text_.size()) return false;
        offset_ = pos_;
        auto end = text_.find('\n', pos_);
        if (end == std::string::npos) end = text_.size();
        line = text_.substr(pos_, end - pos_);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos_ = end + 1;
        return true;
    }
    std::uint64_t offset() const { return offset_; }

private:
    std::string text_;
    std::size_t pos_ = 0;
    std::uint64_t offset_ = 0;
};

/// Like EdgeCollector but tolerant of the quirks of raw upstream files:
/// self-loops and dangling ids are dropped and counted instead of thrown.
class LenientEdges {
public:
    explicit LenientEdges(std::size_t n) : strict_(n) {}

    void add(std::uint64_t u, std::uint64_t v, std::uint64_t offset) {
        ++records_;
        if (u == v) {
            ++self_loops_;
            return;
        }
        strict_.add(u, v, offset);
    }
    void dangling() {
        ++records_;
        ++dangling_;
    }
    std::uint64_t records() const { return records_; }

    std::vector<Edge> finish(std::vector<std::string>& warnings) const {
        if (self_loops_ > 0) warnings.push_back(std::to_string(self_loops_) + " self-loop records were dropped");
        if (dangling_ > 0) {
            warnings.push_back(std::to_string(dangling_) + " edge records referencing unknown nodes were dropped");
        }
        return strict_.finish(warnings);
    }

private:
    EdgeCollector strict_;
    std::uint64_t records_ = 0, self_loops_ = 0, dangling_ = 0;
};

/// Maps label strings to dense ids in sorted order so conversion does not
/// depend on file order.
inline std::vector<std::uint32_t> encode_labels(const std::vector<std::string>& raw, std::size_t& num_classes) {
    std::map<std::string, std::uint32_t> ids;
    for (const auto& s : raw) ids.emplace(s, 0);
    std::uint32_t next = 0;
    for (auto& [name, id] : ids) id = next++;
    num_classes = ids.size();
    std::vector<std::uint32_t> out;
    out.reserve(raw.size());
    for (const auto& s : raw) out.push_back(ids.at(s));
    return out;
}

}  // namespace detail

/// LINQS citation layout: `<name>.content` rows "id f_1 ... f_d label" and
/// `<name>.cites` rows "cited citing". Node order follows the content file.
inline LoadedDataset convert_linqs(const std::filesystem::path& content_path, const std::filesystem::path& cites_path,
                                   std::string name) {
    detail::LineReader content(detail::read_file(content_path));
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> raw_labels;
    std::string line;
    std::optional<std::size_t> d;
    while (content.next(line)) {
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() < 3) throw FormatError("content row needs id, features and label", content.offset());
        const auto width = tok.size() - 2;
        if (!d) d = width;
        if (width != *d) {
            throw FeatureCountError("content row has " + std::to_string(width) + " features, expected " +
                                        std::to_string(*d),
                                    content.offset());
        }
        if (!index.emplace(tok.front(), rows.size()).second) {
            throw FormatError("duplicate node id '" + tok.front() + "'", content.offset());
        }
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c) row[c] = detail::parse_number<double>(tok[c + 1], content.offset());
        rows.push_back(std::move(row));
        raw_labels.push_back(tok.back());
    }
    if (rows.empty()) throw HeaderError("content file has no rows", 0);

    LoadedDataset out;
    detail::LenientEdges edges(rows.size());
    detail::LineReader cites(detail::read_file(cites_path));
    while (cites.next(line)) {
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 2) throw FormatError("cites row needs exactly two ids", cites.offset());
        auto a = index.find(tok[0]), b = index.find(tok[1]);
        if (a == index.end() || b == index.end()) {
            edges.dangling();
            continue;
        }
        edges.add(a->second, b->second, cites.offset());
    }
    RowMatrix<double> x(rows.size(), *d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < *d; ++c) x(i, c) = rows[i][c];
    }
    std::size_t k = 0;
    auto labels = detail::encode_labels(raw_labels, k);
    out.source_edge_count = edges.records();
    auto symmetric = edges.finish(out.warnings);
    out.graph = Graph(rows.size(), symmetric, std::move(x), std::move(labels), k, std::move(name));
    return out;
}

/// Tab-separated layout used by the heterophilous benchmarks:
/// `out1_node_feature_label.txt` ("id<TAB>f,f,...<TAB>label" after a header)
/// and `out1_graph_edges.txt` ("u<TAB>v" after a header). When
/// `index_feature_dim` is set the feature column lists active indices of a
/// binary vector of that width instead of dense values.
inline LoadedDataset convert_geomgcn(const std::filesystem::path& nodes_path, const std::filesystem::path& edges_path,
                                     std::string name, std::optional<std::size_t> index_feature_dim = std::nullopt) {
    detail::LineReader nodes(detail::read_file(nodes_path));
    std::string line;
    if (!nodes.next(line)) throw HeaderError("node file is empty", 0);
    struct Row {
        std::vector<double> values;
        std::string label;
    };
    std::map<std::uint64_t, Row> by_id;
    std::optional<std::size_t> d = index_feature_dim;
    while (nodes.next(line)) {
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split_on(line, '\t');
        if (cols.size() != 3) throw FormatError("node row needs id, features and label columns", nodes.offset());
        const auto id = detail::parse_number<std::uint64_t>(detail::trim(cols[0]), nodes.offset());
        Row row;
        row.label = detail::trim(cols[2]);
        const auto feats = detail::split_on(detail::trim(cols[1]), ',');
        if (index_feature_dim) {
            row.values.assign(*index_feature_dim, 0.0);
            for (const auto& f : feats) {
                if (f.empty()) continue;
                const auto j = detail::parse_number<std::size_t>(f, nodes.offset());
                if (j >= *index_feature_dim) throw FeatureCountError("feature index beyond --feature-indices width", nodes.offset());
                row.values[j] = 1.0;
            }
        } else {
            for (const auto& f : feats) row.values.push_back(detail::parse_number<double>(f, nodes.offset()));
            if (!d) d = row.values.size();
            if (row.values.size() != *d) {
                throw FeatureCountError("node row has " + std::to_string(row.values.size()) + " features, expected " +
                                            std::to_string(*d),
                                        nodes.offset());
            }
        }
        if (!by_id.emplace(id, std::move(row)).second) throw FormatError("duplicate node id", nodes.offset());
    }
    if (by_id.empty()) throw HeaderError("node file has no rows", 0);
    const auto n = by_id.size();
    if (by_id.rbegin()->first != n - 1) throw NodeIdRangeError("node ids must be exactly 0..n-1", 0);

    RowMatrix<double> x(n, *d);
    std::vector<std::string> raw_labels(n);
    for (auto& [id, row] : by_id) {
        for (std::size_t c = 0; c < *d; ++c) x(id, c) = row.values[c];
        raw_labels[id] = std::move(row.label);
    }

    LoadedDataset out;
    detail::LenientEdges edges(n);
    detail::LineReader edge_lines(detail::read_file(edges_path));
    if (!edge_lines.next(line)) throw HeaderError("edge file is empty", 0);
    while (edge_lines.next(line)) {
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 2) throw FormatError("edge row needs exactly two ids", edge_lines.offset());
        edges.add(detail::parse_number<std::uint64_t>(tok[0], edge_lines.offset()),
                  detail::parse_number<std::uint64_t>(tok[1], edge_lines.offset()), edge_lines.offset());
    }
    // Numeric labels keep their numeric order.
    std::vector<std::uint32_t> labels(n);
    std::uint32_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = detail::parse_number<std::uint32_t>(raw_labels[i], 0);
        max_label = std::max(max_label, labels[i]);
    }
    out.source_edge_count = edges.records();
    auto symmetric = edges.finish(out.warnings);
    out.graph = Graph(n, symmetric, std::move(x), std::move(labels), max_label + 1, std::move(name));
    return out;
}

/// Plain edge list ("u v" per line, '#' comments) plus a feature matrix file
/// (one whitespace-separated row per node) and a label file (one integer per
/// line).
inline LoadedDataset convert_edgelist(const std::filesystem::path& edges_path,
                                      const std::filesystem::path& features_path,
                                      const std::filesystem::path& labels_path, std::string name) {
    std::string line;
    std::vector<std::uint32_t> labels;
    detail::LineReader label_lines(detail::read_file(labels_path));
    while (label_lines.next(line)) {
        line = detail::trim(line);
        if (line.empty() || line.front() == '#') continue;
        labels.push_back(detail::parse_number<std::uint32_t>(line, label_lines.offset()));
    }
    const auto n = labels.size();
    if (n == 0) throw HeaderError("label file has no rows", 0);

    std::vector<std::vector<double>> rows;
    detail::LineReader feature_lines(detail::read_file(features_path));
    while (feature_lines.next(line)) {
        auto tok = detail::split_ws(line);
        if (tok.empty() || tok.front().front() == '#') continue;
        std::vector<double> row;
        for (const auto& t : tok) row.push_back(detail::parse_number<double>(t, feature_lines.offset()));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FeatureCountError("feature rows differ in width", feature_lines.offset());
        }
        rows.push_back(std::move(row));
    }
    if (rows.size() != n) throw FeatureCountError("feature and label files differ in row count", 0);
    RowMatrix<double> x(n, rows.front().size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) x(i, c) = rows[i][c];
    }

    LoadedDataset out;
    detail::LenientEdges edges(n);
    detail::LineReader edge_lines(detail::read_file(edges_path));
    while (edge_lines.next(line)) {
        auto tok = detail::split_ws(line);
        if (tok.empty() || tok.front().front() == '#') continue;
        if (tok.size() < 2) throw FormatError("edge row needs two ids", edge_lines.offset());
        edges.add(detail::parse_number<std::uint64_t>(tok[0], edge_lines.offset()),
                  detail::parse_number<std::uint64_t>(tok[1], edge_lines.offset()), edge_lines.offset());
    }
    const auto k = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
    out.source_edge_count = edges.records();
    auto symmetric = edges.finish(out.warnings);
    out.graph = Graph(n, symmetric, std::move(x), std::move(labels), std::max<std::size_t>(k, 2), std::move(name));
    return out;
}

}  // namespace attn_graphs
