#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_graphs/experiment.hpp"

namespace attn_graphs {

/// One published number with the table coordinates it came from.
struct ReferenceValue {
    std::string metric;
    std::string dataset;
    std::string variant;  ///< empty for dataset-level metrics
    std::string shape;
    double value = 0.0;
    std::optional<double> std;
    std::string printed;
    std::string table, row, column;
};

struct ReferenceValues {
    std::map<std::string, std::string> display_names;
    std::map<std::string, double> tolerances;
    std::vector<ReferenceValue> entries;

    double tolerance(const std::string& key) const {
        auto it = tolerances.find(key);
        if (it == tolerances.end()) throw ConfigError("reference file has no tolerance '" + key + "'");
        return it->second;
    }

    const ReferenceValue* find(const std::string& metric, const std::string& dataset, const std::string& variant = {},
                               const std::string& shape = {}) const {
        for (const auto& e : entries) {
            if (e.metric == metric && e.dataset == dataset && e.variant == variant && e.shape == shape) return &e;
        }
        return nullptr;
    }
};

inline ReferenceValues load_reference_values(const fs::path& path) {
    const auto j = read_json(path);
    if (j.value("format_version", 0) != 1) throw ConfigError("unsupported reference file version in " + path.string());
    ReferenceValues r;
    for (const auto& d : j.at("datasets")) r.display_names[d.at("name")] = d.at("display_name");
    for (const auto& [k, v] : j.at("tolerances").items()) r.tolerances[k] = v.get<double>();
    for (const auto& e : j.at("entries")) {
        ReferenceValue v;
        v.metric = e.at("metric");
        v.dataset = e.at("dataset");
        v.variant = e.value("variant", "");
        v.shape = e.value("shape", "");
        v.value = e.at("value").get<double>();
        if (e.contains("std")) v.std = e["std"].get<double>();
        v.printed = e.at("printed").is_string() ? e["printed"].get<std::string>() : e["printed"].dump();
        v.table = e.at("table");
        v.row = e.at("row");
        v.column = e.at("column");
        r.entries.push_back(std::move(v));
    }
    return r;
}

enum class CheckStatus { Pass, Fail, Missing };

inline std::string_view to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "PASS";
        case CheckStatus::Fail: return "FAIL";
        case CheckStatus::Missing: return "MISSING";
    }
    return "";
}

struct ReportLine {
    std::string section;
    std::string subject;  ///< dataset or cell id
    std::string metric;
    std::optional<double> reproduced;
    std::optional<double> reference;
    std::string rule;  ///< human-readable tolerance
    CheckStatus status = CheckStatus::Missing;
    std::string coordinate;  ///< table/row/column of the reference value
};

struct ComparisonReport {
    std::string manifest_hash;
    std::vector<ReportLine> lines;

    std::size_t count(CheckStatus s) const {
        return static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [&](const auto& l) { return l.status == s; }));
    }
};

namespace detail {

inline std::string coordinate(const ReferenceValue* r) {
    return r == nullptr ? "" : r->table + " / " + r->row + " / " + r->column;
}

inline CheckStatus check(std::optional<double> value, bool pass) {
    if (!value) return CheckStatus::Missing;
    return pass ? CheckStatus::Pass : CheckStatus::Fail;
}

}  // namespace detail

/// Juxtaposes reproduced values with the reference file. Reads datasets and
/// the train/analysis summaries; writes nothing.
inline ComparisonReport build_report(const ExperimentManifest& m, const ReferenceValues& ref) {
    ComparisonReport rep;
    rep.manifest_hash = manifest_hash(m);

    // Homophily straight from the datasets.
    const double htol = ref.tolerance("homophily_abs");
    for (const auto& [name, path] : m.datasets) {
        std::optional<DatasetStats> stats;
        if (fs::exists(path)) {
            auto loaded = load_dataset(path);
            stats = dataset_stats(loaded.graph, m.analysis.share_mode, loaded.source_edge_count);
        }
        const std::pair<const char*, double HomophilyReport::*> metrics[] = {
            {"node_homophily", &HomophilyReport::node_homophily},
            {"edge_homophily", &HomophilyReport::edge_homophily},
            {"adjusted_homophily", &HomophilyReport::adjusted_homophily}};
        for (const auto& [metric, field] : metrics) {
            const auto* r = ref.find(metric, name);
            if (r == nullptr) continue;
            std::optional<double> got;
            if (stats) got = stats->homophily.*field;
            rep.lines.push_back({"homophily", name, metric, got, r->value, "|delta| <= " + std::to_string(htol),
                                 detail::check(got, got && std::abs(*got - r->value) <= htol), detail::coordinate(r)});
        }
        const std::pair<const char*, std::function<double(const DatasetStats&)>> counts[] = {
            {"num_nodes", [](const DatasetStats& s) { return static_cast<double>(s.num_nodes); }},
            {"num_classes", [](const DatasetStats& s) { return static_cast<double>(s.num_classes); }},
            {"num_edges",
             [](const DatasetStats& s) {
                 return static_cast<double>(s.source_edge_count != 0 ? s.source_edge_count : s.directed_edge_count);
             }}};
        for (const auto& [metric, get] : counts) {
            const auto* r = ref.find(metric, name);
            if (r == nullptr) continue;
            std::optional<double> got;
            if (stats) got = get(*stats);
            rep.lines.push_back({"dataset", name, metric, got, r->value, "exact", detail::check(got, got && *got == r->value),
                                 detail::coordinate(r)});
        }
    }

    // Accuracy from per-cell training summaries.
    const double atol = ref.tolerance("accuracy_abs");
    for (const auto& cell : m.cells()) {
        const auto* r = ref.find("accuracy", cell.dataset, std::string(to_string(cell.variant)), cell.shape.label());
        std::optional<double> got;
        const auto path = cell_dir(m, cell) / "summary.json";
        if (fs::exists(path)) got = read_json(path).at("accuracy").at("mean").get<double>();
        std::optional<double> expected;
        if (r != nullptr) expected = r->value;
        rep.lines.push_back({"accuracy", cell.id(), "mean_test_accuracy", got, expected,
                             "|delta| <= " + std::to_string(atol),
                             r == nullptr ? CheckStatus::Missing
                                          : detail::check(got, got && std::abs(*got - r->value) <= atol),
                             detail::coordinate(r)});
    }

    // Structure recovery and locality from the analysis summary.
    std::map<std::string, nlohmann::json> analyzed;
    if (fs::exists(m.output_dir / "analysis.json")) {
        const auto summary = read_json(m.output_dir / "analysis.json");
        for (const auto& c : summary.at("cells")) analyzed[c.at("cell").get<std::string>()] = c;
    }
    auto stat = [&](const Cell& c, const char* key) -> std::optional<double> {
        auto it = analyzed.find(c.id());
        if (it == analyzed.end() || it->second.at(key).is_null()) return std::nullopt;
        return it->second.at(key).get<double>();
    };
    const double dl_f1_max = ref.tolerance("dl_f1_max");
    const double factor = ref.tolerance("dlb_over_dl_f1_factor");
    const double local_max = ref.tolerance("local_ratio_max");
    const double dl_lo = ref.tolerance("dl_ratio_min"), dl_hi = ref.tolerance("dl_ratio_max");
    std::vector<ReportLine> ratio_lines;
    for (const auto& cell : m.cells()) {
        const auto variant = std::string(to_string(cell.variant));
        const auto* rf = ref.find("f1", cell.dataset, variant, cell.shape.label());
        std::optional<double> ref_f1;
        if (rf != nullptr) ref_f1 = rf->value;
        const auto f1 = stat(cell, "f1");
        if (cell.variant == AttentionVariant::DL) {
            rep.lines.push_back({"f1", cell.id(), "f1_percent", f1, ref_f1, "< " + std::to_string(dl_f1_max),
                                 detail::check(f1, f1 && *f1 < dl_f1_max), detail::coordinate(rf)});
        } else if (cell.variant == AttentionVariant::DLB) {
            Cell dl = cell;
            dl.variant = AttentionVariant::DL;
            const auto dl_f1 = stat(dl, "f1");
            std::optional<double> both;
            if (f1 && dl_f1) both = *f1;
            rep.lines.push_back({"f1", cell.id(), "f1_percent", f1, ref_f1,
                                 "> " + std::to_string(factor) + " x DL F1 of the same shape",
                                 detail::check(both, both && *f1 > factor * *dl_f1), detail::coordinate(rf)});
        }

        const auto* rr = ref.find("attention_ratio", cell.dataset, variant, cell.shape.label());
        std::optional<double> ref_ratio;
        if (rr != nullptr) ref_ratio = rr->value;
        const auto ratio = stat(cell, "attention_ratio");
        if (cell.variant == AttentionVariant::DL) {
            ratio_lines.push_back({"attention_ratio", cell.id(), "ratio", ratio, ref_ratio,
                                 "in [" + std::to_string(dl_lo) + ", " + std::to_string(dl_hi) + "]",
                                 detail::check(ratio, ratio && *ratio >= dl_lo && *ratio <= dl_hi), detail::coordinate(rr)});
        } else if ((cell.variant == AttentionVariant::SL || cell.variant == AttentionVariant::DLB) &&
                   cell.shape.n_layers == 1) {
            ratio_lines.push_back({"attention_ratio", cell.id(), "ratio", ratio, ref_ratio, "< " + std::to_string(local_max),
                                 detail::check(ratio, ratio && *ratio < local_max), detail::coordinate(rr)});
        }
    }
    rep.lines.insert(rep.lines.end(), ratio_lines.begin(), ratio_lines.end());
    return rep;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
    using nlohmann::json;
    auto opt = [](std::optional<double> v) { return v ? json(*v) : json(nullptr); };
    json lines = json::array();
    for (const auto& l : r.lines) {
        lines.push_back({{"section", l.section},
                         {"subject", l.subject},
                         {"metric", l.metric},
                         {"reproduced", opt(l.reproduced)},
                         {"reference", opt(l.reference)},
                         {"rule", l.rule},
                         {"status", to_string(l.status)},
                         {"reference_coordinate", l.coordinate}});
    }
    return {{"format_version", kManifestFormatVersion},
            {"manifest_hash", r.manifest_hash},
            {"totals",
             {{"pass", r.count(CheckStatus::Pass)},
              {"fail", r.count(CheckStatus::Fail)},
              {"missing", r.count(CheckStatus::Missing)}}},
            {"checks", lines}};
}

inline std::string to_text(const ComparisonReport& r) {
    std::ostringstream out;
    out << "manifest " << r.manifest_hash << " (format " << kManifestFormatVersion << ")\n";
    out << "pass " << r.count(CheckStatus::Pass) << ", fail " << r.count(CheckStatus::Fail) << ", missing "
        << r.count(CheckStatus::Missing) << "\n";
    std::string section;
    auto num = [](std::optional<double> v) {
        if (!v) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << *v;
        return s.str();
    };
    for (const auto& l : r.lines) {
        if (l.section != section) {
            section = l.section;
            out << "\n[" << section << "]\n";
        }
        out << "  " << std::left << std::setw(8) << to_string(l.status) << std::setw(28) << l.subject << std::setw(20)
            << l.metric << " got " << std::setw(10) << num(l.reproduced) << " ref " << std::setw(10) << num(l.reference)
            << " " << l.rule << "\n";
    }
    return out.str();
}

}  // namespace attn_graphs
