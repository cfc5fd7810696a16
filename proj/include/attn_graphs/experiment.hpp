#pragma once

#include <algorithm>
#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "attn_graphs/analysis.hpp"
#include "attn_graphs/dataset_io.hpp"
#include "attn_graphs/model.hpp"
#include "attn_graphs/trainer.hpp"

namespace attn_graphs {

namespace fs = std::filesystem;

inline constexpr unsigned kManifestFormatVersion = 1;

struct Shape {
    std::size_t n_layers = 1;
    std::size_t n_heads = 1;

    std::string label() const { return std::to_string(n_layers) + "L" + std::to_string(n_heads) + "H"; }
    auto operator<=>(const Shape&) const = default;
};

inline Shape parse_shape(const std::string& s) {
    const auto l = s.find('L'), h = s.find('H');
    if (l == std::string::npos || h == std::string::npos || h != s.size() - 1 || l == 0 || h <= l + 1) {
        throw ConfigError("invalid shape '" + s + "', expected e.g. 2L1H");
    }
    try {
        Shape out{std::stoul(s.substr(0, l)), std::stoul(s.substr(l + 1, h - l - 1))};
        if (out.n_layers == 0 || out.n_heads == 0) throw ConfigError("shape '" + s + "' has a zero dimension");
        return out;
    } catch (const std::logic_error&) {
        throw ConfigError("invalid shape '" + s + "'");
    }
}

struct Cell {
    std::string dataset;
    AttentionVariant variant = AttentionVariant::DL;
    Shape shape;

    std::string id() const { return dataset + "/" + std::string(to_string(variant)) + "/" + shape.label(); }
};

enum class RecordPolicy { All, First, None };
enum class SeedSelection { First, All };

struct AnalysisToggles {
    bool f1_include_diagonal = true;
    RatioMode ratio_mode = RatioMode::EntryMean;
    std::optional<CorrelationDomain> correlation_domain;  ///< empty = per-variant default
    SeedSelection seeds = SeedSelection::First;
    std::size_t max_samples = 20000;
    bool write_pbm = true;
    ClassShareMode share_mode = ClassShareMode::Degree;
};

struct ExperimentManifest {
    unsigned format_version = kManifestFormatVersion;
    std::vector<std::pair<std::string, fs::path>> datasets;  ///< manifest order
    std::vector<AttentionVariant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    std::vector<Shape> shapes{{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    ModelConfig model;  ///< variant, shape and dimensions are filled per cell
    TrainConfig train;
    fs::path output_dir = "out";
    fs::path reference_values;  ///< empty = caller's default
    RecordPolicy record_attention = RecordPolicy::First;
    bool save_checkpoints = true;
    AnalysisToggles analysis;

    /// Every (dataset, variant, shape) combination. Constant attention has
    /// no heads to speak of, so SC only appears with one head.
    std::vector<Cell> cells() const {
        std::vector<Cell> out;
        for (const auto& [name, path] : datasets) {
            for (auto v : variants) {
                for (auto s : shapes) {
                    if (v == AttentionVariant::SC && s.n_heads != 1) continue;
                    out.push_back({name, v, s});
                }
            }
        }
        return out;
    }

    const fs::path& dataset_path(const std::string& name) const {
        for (const auto& [n, p] : datasets) {
            if (n == name) return p;
        }
        throw ConfigError("dataset '" + name + "' is not in the manifest");
    }

    std::vector<std::uint64_t> analysis_seeds() const {
        if (analysis.seeds == SeedSelection::First) return {seeds.front()};
        return seeds;
    }

    bool records_attention(std::uint64_t seed) const {
        return record_attention == RecordPolicy::All ||
               (record_attention == RecordPolicy::First && seed == seeds.front()) ||
               (analysis.seeds == SeedSelection::All && record_attention != RecordPolicy::None);
    }

    void validate() const {
        if (format_version != kManifestFormatVersion) {
            throw ConfigError("unsupported manifest format_version " + std::to_string(format_version));
        }
        if (datasets.empty()) throw ConfigError("manifest lists no datasets");
        if (variants.empty() || shapes.empty()) throw ConfigError("manifest lists no variants or no shapes");
        if (seeds.empty()) throw ConfigError("manifest lists no seeds");
        for (const auto& [name, path] : datasets) {
            if (!fs::exists(path)) throw ConfigError("dataset '" + name + "' not found at " + path.string());
        }
        train.validate();
        if (analysis.seeds == SeedSelection::All && record_attention == RecordPolicy::None) {
            throw ConfigError("analysis.seeds = all needs record_attention != none");
        }
    }
};

inline std::string_view to_string(RecordPolicy p) {
    switch (p) {
        case RecordPolicy::All: return "all";
        case RecordPolicy::First: return "first";
        case RecordPolicy::None: return "none";
    }
    return "";
}

/// Canonical JSON of everything that determines results. The output
/// location is deliberately left out so relocating a run keeps its hash.
inline nlohmann::json manifest_identity(const ExperimentManifest& m) {
    using nlohmann::json;
    json ds = json::array();
    for (const auto& [name, path] : m.datasets) ds.push_back({{"name", name}, {"file", path.filename().string()}});
    json variants = json::array(), shapes = json::array();
    for (auto v : m.variants) variants.push_back(to_string(v));
    for (auto s : m.shapes) shapes.push_back(s.label());
    auto model = to_json(m.model);
    for (const auto* k : {"variant", "n_layers", "n_heads", "n_classes", "input_dim"}) model.erase(k);
    auto train = to_json(m.train);
    train.erase("seed");
    return {{"format_version", m.format_version},
            {"datasets", ds},
            {"variants", variants},
            {"shapes", shapes},
            {"seeds", m.seeds},
            {"model", model},
            {"train", train},
            {"record_attention", to_string(m.record_attention)},
            {"analysis",
             {{"f1_include_diagonal", m.analysis.f1_include_diagonal},
              {"ratio_mode", m.analysis.ratio_mode == RatioMode::EntryMean ? "entry" : "per_node"},
              {"correlation_domain",
               m.analysis.correlation_domain ? std::string(to_string(*m.analysis.correlation_domain)) : "auto"},
              {"seeds", m.analysis.seeds == SeedSelection::First ? "first" : "all"},
              {"max_samples", m.analysis.max_samples},
              {"homophily_shares", m.analysis.share_mode == ClassShareMode::Degree ? "degree" : "uniform"}}}};
}

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    std::ostringstream out;
    for (unsigned i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return out.str();
}

inline std::string manifest_hash(const ExperimentManifest& m) { return sha256_hex(manifest_identity(m).dump()); }

// ---------------------------------------------------------------------------
// Manifest text format: "key = value" lines, '#' starts a comment. Relative
// paths resolve against the manifest's directory.

namespace detail {

inline std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

inline std::vector<std::string> list_of(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = strip(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline bool boolean(const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <typename T>
T number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        T out;
        if constexpr (std::is_floating_point_v<T>) {
            out = static_cast<T>(std::stod(v, &used));
        } else {
            if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
            out = static_cast<T>(std::stoull(v, &used));
        }
        if (used != v.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + v + "' as a number");
    }
}

}  // namespace detail

/// "0-9", "0,3,7" or a mix such as "0-2,5".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : detail::list_of(text)) {
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            out.push_back(detail::number<std::uint64_t>("seeds", item));
            continue;
        }
        const auto lo = detail::number<std::uint64_t>("seeds", detail::strip(item.substr(0, dash)));
        const auto hi = detail::number<std::uint64_t>("seeds", detail::strip(item.substr(dash + 1)));
        if (hi < lo) throw ConfigError("seeds: empty range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (out.empty()) throw ConfigError("seeds: empty list");
    std::vector<std::uint64_t> sorted = out;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("seeds: duplicate seed");
    return out;
}

inline ExperimentManifest parse_manifest(const std::string& text, const fs::path& base_dir) {
    using detail::number;
    ExperimentManifest m;
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("manifest line " + std::to_string(line_no) + ": expected key = value");
        auto key = detail::strip(line.substr(0, eq));
        if (!kv.emplace(key, detail::strip(line.substr(eq + 1))).second) {
            throw ConfigError("manifest key '" + key + "' appears twice");
        }
    }
    if (!kv.contains("format_version")) throw ConfigError("manifest is missing format_version");
    if (!kv.contains("datasets")) throw ConfigError("manifest is missing datasets");

    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    fs::path data_dir = resolve(kv.contains("data_dir") ? kv["data_dir"] : "data");
    std::map<std::string, fs::path> explicit_paths;

    for (const auto& [key, value] : kv) {
        if (key == "format_version") {
            m.format_version = number<unsigned>(key, value);
        } else if (key == "datasets" || key == "data_dir") {
            // handled below / above
        } else if (key.starts_with("dataset.")) {
            explicit_paths[key.substr(8)] = resolve(value);
        } else if (key == "variants") {
            m.variants.clear();
            for (const auto& v : detail::list_of(value)) m.variants.push_back(parse_variant(v));
        } else if (key == "shapes") {
            m.shapes.clear();
            for (const auto& s : detail::list_of(value)) m.shapes.push_back(parse_shape(s));
        } else if (key == "seeds") {
            m.seeds = parse_seed_list(value);
        } else if (key == "output") {
            m.output_dir = resolve(value);
        } else if (key == "reference") {
            m.reference_values = resolve(value);
        } else if (key == "record_attention") {
            if (value == "all") m.record_attention = RecordPolicy::All;
            else if (value == "first") m.record_attention = RecordPolicy::First;
            else if (value == "none") m.record_attention = RecordPolicy::None;
            else throw ConfigError("record_attention must be all, first or none");
        } else if (key == "checkpoints") {
            m.save_checkpoints = detail::boolean(key, value);
        } else if (key == "model.d_model") {
            m.model.d_model = number<std::size_t>(key, value);
        } else if (key == "model.ffn_width") {
            m.model.ffn_width = number<std::size_t>(key, value);
        } else if (key == "model.norm") {
            if (value == "post") m.model.norm = NormPlacement::Post;
            else if (value == "pre") m.model.norm = NormPlacement::Pre;
            else throw ConfigError("model.norm must be post or pre");
        } else if (key == "model.activation") {
            if (value == "relu") m.model.activation = Activation::ReLU;
            else if (value == "gelu") m.model.activation = Activation::GELU;
            else throw ConfigError("model.activation must be relu or gelu");
        } else if (key == "model.dropout") {
            m.model.dropout = number<double>(key, value);
        } else if (key == "model.dlb_self_bias") {
            m.model.dlb_self_bias = number<double>(key, value);
        } else if (key == "model.dlb_unreachable_bias") {
            m.model.dlb_unreachable_bias = number<double>(key, value);
        } else if (key == "train.learning_rate") {
            m.train.learning_rate = number<double>(key, value);
        } else if (key == "train.weight_decay") {
            m.train.weight_decay = number<double>(key, value);
        } else if (key == "train.max_epochs") {
            m.train.max_epochs = number<std::size_t>(key, value);
        } else if (key == "train.patience") {
            m.train.patience = number<std::size_t>(key, value);
        } else if (key == "train.stratified_split") {
            m.train.stratified_split = detail::boolean(key, value);
        } else if (key == "analysis.f1_diagonal") {
            if (value == "include") m.analysis.f1_include_diagonal = true;
            else if (value == "exclude") m.analysis.f1_include_diagonal = false;
            else throw ConfigError("analysis.f1_diagonal must be include or exclude");
        } else if (key == "analysis.ratio_mode") {
            if (value == "entry") m.analysis.ratio_mode = RatioMode::EntryMean;
            else if (value == "per_node") m.analysis.ratio_mode = RatioMode::PerNodeMean;
            else throw ConfigError("analysis.ratio_mode must be entry or per_node");
        } else if (key == "analysis.correlation_domain") {
            if (value == "auto") m.analysis.correlation_domain.reset();
            else if (value == "all") m.analysis.correlation_domain = CorrelationDomain::All;
            else if (value == "union_support") m.analysis.correlation_domain = CorrelationDomain::UnionSupport;
            else throw ConfigError("analysis.correlation_domain must be auto, all or union_support");
        } else if (key == "analysis.seeds") {
            if (value == "first") m.analysis.seeds = SeedSelection::First;
            else if (value == "all") m.analysis.seeds = SeedSelection::All;
            else throw ConfigError("analysis.seeds must be first or all");
        } else if (key == "analysis.max_samples") {
            m.analysis.max_samples = number<std::size_t>(key, value);
        } else if (key == "analysis.pbm") {
            m.analysis.write_pbm = detail::boolean(key, value);
        } else if (key == "analysis.homophily_shares") {
            if (value == "degree") m.analysis.share_mode = ClassShareMode::Degree;
            else if (value == "uniform") m.analysis.share_mode = ClassShareMode::Uniform;
            else throw ConfigError("analysis.homophily_shares must be degree or uniform");
        } else {
            throw ConfigError("unknown manifest key '" + key + "'");
        }
    }
    for (const auto& name : detail::list_of(kv["datasets"])) {
        auto it = explicit_paths.find(name);
        m.datasets.emplace_back(name, it != explicit_paths.end() ? it->second : data_dir / (name + ".agrf"));
    }
    for (const auto& [name, path] : explicit_paths) {
        if (std::none_of(m.datasets.begin(), m.datasets.end(), [&](const auto& d) { return d.first == name; })) {
            throw ConfigError("dataset." + name + " given but '" + name + "' is not listed in datasets");
        }
    }
    return m;
}

inline ExperimentManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Artifact layout: <out>/<dataset>/<variant>/<NL>L<NH>H/seed<k>/...

inline fs::path cell_dir(const ExperimentManifest& m, const Cell& c) {
    return m.output_dir / c.dataset / std::string(to_string(c.variant)) / c.shape.label();
}
inline fs::path seed_dir(const ExperimentManifest& m, const Cell& c, std::uint64_t seed) {
    return cell_dir(m, c) / ("seed" + std::to_string(seed));
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { detail::write_file_atomic(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline ModelConfig model_config_for(const ExperimentManifest& m, const Cell& c, const Graph& g) {
    auto cfg = m.model;
    cfg.variant = c.variant;
    cfg.n_layers = c.shape.n_layers;
    cfg.n_heads = c.shape.n_heads;
    cfg.input_dim = g.feature_dim();
    cfg.n_classes = g.num_classes();
    return cfg;
}

/// Fingerprint of one run's inputs; an existing run is reused only when its
/// stored key matches.
inline std::string run_key(const ModelConfig& mc, const TrainConfig& tc, const std::string& dataset_file) {
    return sha256_hex(nlohmann::json{{"model", to_json(mc)}, {"train", to_json(tc)}, {"dataset", dataset_file}}.dump());
}

/// Datasets plus lazily built, shared per-dataset derived data.
class DatasetCache {
public:
    explicit DatasetCache(const ExperimentManifest& m) : manifest_(m) {}

    const LoadedDataset& dataset(const std::string& name) {
        return get(datasets_, name, [&] { return load_dataset(manifest_.dataset_path(name)); });
    }
    const HopDistanceMatrix& distances(const std::string& name) {
        return get(distances_, name, [&] { return shortest_path_lengths(dataset(name).graph); });
    }
    const AttentionStructure& structure(const std::string& name, AttentionVariant v) {
        return get(structures_, name + "/" + std::string(to_string(v)), [&] {
            const auto& g = dataset(name).graph;
            StructureOptions opts{manifest_.model.dlb_self_bias, manifest_.model.dlb_unreachable_bias};
            if (v == AttentionVariant::DL) return dense_structure(g.num_nodes());
            return build_attention_structure(v, g, distances(name), opts);
        });
    }

private:
    template <typename T, typename Make>
    const T& get(std::map<std::string, std::shared_future<T>>& cache, const std::string& key, Make make) {
        std::shared_future<T> fut;
        std::promise<T> promise;
        bool owner = false;
        {
            std::lock_guard lock(mutex_);
            auto it = cache.find(key);
            if (it == cache.end()) {
                fut = promise.get_future().share();
                cache.emplace(key, fut);
                owner = true;
            } else {
                fut = it->second;
            }
        }
        if (owner) {
            try {
                promise.set_value(make());
            } catch (...) {
                promise.set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

    const ExperimentManifest& manifest_;
    std::mutex mutex_;
    std::map<std::string, std::shared_future<LoadedDataset>> datasets_;
    std::map<std::string, std::shared_future<HopDistanceMatrix>> distances_;
    std::map<std::string, std::shared_future<AttentionStructure>> structures_;
};

/// Runs `work(i)` for i in [0, count) on up to `jobs` threads.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& work) {
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (auto i = next++; i < count; i = next++) work(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct RunOptions {
    bool force = false;
    std::size_t jobs = 1;
    std::ostream* log = &std::cerr;
};

struct CellFailure {
    std::string cell;
    std::string message;
};

struct TrainOutcome {
    std::size_t trained = 0;
    std::size_t skipped = 0;
    std::vector<CellFailure> failures;
};

namespace detail {

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}
    void operator()(const std::string& line) {
        if (out_ == nullptr) return;
        std::lock_guard lock(mutex_);
        *out_ << line << '\n';
    }

private:
    std::ostream* out_;
    std::mutex mutex_;
};

}  // namespace detail

/// Trains every (cell, seed). Completed runs whose inputs are unchanged are
/// reused unless `force`. Failures are collected per run; other runs go on.
inline TrainOutcome run_train(const ExperimentManifest& m, const RunOptions& opts = {}) {
    m.validate();
    const auto cells = m.cells();
    const auto hash = manifest_hash(m);
    DatasetCache cache(m);
    detail::Logger log(opts.log);

    struct Task {
        std::size_t cell;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (auto s : m.seeds) tasks.push_back({c, s});
    }
    TrainOutcome outcome;
    std::mutex outcome_mutex;
    std::vector<std::vector<std::optional<RunResult>>> results(cells.size(),
                                                               std::vector<std::optional<RunResult>>(m.seeds.size()));
    auto seed_index = [&](std::uint64_t s) {
        return static_cast<std::size_t>(std::find(m.seeds.begin(), m.seeds.end(), s) - m.seeds.begin());
    };

    parallel_for(tasks.size(), opts.jobs, [&](std::size_t i) {
        const auto& cell = cells[tasks[i].cell];
        const auto seed = tasks[i].seed;
        const auto dir = seed_dir(m, cell, seed);
        const auto label = cell.id() + " seed " + std::to_string(seed);
        try {
            const auto& data = cache.dataset(cell.dataset);
            auto mc = model_config_for(m, cell, data.graph);
            auto tc = m.train;
            tc.seed = seed;
            const auto key = run_key(mc, tc, m.dataset_path(cell.dataset).filename().string());
            const bool want_record = m.records_attention(seed);
            if (!opts.force && fs::exists(dir / "run.json") && (!want_record || fs::exists(dir / "attention.agat"))) {
                auto j = read_json(dir / "run.json");
                if (j.value("run_key", "") == key) {
                    std::lock_guard lock(outcome_mutex);
                    results[tasks[i].cell][seed_index(seed)] = run_result_from_json(j);
                    ++outcome.skipped;
                    return;
                }
            }
            log("train " + label);
            GraphTransformer<float> model;
            const auto split = split_for(data.graph, tc);
            auto result = train<float>(mc, tc, data.graph, split, cache.structure(cell.dataset, cell.variant), &model);
            if (want_record) save_record(result.attention, dir / "attention.agat");
            if (m.save_checkpoints) detail::write_file_atomic(dir / "model.agck", encode_checkpoint(model));
            auto j = to_json(result);
            j["run_key"] = key;
            j["manifest_hash"] = hash;
            j["model"] = to_json(mc);
            j["train"] = to_json(tc);
            j["split_sizes"] = {split.train_ids.size(), split.val_ids.size(), split.test_ids.size()};
            // Written last: its presence marks the run complete.
            write_json(dir / "run.json", j);
            std::lock_guard lock(outcome_mutex);
            results[tasks[i].cell][seed_index(seed)] = std::move(result);
            ++outcome.trained;
        } catch (const std::exception& e) {
            log("FAILED " + label + ": " + e.what());
            std::lock_guard lock(outcome_mutex);
            outcome.failures.push_back({label, e.what()});
        }
    });

    nlohmann::json summary_cells = nlohmann::json::array();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        std::vector<double> accs;
        nlohmann::json per_seed = nlohmann::json::array();
        bool complete = true;
        for (std::size_t s = 0; s < m.seeds.size(); ++s) {
            const auto& r = results[c][s];
            if (!r) {
                complete = false;
                continue;
            }
            accs.push_back(r->test_accuracy);
            per_seed.push_back({{"seed", m.seeds[s]}, {"test_accuracy", r->test_accuracy}});
        }
        nlohmann::json cj{{"cell", cell.id()},
                          {"dataset", cell.dataset},
                          {"variant", to_string(cell.variant)},
                          {"shape", cell.shape.label()},
                          {"complete", complete},
                          {"runs", per_seed}};
        if (complete) {
            auto ms = mean_std(accs);
            cj["accuracy"] = {{"mean", ms.mean}, {"std", ms.std}};
            auto with_meta = cj;
            with_meta["manifest_hash"] = hash;
            write_json(cell_dir(m, cell) / "summary.json", with_meta);
        }
        summary_cells.push_back(cj);
    }
    nlohmann::json failures = nlohmann::json::array();
    std::sort(outcome.failures.begin(), outcome.failures.end(),
              [](const auto& a, const auto& b) { return a.cell < b.cell; });
    for (const auto& f : outcome.failures) failures.push_back({{"run", f.cell}, {"error", f.message}});
    // Table layout: one row per shape x variant, one "mean (std)" column per dataset.
    std::ostringstream csv;
    csv << "shape,variant";
    for (const auto& [name, path] : m.datasets) csv << "," << name;
    csv << "\n" << std::fixed << std::setprecision(4);
    for (auto s : m.shapes) {
        for (auto v : m.variants) {
            if (v == AttentionVariant::SC && s.n_heads != 1) continue;
            csv << s.label() << "," << to_string(v);
            for (const auto& [name, path] : m.datasets) {
                csv << ",";
                for (const auto& cj : summary_cells) {
                    if (cj["dataset"] == name && cj["variant"] == to_string(v) && cj["shape"] == s.label() &&
                        cj.contains("accuracy")) {
                        csv << cj["accuracy"]["mean"].get<double>() << " (" << cj["accuracy"]["std"].get<double>() << ")";
                    }
                }
            }
            csv << "\n";
        }
    }
    detail::write_file_atomic(m.output_dir / "accuracy.csv", csv.str());
    write_json(m.output_dir / "train_summary.json", {{"format_version", kManifestFormatVersion},
                                                     {"manifest_hash", hash},
                                                     {"split_rng", Rng::kAlgorithm},
                                                     {"cells", summary_cells},
                                                     {"failures", failures}});
    return outcome;
}

// ---------------------------------------------------------------------------
// Analysis over trained artifacts

struct CellAnalysis {
    Cell cell;
    std::vector<std::uint64_t> seeds;
    std::vector<AnalysisReport> reports;  ///< one per analyzed seed

    /// Mean of a per-seed statistic; nullopt when no seed produced it.
    template <typename Get>
    std::optional<double> mean_of(Get get) const {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& r : reports) {
            if (auto v = get(r)) {
                sum += *v;
                ++count;
            }
        }
        if (count == 0) return std::nullopt;
        return sum / static_cast<double>(count);
    }

    std::optional<double> f1() const {
        return mean_of([](const AnalysisReport& r) -> std::optional<double> {
            return r.f1 ? std::optional(r.f1->f1_percent) : std::nullopt;
        });
    }
    std::optional<double> ratio() const {
        return mean_of([](const AnalysisReport& r) { return r.attention_ratio; });
    }
    std::optional<double> gini() const {
        return mean_of([](const AnalysisReport& r) -> std::optional<double> { return r.column_mass.gini; });
    }
    /// Smallest r over every head pair of every analyzed seed.
    std::optional<double> min_head_correlation() const {
        std::optional<double> out;
        for (const auto& r : reports) {
            for (const auto& p : r.head_correlations) {
                if (p.correlation.ok()) out = out ? std::min(*out, p.correlation.r) : p.correlation.r;
            }
        }
        return out;
    }
};

inline nlohmann::json to_json(const CellAnalysis& a) {
    auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json hop_means = nlohmann::json::object();
    if (!a.reports.empty()) {
        for (const auto& b : a.reports.front().hops.buckets) {
            hop_means[b.hop == HopDistanceMatrix::kUnreachable ? "unreachable" : std::to_string(b.hop)] = b.mean;
        }
    }
    return {{"cell", a.cell.id()},
            {"dataset", a.cell.dataset},
            {"variant", to_string(a.cell.variant)},
            {"shape", a.cell.shape.label()},
            {"seeds", a.seeds},
            {"f1", opt(a.f1())},
            {"attention_ratio", opt(a.ratio())},
            {"column_mass_gini", opt(a.gini())},
            {"min_head_correlation", opt(a.min_head_correlation())},
            {"hop_means_first_seed", hop_means}};
}

struct AnalyzeOutcome {
    std::vector<CellAnalysis> cells;  ///< successful cells, manifest order
    std::vector<CellFailure> failures;
};

namespace detail {

inline std::string csv_number(std::optional<double> v) {
    if (!v) return "";
    std::ostringstream out;
    out << std::setprecision(10) << *v;
    return out.str();
}

inline std::string hop_label(std::uint32_t hop) {
    return hop == HopDistanceMatrix::kUnreachable ? "unreachable" : std::to_string(hop);
}

}  // namespace detail

/// Analyzes every cell's recorded attention and writes the CSV/JSON/PBM
/// surfaces. A missing artifact fails that cell with an error naming it.
inline AnalyzeOutcome run_analyze(const ExperimentManifest& m, const RunOptions& opts = {}) {
    m.validate();
    const auto cells = m.cells();
    const auto hash = manifest_hash(m);
    DatasetCache cache(m);
    detail::Logger log(opts.log);
    const auto seeds = m.analysis_seeds();
    AnalysisOptions aopts;
    aopts.f1_include_diagonal = m.analysis.f1_include_diagonal;
    aopts.ratio_mode = m.analysis.ratio_mode;
    aopts.correlation_domain = m.analysis.correlation_domain;
    aopts.max_hop_samples = m.analysis.max_samples;

    struct Slot {
        std::optional<CellAnalysis> analysis;
        std::string hops_csv, corr_csv, mass_csv;
        std::optional<CellFailure> failure;
    };
    std::vector<Slot> slots(cells.size());

    parallel_for(cells.size(), opts.jobs, [&](std::size_t c) {
        const auto& cell = cells[c];
        auto& slot = slots[c];
        try {
            const auto& g = cache.dataset(cell.dataset).graph;
            const auto& dist = cache.distances(cell.dataset);
            CellAnalysis ca{cell, seeds, {}};
            std::ostringstream hops, corr, mass;
            const auto prefix = cell.dataset + "," + std::string(to_string(cell.variant)) + "," + cell.shape.label() + ",";
            for (auto seed : seeds) {
                const auto dir = seed_dir(m, cell, seed);
                const auto path = dir / "attention.agat";
                if (!fs::exists(path)) {
                    throw Error("missing attention record for " + cell.id() + " seed " + std::to_string(seed) + " (" +
                                path.string() + "); run train first");
                }
                log("analyze " + cell.id() + " seed " + std::to_string(seed));
                const auto record = load_record(path);
                if (record.num_nodes() != g.num_nodes()) {
                    throw Error("attention record for " + cell.id() + " does not match the dataset size");
                }
                auto report = analyze(record, g, dist, aopts);
                report.homophily = homophily_report(g, m.analysis.share_mode);
                auto j = to_json(report);
                j["manifest_hash"] = hash;
                j["format_version"] = kManifestFormatVersion;
                j["f1_include_diagonal"] = aopts.f1_include_diagonal;
                write_json(dir / "analysis.json", j);
                if (m.analysis.write_pbm && report.f1) {
                    detail::write_file_atomic(dir / "quasi_adjacency.pbm", encode_pbm(report.quasi));
                }
                const auto row = prefix + std::to_string(seed) + ",";
                for (const auto& s : report.hops.samples) hops << row << detail::hop_label(s.hop) << "," << s.value << "\n";
                const auto domain = aopts.correlation_domain.value_or(default_correlation_domain(cell.variant));
                auto emit_pairs = [&](const std::string& label, const RowMatrix<double>& x, const RowMatrix<double>& y) {
                    for (auto [a, b] : correlation_samples(x, y, domain, m.analysis.max_samples)) {
                        corr << row << label << "," << to_string(domain) << "," << a << "," << b << "\n";
                    }
                };
                for (std::size_t l = 0; l < record.matrices.size(); ++l) {
                    const auto& heads = record.matrices[l];
                    for (std::size_t a = 0; a < heads.size(); ++a) {
                        for (std::size_t b = a + 1; b < heads.size(); ++b) {
                            emit_pairs("L" + std::to_string(l) + ":H" + std::to_string(a) + "-H" + std::to_string(b),
                                       heads[a], heads[b]);
                        }
                    }
                }
                for (std::size_t l = 0; l + 1 < record.matrices.size(); ++l) {
                    emit_pairs("L" + std::to_string(l) + "-L" + std::to_string(l + 1), aggregate_heads(record.matrices[l]),
                               aggregate_heads(record.matrices[l + 1]));
                }
                const auto ag = attention_graph(record).matrix;
                for (Eigen::Index j2 = 0; j2 < ag.cols(); ++j2) mass << row << j2 << "," << ag.col(j2).sum() << "\n";
                ca.reports.push_back(std::move(report));
            }
            slot.hops_csv = hops.str();
            slot.corr_csv = corr.str();
            slot.mass_csv = mass.str();
            slot.analysis = std::move(ca);
        } catch (const std::exception& e) {
            log(std::string("FAILED analyze ") + cell.id() + ": " + e.what());
            slot.failure = CellFailure{cell.id(), e.what()};
        }
    });

    AnalyzeOutcome out;
    std::string hops = "dataset,variant,shape,seed,hop,value\n";
    std::string corr = "dataset,variant,shape,seed,pair,domain,x,y\n";
    std::string mass = "dataset,variant,shape,seed,node,mass\n";
    std::string ratio = "dataset,variant,shape,seeds,ratio\n";
    nlohmann::json summary = nlohmann::json::array();
    for (auto& slot : slots) {
        if (slot.failure) {
            out.failures.push_back(*slot.failure);
            continue;
        }
        hops += slot.hops_csv;
        corr += slot.corr_csv;
        mass += slot.mass_csv;
        const auto& a = *slot.analysis;
        ratio += a.cell.dataset + "," + std::string(to_string(a.cell.variant)) + "," + a.cell.shape.label() + "," +
                 std::to_string(a.seeds.size()) + "," + detail::csv_number(a.ratio()) + "\n";
        summary.push_back(to_json(a));
        out.cells.push_back(std::move(*slot.analysis));
    }

    // Table layout: one row per dataset, one column per shape x variant.
    std::vector<std::pair<Shape, AttentionVariant>> columns;
    for (auto s : m.shapes) {
        for (auto v : m.variants) {
            if (v == AttentionVariant::SC && s.n_heads != 1) continue;
            columns.emplace_back(s, v);
        }
    }
    std::string f1 = "dataset";
    for (const auto& [s, v] : columns) f1 += "," + s.label() + "_" + std::string(to_string(v));
    f1 += "\n";
    for (const auto& [name, path] : m.datasets) {
        f1 += name;
        for (const auto& [s, v] : columns) {
            std::optional<double> value;
            for (const auto& a : out.cells) {
                if (a.cell.dataset == name && a.cell.variant == v && a.cell.shape == s) value = a.f1();
            }
            f1 += "," + detail::csv_number(value);
        }
        f1 += "\n";
    }
    detail::write_file_atomic(m.output_dir / "f1.csv", f1);
    detail::write_file_atomic(m.output_dir / "ratio.csv", ratio);
    detail::write_file_atomic(m.output_dir / "hops.csv", hops);
    detail::write_file_atomic(m.output_dir / "corr.csv", corr);
    detail::write_file_atomic(m.output_dir / "column_mass.csv", mass);
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : out.failures) failures.push_back({{"cell", f.cell}, {"error", f.message}});
    write_json(m.output_dir / "analysis.json", {{"format_version", kManifestFormatVersion},
                                                {"manifest_hash", hash},
                                                {"f1_include_diagonal", aopts.f1_include_diagonal},
                                                {"cells", summary},
                                                {"failures", failures}});
    return out;
}

}  // namespace attn_graphs
