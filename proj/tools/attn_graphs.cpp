// attn-graphs: dataset tooling, grid training, attention analysis and
// reference-table reports.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <attn_graphs/converters.hpp>
#include <attn_graphs/dataset_io.hpp>
#include <attn_graphs/experiment.hpp>
#include <attn_graphs/report.hpp>

#ifndef ATTN_GRAPHS_REFERENCE_FILE
#define ATTN_GRAPHS_REFERENCE_FILE "data/reference_values.json"
#endif

namespace {

using namespace attn_graphs;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct GlobalFlags {
    std::size_t jobs = 1;
    bool force = false;
    std::string seed_list;
    std::string out;
};

ExperimentManifest manifest_with_overrides(const std::string& path, const GlobalFlags& flags) {
    auto m = load_manifest(path);
    if (!flags.seed_list.empty()) m.seeds = parse_seed_list(flags.seed_list);
    if (!flags.out.empty()) {
        m.output_dir = flags.out;
    } else if (const char* env = std::getenv("ATTN_GRAPHS_OUT"); env != nullptr && *env != '\0') {
        m.output_dir = env;
    }
    return m;
}

ClassShareMode parse_shares(const std::string& s) {
    if (s == "degree") return ClassShareMode::Degree;
    if (s == "uniform") return ClassShareMode::Uniform;
    throw ConfigError("--homophily-shares must be degree or uniform");
}

void print_failures(const std::vector<CellFailure>& failures) {
    if (failures.empty()) return;
    std::cerr << failures.size() << " failed:\n";
    for (const auto& f : failures) std::cerr << "  " << f.cell << ": " << f.message << "\n";
}

int cmd_convert(const std::string& format, const std::vector<std::string>& inputs, const std::string& output,
                const std::string& name, std::optional<std::size_t> feature_indices) {
    auto need = [&](std::size_t n, const char* what) {
        if (inputs.size() != n) throw ConfigError("--format " + format + " expects " + what);
    };
    LoadedDataset data;
    if (format == "linqs") {
        need(2, "<name>.content <name>.cites");
        data = convert_linqs(inputs[0], inputs[1], name);
    } else if (format == "geomgcn") {
        need(2, "out1_node_feature_label.txt out1_graph_edges.txt");
        data = convert_geomgcn(inputs[0], inputs[1], name, feature_indices);
    } else if (format == "edgelist") {
        need(3, "<edges> <features> <labels>");
        data = convert_edgelist(inputs[0], inputs[1], inputs[2], name);
    } else if (format == "jsonl" || format == "binary") {
        need(1, "a single dataset file");
        data = format == "jsonl" ? load_jsonl(inputs[0]) : load_canonical(inputs[0]);
        if (!name.empty()) {
            const auto& g = data.graph;
            std::vector<Edge> edges = g.directed_edges();
            data.graph = Graph(g.num_nodes(), edges, g.features(), g.labels(), g.num_classes(), name);
        }
    } else {
        throw ConfigError("unknown --format '" + format + "'");
    }
    for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
    if (std::filesystem::path(output).extension() == ".jsonl") {
        write_jsonl(data.graph, output, data.source_edge_count);
    } else {
        write_canonical(data.graph, output, data.source_edge_count);
    }
    std::cout << to_json(dataset_stats(data.graph, ClassShareMode::Degree, data.source_edge_count)).dump(2) << "\n";
    return kExitOk;
}

int cmd_stats(const std::string& path, const std::string& shares) {
    auto data = load_dataset(path);
    std::cout << to_json(dataset_stats(data.graph, parse_shares(shares), data.source_edge_count)).dump(2) << "\n";
    return kExitOk;
}

int cmd_validate(const std::string& path, std::uint64_t seed, bool stratified) {
    LoadedDataset data;
    try {
        data = load_dataset(path);
    } catch (const FormatError& e) {
        std::cerr << "invalid: " << e.what() << " (byte offset " << e.offset() << ")\n";
        return kExitFailure;
    } catch (const Error& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return kExitFailure;
    }
    for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
    const auto split = stratified ? generate_stratified_split(data.graph, seed) : generate_split(data.graph, seed);
    std::cout << "ok: " << data.graph.num_nodes() << " nodes, " << data.graph.undirected_edge_count()
              << " undirected edges, split " << split.train_ids.size() << "/" << split.val_ids.size() << "/"
              << split.test_ids.size() << " (seed " << seed << ")\n";
    return kExitOk;
}

int cmd_train(const std::string& manifest, const GlobalFlags& flags) {
    auto m = manifest_with_overrides(manifest, flags);
    auto outcome = run_train(m, {flags.force, flags.jobs, &std::cerr});
    std::cout << "trained " << outcome.trained << ", reused " << outcome.skipped << ", failed "
              << outcome.failures.size() << "; summary in " << (m.output_dir / "train_summary.json").string() << "\n";
    print_failures(outcome.failures);
    return outcome.failures.empty() ? kExitOk : kExitFailure;
}

int cmd_analyze(const std::string& manifest, const GlobalFlags& flags) {
    auto m = manifest_with_overrides(manifest, flags);
    auto outcome = run_analyze(m, {flags.force, flags.jobs, &std::cerr});
    std::cout << "analyzed " << outcome.cells.size() << " cells, failed " << outcome.failures.size() << "; outputs in "
              << m.output_dir.string() << "\n";
    print_failures(outcome.failures);
    return outcome.failures.empty() ? kExitOk : kExitFailure;
}

int cmd_report(const std::string& manifest, const std::string& reference, const GlobalFlags& flags) {
    auto m = manifest_with_overrides(manifest, flags);
    m.validate();
    std::filesystem::path ref_path = reference;
    if (ref_path.empty()) ref_path = m.reference_values.empty() ? ATTN_GRAPHS_REFERENCE_FILE : m.reference_values;
    const auto rep = build_report(m, load_reference_values(ref_path));
    detail::write_file_atomic(m.output_dir / "report.json", to_json(rep).dump(2) + "\n");
    const auto text = to_text(rep);
    detail::write_file_atomic(m.output_dir / "report.txt", text);
    std::cout << text;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention graph analysis for graph transformers"};
    app.require_subcommand(1);
    GlobalFlags flags;
    app.add_option("--jobs", flags.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    app.add_flag("--force", flags.force, "Retrain even when finished artifacts exist");
    app.add_option("--seed-list", flags.seed_list, "Seeds overriding the manifest, e.g. 0-9 or 0,2,4");
    app.add_option("--out", flags.out, "Output root (default: manifest, then $ATTN_GRAPHS_OUT)");

    auto* dataset = app.add_subcommand("dataset", "Dataset conversion and inspection");
    dataset->require_subcommand(1);

    std::string format, output, name;
    std::vector<std::string> inputs;
    std::optional<std::size_t> feature_indices;
    auto* convert = dataset->add_subcommand("convert", "Convert an upstream dataset to the canonical format");
    convert->add_option("--format", format, "linqs | geomgcn | edgelist | jsonl | binary")
        ->required()
        ->check(CLI::IsMember({"linqs", "geomgcn", "edgelist", "jsonl", "binary"}));
    convert->add_option("inputs", inputs, "Input files for the chosen format")->required()->check(CLI::ExistingFile);
    convert->add_option("-o,--output", output, "Output path (.jsonl for the text twin, else binary)")->required();
    convert->add_option("--name", name, "Dataset name stored in the file");
    convert->add_option("--feature-indices", feature_indices,
                        "geomgcn: features are active indices of a binary vector of this width");

    std::string file, shares = "degree";
    std::uint64_t split_seed = 0;
    bool stratified = false;
    auto* stats = dataset->add_subcommand("stats", "Counts and homophily as JSON");
    stats->add_option("file", file)->required()->check(CLI::ExistingFile);
    stats->add_option("--homophily-shares", shares, "degree | uniform")->check(CLI::IsMember({"degree", "uniform"}));

    auto* validate = dataset->add_subcommand("validate", "Check a dataset file and its split");
    validate->add_option("file", file)->required()->check(CLI::ExistingFile);
    validate->add_option("--seed", split_seed, "Split seed");
    validate->add_flag("--stratified", stratified, "Class-stratified split");

    std::string manifest, reference;
    auto* train = app.add_subcommand("train", "Train every grid cell and seed");
    train->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
    auto* analyze = app.add_subcommand("analyze", "Analyze recorded attention");
    analyze->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
    auto* report = app.add_subcommand("report", "Compare results with the reference tables");
    report->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
    report->add_option("--reference", reference, "Reference values file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*convert) return cmd_convert(format, inputs, output, name, feature_indices);
        if (*stats) return cmd_stats(file, shares);
        if (*validate) return cmd_validate(file, split_seed, stratified);
        if (*train) return cmd_train(manifest, flags);
        if (*analyze) return cmd_analyze(manifest, flags);
        if (*report) return cmd_report(manifest, reference, flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << " (byte offset " << e.offset() << ")\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
