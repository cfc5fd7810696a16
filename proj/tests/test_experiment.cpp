#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>

#include <attn_graphs/report.hpp>

#include "synthetic.hpp"

using namespace attn_graphs;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

/// Fresh scratch directory holding a small planted-partition dataset.
struct Workspace {
    fs::path root;

    explicit Workspace(const std::string& name) {
        root = fs::temp_directory_path() / ("attn_graphs_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root / "data");
        write_canonical(synth::planted_partition(40, 3, 0.25, 0.03, 0.6, 2, 1), root / "data" / "toy.agrf");
    }
    ~Workspace() { fs::remove_all(root); }

    fs::path manifest(const std::string& extra = "", const std::string& name = "grid.manifest") const {
        // Lines in `extra` replace base lines with the same key.
        std::vector<std::string> lines{"format_version = 1", "datasets = toy",    "variants = DL",
                                       "shapes = 1L1H",      "seeds = 0-1",       "model.d_model = 8",
                                       "train.max_epochs = 12", "train.patience = 6", "output = out"};
        std::istringstream in(extra);
        for (std::string line; std::getline(in, line);) {
            const auto key = line.substr(0, line.find(' '));
            std::erase_if(lines, [&](const std::string& l) { return l.substr(0, l.find(' ')) == key; });
            lines.push_back(line);
        }
        std::string text;
        for (const auto& l : lines) text += l + "\n";
        const auto path = root / name;
        spit(path, text);
        return path;
    }
};

RunOptions quiet() {
    RunOptions o;
    o.log = nullptr;
    return o;
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" ATTN_GRAPHS_CLI "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Manifest, ShapesParse) {
    EXPECT_EQ(parse_shape("2L1H"), (Shape{2, 1}));
    EXPECT_EQ(parse_shape("12L4H").label(), "12L4H");
    for (const char* bad : {"L1H", "2L", "2LH", "0L1H", "1L0H", "xLyH", "1H2L"}) {
        EXPECT_THROW(parse_shape(bad), ConfigError) << bad;
    }
}

TEST(Manifest, SeedLists) {
    EXPECT_EQ(parse_seed_list("0-3"), (std::vector<std::uint64_t>{0, 1, 2, 3}));
    EXPECT_EQ(parse_seed_list("5, 1-2"), (std::vector<std::uint64_t>{5, 1, 2}));
    EXPECT_THROW(parse_seed_list("3-1"), ConfigError);
    EXPECT_THROW(parse_seed_list("1,1"), ConfigError);
    EXPECT_THROW(parse_seed_list("a"), ConfigError);
}

TEST(Manifest, ShippedGridHasOneCellPerConfiguration) {
    const auto m = load_manifest(fs::path(ATTN_GRAPHS_SOURCE_DIR) / "configs" / "benchmark_grid.manifest");
    const auto cells = m.cells();
    // 7 datasets x (SC with 2 single-head shapes + 3 learned variants x 4 shapes).
    EXPECT_EQ(cells.size(), 98u);
    EXPECT_EQ(std::count_if(cells.begin(), cells.end(), [](const Cell& c) { return c.variant == AttentionVariant::SC; }), 14);
    EXPECT_TRUE(std::none_of(cells.begin(), cells.end(),
                             [](const Cell& c) { return c.variant == AttentionVariant::SC && c.shape.n_heads != 1; }));
    EXPECT_EQ(m.seeds.size(), 10u);
    EXPECT_EQ(m.train.max_epochs, 500u);
    EXPECT_EQ(m.model.d_model, 128u);
    EXPECT_EQ(m.datasets[0].second.filename(), "cora.agrf");
    EXPECT_EQ(cells.front().id(), "cora/SC/1L1H");

    const auto smoke = load_manifest(fs::path(ATTN_GRAPHS_SOURCE_DIR) / "configs" / "smoke.manifest");
    EXPECT_EQ(smoke.cells().size(), 7u);
}

TEST(Manifest, Errors) {
    const fs::path base = "/tmp";
    const std::string head = "format_version = 1\ndatasets = a\n";
    EXPECT_NO_THROW(parse_manifest(head, base));
    EXPECT_THROW(parse_manifest("datasets = a\n", base), ConfigError);
    EXPECT_THROW(parse_manifest("format_version = 1\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "bogus = 1\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "seeds = 1\nseeds = 2\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "no equals sign\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "variants = SC, XX\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "record_attention = some\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "dataset.b = b.agrf\n", base), ConfigError);
    EXPECT_THROW(parse_manifest(head + "train.max_epochs = -3\n", base), ConfigError);

    EXPECT_THROW(parse_manifest("format_version = 2\ndatasets = a\n", base).validate(), ConfigError);
    auto missing = parse_manifest(head, base);
    try {
        missing.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/tmp/data/a.agrf"), std::string::npos);
    }
}

TEST(Manifest, PathsResolveAgainstTheManifestDirectory) {
    auto m = parse_manifest("format_version = 1\ndatasets = a, b\ndataset.b = /abs/b.agrf\noutput = o\n", "/base");
    EXPECT_EQ(m.dataset_path("a"), fs::path("/base/data/a.agrf"));
    EXPECT_EQ(m.dataset_path("b"), fs::path("/abs/b.agrf"));
    EXPECT_EQ(m.output_dir, fs::path("/base/o"));
    EXPECT_THROW(m.dataset_path("c"), ConfigError);
    EXPECT_EQ(seed_dir(m, {"a", AttentionVariant::DLB, {2, 1}}, 3), fs::path("/base/o/a/DLB/2L1H/seed3"));
}

TEST(Manifest, HashTracksContentNotFormatting) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto a = parse_manifest("format_version = 1\ndatasets = a\nseeds = 0-2\n", "/x");
    const auto b = parse_manifest("# comment\nseeds=0,1,2\n\nformat_version=1\ndatasets = a\n", "/x");
    const auto c = parse_manifest("format_version = 1\ndatasets = a\nseeds = 0-3\n", "/x");
    EXPECT_EQ(manifest_hash(a), manifest_hash(b));
    EXPECT_NE(manifest_hash(a), manifest_hash(c));
    EXPECT_EQ(manifest_hash(a).size(), 64u);
}

TEST(Pipeline, TrainIsResumableAndDeterministic) {
    Workspace w("train");
    const auto m = load_manifest(w.manifest());
    const Cell cell{"toy", AttentionVariant::DL, {1, 1}};

    auto first = run_train(m, quiet());
    EXPECT_EQ(first.trained, 2u);
    EXPECT_TRUE(first.failures.empty());
    for (std::uint64_t s : {0, 1}) {
        EXPECT_TRUE(fs::exists(seed_dir(m, cell, s) / "run.json"));
        EXPECT_TRUE(fs::exists(seed_dir(m, cell, s) / "model.agck"));
    }
    EXPECT_TRUE(fs::exists(seed_dir(m, cell, 0) / "attention.agat"));
    EXPECT_FALSE(fs::exists(seed_dir(m, cell, 1) / "attention.agat"));
    const auto summary = read_json(cell_dir(m, cell) / "summary.json");
    EXPECT_EQ(summary["runs"].size(), 2u);
    EXPECT_EQ(summary["manifest_hash"], manifest_hash(m));
    const auto split_sizes = read_json(seed_dir(m, cell, 0) / "run.json")["split_sizes"];
    EXPECT_EQ(split_sizes, nlohmann::json({16, 12, 12}));

    const auto train_summary = slurp(m.output_dir / "train_summary.json");
    const auto accuracy = slurp(m.output_dir / "accuracy.csv");
    EXPECT_EQ(accuracy.substr(0, accuracy.find('\n')), "shape,variant,toy");

    auto again = run_train(m, quiet());
    EXPECT_EQ(again.trained, 0u);
    EXPECT_EQ(again.skipped, 2u);
    EXPECT_EQ(slurp(m.output_dir / "train_summary.json"), train_summary);

    auto opts = quiet();
    opts.force = true;
    const auto run0 = slurp(seed_dir(m, cell, 0) / "run.json");
    EXPECT_EQ(run_train(m, opts).trained, 2u);
    EXPECT_EQ(slurp(seed_dir(m, cell, 0) / "run.json"), run0);
    EXPECT_EQ(slurp(m.output_dir / "train_summary.json"), train_summary);
}

TEST(Pipeline, ChangedHyperparametersInvalidateReuse) {
    Workspace w("rekey");
    run_train(load_manifest(w.manifest()), quiet());
    const auto m = load_manifest(w.manifest("train.learning_rate = 0.01\n", "other.manifest"));
    EXPECT_EQ(run_train(m, quiet()).trained, 2u);
}

TEST(Pipeline, ParallelJobsMatchSerial) {
    Workspace w("jobs");
    auto serial = load_manifest(w.manifest("variants = SL, DLB\nshapes = 1L1H, 1L2H\n"));
    auto parallel = serial;
    parallel.output_dir = w.root / "out_parallel";
    run_train(serial, quiet());
    auto opts = quiet();
    opts.jobs = 3;
    run_train(parallel, opts);
    EXPECT_EQ(slurp(serial.output_dir / "accuracy.csv"), slurp(parallel.output_dir / "accuracy.csv"));
    const Cell cell{"toy", AttentionVariant::DLB, {1, 2}};
    EXPECT_EQ(slurp(seed_dir(serial, cell, 0) / "attention.agat"), slurp(seed_dir(parallel, cell, 0) / "attention.agat"));
}

TEST(Pipeline, AnalyzeEmitsTablesAndSeries) {
    Workspace w("analyze");
    const auto m = load_manifest(w.manifest("variants = SL, DLB, DL\nshapes = 1L1H, 2L2H\n"));
    ASSERT_TRUE(run_train(m, quiet()).failures.empty());
    auto out = run_analyze(m, quiet());
    ASSERT_TRUE(out.failures.empty());
    EXPECT_EQ(out.cells.size(), 6u);

    const auto ratio = slurp(m.output_dir / "ratio.csv");
    EXPECT_EQ(ratio.substr(0, ratio.find('\n')), "dataset,variant,shape,seeds,ratio");
    EXPECT_NE(ratio.find("\ntoy,DL,1L1H,1,"), std::string::npos);
    EXPECT_NE(ratio.find("\ntoy,SL,1L1H,1,0\n"), std::string::npos);

    std::istringstream f1(slurp(m.output_dir / "f1.csv"));
    std::string header, row, extra;
    std::getline(f1, header);
    std::getline(f1, row);
    EXPECT_EQ(header, "dataset,1L1H_SL,1L1H_DLB,1L1H_DL,2L2H_SL,2L2H_DLB,2L2H_DL");
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
    EXPECT_EQ(row.substr(0, 4), "toy,");
    EXPECT_FALSE(std::getline(f1, extra) && !extra.empty());

    std::istringstream corr(slurp(m.output_dir / "corr.csv"));
    std::getline(corr, header);
    EXPECT_EQ(header, "dataset,variant,shape,seed,pair,domain,x,y");
    std::size_t lines = 0;
    bool saw_layer_pair = false;
    for (std::string line; std::getline(corr, line); ++lines) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7) << line;
        if (line.find(",L0-L1,") != std::string::npos) saw_layer_pair = true;
    }
    EXPECT_GT(lines, 0u);
    EXPECT_TRUE(saw_layer_pair);

    const auto hops = slurp(m.output_dir / "hops.csv");
    EXPECT_EQ(hops.substr(0, hops.find('\n')), "dataset,variant,shape,seed,hop,value");
    const Cell dl{"toy", AttentionVariant::DL, {1, 1}};
    const auto per_seed = read_json(seed_dir(m, dl, 0) / "analysis.json");
    EXPECT_EQ(per_seed["manifest_hash"], manifest_hash(m));
    EXPECT_TRUE(fs::exists(seed_dir(m, dl, 0) / "quasi_adjacency.pbm"));
    const auto summary = read_json(m.output_dir / "analysis.json");
    EXPECT_EQ(summary["cells"].size(), 6u);
    EXPECT_EQ(summary["format_version"], kManifestFormatVersion);
}

TEST(Pipeline, AnalyzeNamesTheCellWithoutArtifacts) {
    Workspace w("missing");
    const auto m = load_manifest(w.manifest("variants = DL, DLB\n"));
    auto out = run_analyze(m, quiet());
    ASSERT_EQ(out.failures.size(), 2u);
    EXPECT_EQ(out.failures[0].cell, "toy/DL/1L1H");
    EXPECT_NE(out.failures[0].message.find("run train first"), std::string::npos);
}

TEST(Pipeline, ReportComparesAgainstReferenceWithoutTouchingArtifacts) {
    Workspace w("report");
    const auto m = load_manifest(w.manifest("variants = SL, DL\n"));
    ASSERT_TRUE(run_train(m, quiet()).failures.empty());
    const auto analyzed = run_analyze(m, quiet());
    ASSERT_TRUE(analyzed.failures.empty()) << analyzed.failures[0].message;
    const auto stats = dataset_stats(load_dataset(w.root / "data" / "toy.agrf").graph);

    nlohmann::json ref = {
        {"format_version", 1},
        {"datasets", {{{"name", "toy"}, {"display_name", "Toy"}}}},
        {"tolerances",
         {{"homophily_abs", 0.005},
          {"accuracy_abs", 0.05},
          {"dl_f1_max", 4.0},
          {"dlb_over_dl_f1_factor", 5.0},
          {"local_ratio_max", 0.05},
          {"dl_ratio_min", 0.5},
          {"dl_ratio_max", 1.5}}},
        {"entries",
         {{{"metric", "node_homophily"},
           {"dataset", "toy"},
           {"value", stats.homophily.node_homophily + 0.004},
           {"printed", "x"},
           {"table", "T"},
           {"row", "R"},
           {"column", "C"}},
          {{"metric", "edge_homophily"},
           {"dataset", "toy"},
           {"value", stats.homophily.edge_homophily + 0.006},
           {"printed", "x"},
           {"table", "T"},
           {"row", "R"},
           {"column", "C"}},
          {{"metric", "num_nodes"},
           {"dataset", "toy"},
           {"value", 40},
           {"printed", 40},
           {"table", "T"},
           {"row", "R"},
           {"column", "C"}},
          {{"metric", "accuracy"},
           {"dataset", "toy"},
           {"variant", "DL"},
           {"shape", "1L1H"},
           {"value", -1.0},
           {"printed", "x"},
           {"table", "T"},
           {"row", "R"},
           {"column", "C"}}}}};
    spit(w.root / "ref.json", ref.dump());

    std::map<fs::path, std::string> before;
    for (const auto& e : fs::recursive_directory_iterator(m.output_dir)) {
        if (e.is_regular_file()) before[e.path()] = slurp(e.path());
    }
    const auto rep = build_report(m, load_reference_values(w.root / "ref.json"));
    for (const auto& [path, content] : before) EXPECT_EQ(slurp(path), content) << path;
    std::size_t after = 0;
    for (const auto& e : fs::recursive_directory_iterator(m.output_dir)) after += e.is_regular_file();
    EXPECT_EQ(after, before.size());

    auto find = [&](const std::string& section, const std::string& subject, const std::string& metric) {
        for (const auto& l : rep.lines) {
            if (l.section == section && l.subject == subject && l.metric == metric) return &l;
        }
        return static_cast<const ReportLine*>(nullptr);
    };
    ASSERT_NE(find("homophily", "toy", "node_homophily"), nullptr);
    EXPECT_EQ(find("homophily", "toy", "node_homophily")->status, CheckStatus::Pass);
    EXPECT_EQ(find("homophily", "toy", "edge_homophily")->status, CheckStatus::Fail);
    EXPECT_EQ(find("dataset", "toy", "num_nodes")->status, CheckStatus::Pass);
    EXPECT_EQ(find("accuracy", "toy/DL/1L1H", "mean_test_accuracy")->status, CheckStatus::Fail);
    EXPECT_EQ(find("accuracy", "toy/SL/1L1H", "mean_test_accuracy")->status, CheckStatus::Missing);
    const auto* dl_f1 = find("f1", "toy/DL/1L1H", "f1_percent");
    ASSERT_NE(dl_f1, nullptr);
    ASSERT_TRUE(dl_f1->reproduced.has_value());
    EXPECT_EQ(dl_f1->status, *dl_f1->reproduced < 4.0 ? CheckStatus::Pass : CheckStatus::Fail);
    const auto* sl_ratio = find("attention_ratio", "toy/SL/1L1H", "ratio");
    ASSERT_NE(sl_ratio, nullptr);
    EXPECT_EQ(sl_ratio->status, CheckStatus::Pass);

    const auto j = to_json(rep);
    EXPECT_EQ(j["manifest_hash"], manifest_hash(m));
    EXPECT_EQ(j["totals"]["pass"].get<std::size_t>() + j["totals"]["fail"].get<std::size_t>() +
                  j["totals"]["missing"].get<std::size_t>(),
              rep.lines.size());
    EXPECT_NE(to_text(rep).find("[homophily]"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    Workspace w("cli");
    const auto manifest = w.manifest().string();
    EXPECT_EQ(run_cli("train -m '" + manifest + "'"), 0);
    EXPECT_EQ(run_cli("analyze -m '" + manifest + "'"), 0);
    EXPECT_EQ(run_cli("report -m '" + manifest + "'"), 0);
    EXPECT_TRUE(fs::exists(w.root / "out" / "report.json"));
    EXPECT_TRUE(fs::exists(w.root / "out" / "report.txt"));

    // Configuration problems.
    EXPECT_EQ(run_cli("train -m '" + w.manifest("bogus = 1\n", "bad.manifest").string() + "'"), 2);
    EXPECT_EQ(run_cli("train"), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("--seed-list 3-1 train -m '" + manifest + "'"), 2);

    // A run that fails numerically is isolated and reported with exit 1.
    auto g = synth::planted_partition(30, 2, 0.2, 0.05, 0.5, 0, 2);
    RowMatrix<double> x = g.features();
    x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    write_canonical(Graph(g.num_nodes(), g.directed_edges(), x, g.labels(), g.num_classes()), w.root / "data" / "nan.agrf");
    spit(w.root / "nan.manifest", "format_version = 1\ndatasets = toy, nan\nvariants = DL\nshapes = 1L1H\nseeds = 0\n"
                                  "model.d_model = 8\ntrain.max_epochs = 5\ntrain.patience = 5\noutput = out_nan\n");
    EXPECT_EQ(run_cli("train -m '" + (w.root / "nan.manifest").string() + "'"), 1);
    const auto summary = read_json(w.root / "out_nan" / "train_summary.json");
    ASSERT_EQ(summary["failures"].size(), 1u);
    EXPECT_NE(summary["failures"][0]["run"].get<std::string>().find("nan/DL/1L1H"), std::string::npos);
    EXPECT_TRUE(fs::exists(w.root / "out_nan" / "toy" / "DL" / "1L1H" / "summary.json"));
}

TEST(Cli, OutputOverrides) {
    Workspace w("override");
    const auto manifest = w.manifest().string();
    EXPECT_EQ(run_cli("--seed-list 4 train -m '" + manifest + "'", "ATTN_GRAPHS_OUT='" + (w.root / "env").string() + "'"), 0);
    EXPECT_TRUE(fs::exists(w.root / "env" / "toy" / "DL" / "1L1H" / "seed4" / "run.json"));
    EXPECT_FALSE(fs::exists(w.root / "env" / "toy" / "DL" / "1L1H" / "seed0"));
    // --out wins over the environment.
    EXPECT_EQ(run_cli("--seed-list 4 --out '" + (w.root / "flag").string() + "' train -m '" + manifest + "'",
                      "ATTN_GRAPHS_OUT='" + (w.root / "env2").string() + "'"),
              0);
    EXPECT_TRUE(fs::exists(w.root / "flag" / "train_summary.json"));
    EXPECT_FALSE(fs::exists(w.root / "env2"));
}

TEST(Cli, DatasetTooling) {
    Workspace w("dataset");
    const auto agrf = (w.root / "data" / "toy.agrf").string();
    EXPECT_EQ(run_cli("dataset stats '" + agrf + "'"), 0);
    EXPECT_EQ(run_cli("dataset validate --seed 3 '" + agrf + "'"), 0);
    const auto jsonl = (w.root / "toy.jsonl").string();
    EXPECT_EQ(run_cli("dataset convert --format binary '" + agrf + "' -o '" + jsonl + "'"), 0);
    const auto back = (w.root / "back.agrf").string();
    EXPECT_EQ(run_cli("dataset convert --format jsonl '" + jsonl + "' -o '" + back + "'"), 0);
    EXPECT_EQ(slurp(back), slurp(agrf));
    spit(w.root / "junk.agrf", "not a dataset");
    EXPECT_EQ(run_cli("dataset validate '" + (w.root / "junk.agrf").string() + "'"), 1);
    EXPECT_EQ(run_cli("dataset stats '" + (w.root / "junk.agrf").string() + "'"), 2);
}
