#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <future>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_graphs/dataset_io.hpp"
#include "attn_graphs/model.hpp"
#include "attn_graphs/optim.hpp"

namespace attn_graphs {

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    std::size_t max_epochs = 500;
    /// Epochs without a new best validation accuracy before stopping.
    std::size_t patience = 100;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool stratified_split = false;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
        if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
        if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    }

    AdamHyper adam() const { return {learning_rate, beta1, beta2, eps, weight_decay}; }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay}, {"max_epochs", c.max_epochs},
            {"patience", c.patience},           {"seed", c.seed},                 {"beta1", c.beta1},
            {"beta2", c.beta2},                 {"eps", c.eps},                   {"stratified_split", c.stratified_split}};
}

struct RunResult {
    std::uint64_t seed = 0;
    double test_accuracy = 0.0;
    double best_val_accuracy = 0.0;
    double train_accuracy = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<double> val_curve;
    std::vector<double> loss_curve;
    /// Captured on the full graph with the best-validation parameters.
    AttentionRecord attention;
};

inline nlohmann::json to_json(const RunResult& r) {
    return {{"seed", r.seed},
            {"test_accuracy", r.test_accuracy},
            {"best_val_accuracy", r.best_val_accuracy},
            {"train_accuracy", r.train_accuracy},
            {"best_epoch", r.best_epoch},
            {"epochs_run", r.epochs_run},
            {"val_curve", r.val_curve},
            {"loss_curve", r.loss_curve}};
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
    RunResult r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.best_val_accuracy = j.value("best_val_accuracy", 0.0);
    r.train_accuracy = j.value("train_accuracy", 0.0);
    r.best_epoch = j.value("best_epoch", std::size_t{0});
    r.epochs_run = j.value("epochs_run", std::size_t{0});
    r.val_curve = j.value("val_curve", std::vector<double>{});
    r.loss_curve = j.value("loss_curve", std::vector<double>{});
    return r;
}

/// Fraction of `ids` whose arg-max logit equals the label; ties resolve to
/// the lowest class id.
template <typename Derived>
double evaluate(const Eigen::MatrixBase<Derived>& logits, std::span<const std::uint32_t> labels,
                std::span<const std::uint32_t> ids) {
    if (ids.empty()) throw DomainError("evaluate: empty id set");
    std::size_t correct = 0;
    for (auto i : ids) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c) {
            if (logits(i, c) > logits(i, best)) best = c;
        }
        correct += static_cast<std::uint32_t>(best) == labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(ids.size());
}

inline std::uint64_t init_seed_for(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }
inline std::uint64_t dropout_seed_for(std::uint64_t seed) { return seed ^ 0xD1B54A32D192ED03ULL; }

inline NodeSplit split_for(const Graph& g, const TrainConfig& cfg) {
    return cfg.stratified_split ? generate_stratified_split(g, cfg.seed) : generate_split(g, cfg.seed);
}

/// Full-batch transductive training with Adam and early stopping on
/// validation accuracy. The returned result (and `trained`, when given)
/// reflects the best-validation parameters.
template <typename Scalar = float>
RunResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Graph& g, const NodeSplit& split,
                const AttentionStructure& structure, GraphTransformer<Scalar>* trained = nullptr) {
    model_cfg.validate();
    train_cfg.validate();
    if (model_cfg.input_dim != g.feature_dim() || model_cfg.n_classes != g.num_classes()) {
        throw ConfigError("model dimensions do not match the dataset");
    }
    if (split.train_ids.empty() || split.val_ids.empty() || split.test_ids.empty()) {
        throw DomainError("train, validation and test id sets must be non-empty");
    }

    GraphTransformer<Scalar> model(model_cfg, init_seed_for(train_cfg.seed));
    const RowMatrix<Scalar> x = g.features().template cast<Scalar>();
    const auto& labels = g.labels();
    auto params = model.parameters();
    auto state = AdamState<Scalar>::for_params(params);
    const auto hyper = train_cfg.adam();
    Rng dropout_rng(dropout_seed_for(train_cfg.seed));
    const bool stochastic = model_cfg.dropout > 0.0;

    RunResult result;
    result.seed = train_cfg.seed;
    double best_val = -1.0;
    std::vector<RowMatrix<Scalar>> best_params;
    auto snapshot = [&] {
        best_params.clear();
        for (const auto* p : params) best_params.push_back(p->value);
    };

    for (std::size_t epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
        model.zero_grad();
        Tape<Scalar> tape;
        auto logits = model.forward(tape, x, structure, Mode::Train, nullptr, stochastic ? &dropout_rng : nullptr);
        auto loss = cross_entropy(logits, labels, split.train_ids);
        const double loss_value = loss.value()(0, 0);
        if (!std::isfinite(loss_value)) {
            throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
        }

        // Without dropout the training pass already holds the current
        // parameters' predictions.
        double val;
        if (stochastic) {
            auto [eval_logits, unused] = model.infer(x, structure);
            val = evaluate(eval_logits, labels, split.val_ids);
        } else {
            val = evaluate(logits.value(), labels, split.val_ids);
        }
        result.val_curve.push_back(val);
        result.loss_curve.push_back(loss_value);
        result.epochs_run = epoch + 1;
        if (val > best_val) {
            best_val = val;
            result.best_epoch = epoch;
            snapshot();
        } else if (epoch - result.best_epoch >= train_cfg.patience) {
            break;
        }

        tape.backward(loss);
        adam_step(std::span<Parameter<Scalar>* const>(params), state, hyper);
    }

    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    auto [logits, record] = model.infer(x, structure);
    record.seed = train_cfg.seed;
    result.best_val_accuracy = best_val;
    result.test_accuracy = evaluate(logits, labels, split.test_ids);
    result.train_accuracy = evaluate(logits, labels, split.train_ids);
    result.attention = std::move(record);
    if (trained != nullptr) *trained = std::move(model);
    return result;
}

template <typename Scalar = float>
RunResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Graph& g, const NodeSplit& split) {
    StructureOptions opts{model_cfg.dlb_self_bias, model_cfg.dlb_unreachable_bias};
    return train<Scalar>(model_cfg, train_cfg, g, split, build_attention_structure(model_cfg.variant, g, opts));
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  ///< population standard deviation
};

inline MeanStd mean_std(std::span<const double> xs) {
    MeanStd m;
    if (xs.empty()) return m;
    for (auto x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (auto x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return m;
}

struct ExperimentSummary {
    MeanStd accuracy;
    std::vector<RunResult> runs;  ///< ordered by seed
};

/// Trains one run per seed, each with a fresh split and initialization
/// derived from that seed. Up to `jobs` runs execute concurrently; results
/// are ordered by seed regardless.
template <typename Scalar = float>
ExperimentSummary multi_seed_experiment(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Graph& g,
                                        std::span<const std::uint64_t> seeds, std::size_t jobs = 1) {
    if (seeds.size() < 2) throw ConfigError("a multi-seed experiment needs at least 2 seeds");
    StructureOptions opts{model_cfg.dlb_self_bias, model_cfg.dlb_unreachable_bias};
    const auto structure = build_attention_structure(model_cfg.variant, g, opts);

    auto run_one = [&](std::uint64_t seed) {
        auto cfg = train_cfg;
        cfg.seed = seed;
        try {
            return train<Scalar>(model_cfg, cfg, g, split_for(g, cfg), structure);
        } catch (const std::exception& e) {
            throw Error("seed " + std::to_string(seed) + " failed: " + e.what());
        }
    };

    ExperimentSummary out;
    out.runs.resize(seeds.size());
    jobs = std::max<std::size_t>(1, jobs);
    for (std::size_t start = 0; start < seeds.size(); start += jobs) {
        std::vector<std::future<RunResult>> batch;
        const auto end = std::min(seeds.size(), start + jobs);
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_one, seeds[i]));
        }
        for (std::size_t i = start; i < end; ++i) out.runs[i] = batch[i - start].get();
    }
    std::vector<double> accs;
    for (const auto& r : out.runs) accs.push_back(r.test_accuracy);
    out.accuracy = mean_std(accs);
    return out;
}

template <typename Scalar = float>
ExperimentSummary multi_seed_experiment(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Graph& g,
                                        std::size_t n_seeds = 10, std::size_t jobs = 1) {
    std::vector<std::uint64_t> seeds(n_seeds);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
    return multi_seed_experiment<Scalar>(model_cfg, train_cfg, g, seeds, jobs);
}

}  // namespace attn_graphs
