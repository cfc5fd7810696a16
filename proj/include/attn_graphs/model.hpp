#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attn_graphs/dataset_io.hpp"
#include "attn_graphs/errors.hpp"
#include "attn_graphs/graph.hpp"
#include "attn_graphs/random.hpp"
#include "attn_graphs/tensor.hpp"

namespace attn_graphs {

/// Where attention may look and how it is parametrized.
enum class AttentionVariant {
    SC,   ///< sparse, constant 1/sqrt(d_i d_j) coefficients
    SL,   ///< sparse, softmax restricted to neighbors and self
    DLB,  ///< dense softmax with additive 1/hop-distance bias
    DL,   ///< dense, unbiased softmax
};

inline constexpr AttentionVariant kAllVariants[] = {AttentionVariant::SC, AttentionVariant::SL, AttentionVariant::DLB,
                                                    AttentionVariant::DL};

inline std::string_view to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::SC: return "SC";
        case AttentionVariant::SL: return "SL";
        case AttentionVariant::DLB: return "DLB";
        case AttentionVariant::DL: return "DL";
    }
    return "?";
}

inline AttentionVariant parse_variant(std::string_view s) {
    for (auto v : kAllVariants) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("unknown attention variant '" + std::string(s) + "' (expected SC, SL, DLB or DL)");
}

inline bool is_learned(AttentionVariant v) { return v != AttentionVariant::SC; }

enum class NormPlacement { Post, Pre };
enum class Activation { ReLU, GELU };

struct ModelConfig {
    AttentionVariant variant = AttentionVariant::DL;
    std::size_t n_layers = 1;
    std::size_t n_heads = 1;
    std::size_t d_model = 128;
    std::size_t n_classes = 2;
    std::size_t input_dim = 1;
    std::size_t ffn_width = 0;  ///< 0 selects 4 * d_model
    NormPlacement norm = NormPlacement::Post;
    Activation activation = Activation::ReLU;
    double dropout = 0.0;
    double dlb_self_bias = 1.0;         ///< b_ii
    double dlb_unreachable_bias = 0.0;  ///< b_ij for disconnected pairs

    std::size_t head_dim() const { return d_model / n_heads; }
    std::size_t ffn_dim() const { return ffn_width == 0 ? 4 * d_model : ffn_width; }

    void validate() const {
        if (n_layers == 0) throw ConfigError("n_layers must be at least 1");
        if (n_heads == 0) throw ConfigError("n_heads must be at least 1");
        if (d_model == 0 || d_model % n_heads != 0) {
            throw ConfigError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                              std::to_string(n_heads) + ")");
        }
        if (variant == AttentionVariant::SC && n_heads != 1) {
            throw ConfigError("SC attention is weight-independent and only supports a single head");
        }
        if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
        if (input_dim == 0) throw ConfigError("input_dim must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    }

    /// "1L2H"-style label.
    std::string shape_label() const { return std::to_string(n_layers) + "L" + std::to_string(n_heads) + "H"; }
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"variant", to_string(c.variant)},
            {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},
            {"d_model", c.d_model},
            {"n_classes", c.n_classes},
            {"input_dim", c.input_dim},
            {"ffn_width", c.ffn_dim()},
            {"norm", c.norm == NormPlacement::Post ? "post" : "pre"},
            {"activation", c.activation == Activation::ReLU ? "relu" : "gelu"},
            {"dropout", c.dropout},
            {"dlb_self_bias", c.dlb_self_bias},
            {"dlb_unreachable_bias", c.dlb_unreachable_bias}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.ffn_width = j.value("ffn_width", std::size_t{0});
    c.norm = j.value("norm", "post") == "pre" ? NormPlacement::Pre : NormPlacement::Post;
    c.activation = j.value("activation", "relu") == "gelu" ? Activation::GELU : Activation::ReLU;
    c.dropout = j.value("dropout", 0.0);
    c.dlb_self_bias = j.value("dlb_self_bias", 1.0);
    c.dlb_unreachable_bias = j.value("dlb_unreachable_bias", 0.0);
    return c;
}

// ---------------------------------------------------------------------------
// Attention structure

struct AttentionStructure {
    enum class Kind { Mask, AdditiveBias, Constant };

    AttentionVariant variant = AttentionVariant::DL;
    Kind kind = Kind::AdditiveBias;
    /// Mask (SL) or bias (DLB, DL); unused for SC.
    AdditiveMatrix additive;
    /// SC coefficients; empty otherwise.
    RowMatrix<double> constant;

    std::size_t size() const {
        return kind == Kind::Constant ? static_cast<std::size_t>(constant.rows()) : additive.rows();
    }
};

struct StructureOptions {
    double dlb_self_bias = 1.0;
    double dlb_unreachable_bias = 0.0;
};

/// Unbiased dense structure for n nodes. Needs no graph: DL never sees the
/// adjacency.
inline AttentionStructure dense_structure(std::size_t n) {
    AttentionStructure s;
    s.variant = AttentionVariant::DL;
    s.kind = AttentionStructure::Kind::AdditiveBias;
    s.additive = AdditiveMatrix::zeros(n);
    return s;
}

inline AttentionStructure build_attention_structure(AttentionVariant variant, const Graph& g,
                                                    const HopDistanceMatrix& dist, StructureOptions opts = {}) {
    const auto n = g.num_nodes();
    if (dist.size() != n) throw ShapeError("hop distance matrix does not match the graph");
    AttentionStructure s;
    s.variant = variant;
    switch (variant) {
        case AttentionVariant::SC: {
            s.kind = AttentionStructure::Kind::Constant;
            s.constant = RowMatrix<double>::Zero(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                for (auto j : g.neighbors(i)) {
                    s.constant(i, j) = 1.0 / std::sqrt(static_cast<double>(g.degree(i)) * static_cast<double>(g.degree(j)));
                }
            }
            break;
        }
        case AttentionVariant::SL: {
            s.kind = AttentionStructure::Kind::Mask;
            s.additive = AdditiveMatrix(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (i != j && !g.has_edge(i, j)) s.additive.set(i, j, kNegInf);
                }
            }
            break;
        }
        case AttentionVariant::DLB: {
            s.kind = AttentionStructure::Kind::AdditiveBias;
            s.additive = AdditiveMatrix(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    double b;
                    if (i == j) {
                        b = opts.dlb_self_bias;
                    } else if (dist.reachable(i, j)) {
                        b = 1.0 / static_cast<double>(dist.at(i, j));
                    } else {
                        b = opts.dlb_unreachable_bias;
                    }
                    s.additive.set(i, j, b);
                }
            }
            break;
        }
        case AttentionVariant::DL: s = dense_structure(n); break;
    }
    return s;
}

inline AttentionStructure build_attention_structure(AttentionVariant variant, const Graph& g, StructureOptions opts = {}) {
    if (variant == AttentionVariant::DL) return dense_structure(g.num_nodes());
    return build_attention_structure(variant, g, shortest_path_lengths(g), opts);
}

// ---------------------------------------------------------------------------
// Attention record

/// All N_L x N_H post-softmax attention matrices of one forward pass.
struct AttentionRecord {
    ModelConfig config;
    std::uint64_t seed = 0;
    /// matrices[layer][head], each n x n.
    std::vector<std::vector<RowMatrix<double>>> matrices;

    std::size_t num_nodes() const {
        return matrices.empty() || matrices.front().empty() ? 0 : static_cast<std::size_t>(matrices[0][0].rows());
    }
};

inline constexpr char kRecordMagic[4] = {'A', 'G', 'A', 'T'};
inline constexpr std::uint32_t kRecordVersion = 1;

/// Layout: "AGAT", u32 version, u32 config-JSON length + bytes, u64 seed,
/// u32 N_L, u32 N_H, u64 n, then N_L * N_H row-major n x n f32 blocks.
inline std::string encode_record(const AttentionRecord& r) {
    std::string buf(kRecordMagic, 4);
    detail::put<std::uint32_t>(buf, kRecordVersion);
    const auto cfg = to_json(r.config).dump();
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.size()));
    buf += cfg;
    detail::put<std::uint64_t>(buf, r.seed);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(r.matrices.size()));
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(r.matrices.empty() ? 0 : r.matrices[0].size()));
    detail::put<std::uint64_t>(buf, r.num_nodes());
    for (const auto& layer : r.matrices) {
        for (const auto& m : layer) {
            for (Eigen::Index i = 0; i < m.size(); ++i) detail::put<float>(buf, static_cast<float>(m.data()[i]));
        }
    }
    return buf;
}

inline AttentionRecord decode_record(std::string bytes) {
    detail::ByteReader in(std::move(bytes));
    char magic[4];
    if (!in.read(magic) || std::memcmp(magic, kRecordMagic, 4) != 0) throw HeaderError("missing AGAT magic", 0);
    std::uint32_t version = 0, cfg_len = 0, layers = 0, heads = 0;
    std::uint64_t seed = 0, n = 0;
    std::string cfg;
    if (!in.read(version) || version != kRecordVersion) throw HeaderError("unsupported record version", 4);
    if (!in.read(cfg_len) || !in.read_bytes(cfg_len, cfg)) throw HeaderError("truncated config", in.offset());
    if (!in.read(seed) || !in.read(layers) || !in.read(heads) || !in.read(n)) {
        throw HeaderError("truncated record header", in.offset());
    }
    if (in.remaining() != std::uint64_t{layers} * heads * n * n * sizeof(float)) {
        throw FeatureCountError("attention payload size does not match header", in.offset());
    }
    AttentionRecord r;
    r.config = model_config_from_json(nlohmann::json::parse(cfg));
    r.seed = seed;
    r.matrices.assign(layers, std::vector<RowMatrix<double>>(heads, RowMatrix<double>(n, n)));
    for (auto& layer : r.matrices) {
        for (auto& m : layer) {
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                float v = 0.0f;
                in.read(v);
                m.data()[i] = v;
            }
        }
    }
    return r;
}

inline void save_record(const AttentionRecord& r, const std::filesystem::path& path) {
    detail::write_file_atomic(path, encode_record(r));
}

inline AttentionRecord load_record(const std::filesystem::path& path) { return decode_record(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Model

template <typename Scalar>
struct LayerWeights {
    Parameter<Scalar> wq, bq, wk, bk;  // unused (empty) for SC
    Parameter<Scalar> wv, bv, wo, bo;
    Parameter<Scalar> ln1_gamma, ln1_beta;
    Parameter<Scalar> w1, b1, w2, b2;
    Parameter<Scalar> ln2_gamma, ln2_beta;
};

enum class Mode {
    Train,  ///< parameters are differentiable, dropout active
    Eval,   ///< parameters bound as constants, no dropout
};

/// Encoder-only Graph Transformer: input projection, N_L encoder layers
/// differing only in their attention structure, and a linear readout.
template <typename Scalar>
class GraphTransformer {
public:
    GraphTransformer() = default;

    explicit GraphTransformer(ModelConfig config, std::uint64_t init_seed) : config_(config) {
        config_.validate();
        Rng rng(init_seed);
        const auto d = config_.d_model, f = config_.ffn_dim();
        input_w_ = glorot("input.weight", config_.input_dim, d, rng);
        input_b_ = zeros("input.bias", 1, d);
        layers_.resize(config_.n_layers);
        for (std::size_t l = 0; l < config_.n_layers; ++l) {
            auto& w = layers_[l];
            const auto p = "layers." + std::to_string(l) + ".";
            if (is_learned(config_.variant)) {
                w.wq = glorot(p + "attn.q.weight", d, d, rng);
                w.bq = zeros(p + "attn.q.bias", 1, d);
                w.wk = glorot(p + "attn.k.weight", d, d, rng);
                w.bk = zeros(p + "attn.k.bias", 1, d);
            }
            w.wv = glorot(p + "attn.v.weight", d, d, rng);
            w.bv = zeros(p + "attn.v.bias", 1, d);
            w.wo = glorot(p + "attn.out.weight", d, d, rng);
            w.bo = zeros(p + "attn.out.bias", 1, d);
            w.ln1_gamma = ones(p + "norm1.weight", 1, d);
            w.ln1_beta = zeros(p + "norm1.bias", 1, d);
            w.w1 = glorot(p + "ffn.0.weight", d, f, rng);
            w.b1 = zeros(p + "ffn.0.bias", 1, f);
            w.w2 = glorot(p + "ffn.1.weight", f, d, rng);
            w.b2 = zeros(p + "ffn.1.bias", 1, d);
            w.ln2_gamma = ones(p + "norm2.weight", 1, d);
            w.ln2_beta = zeros(p + "norm2.bias", 1, d);
        }
        readout_w_ = glorot("readout.weight", d, config_.n_classes, rng);
        readout_b_ = zeros("readout.bias", 1, config_.n_classes);
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::vector<LayerWeights<Scalar>>& layers() noexcept { return layers_; }

    /// Every parameter, sorted by name.
    std::vector<Parameter<Scalar>*> parameters() {
        std::vector<Parameter<Scalar>*> out{&input_w_, &input_b_, &readout_w_, &readout_b_};
        for (auto& w : layers_) {
            for (auto* p : {&w.wq, &w.bq, &w.wk, &w.bk, &w.wv, &w.bv, &w.wo, &w.bo, &w.ln1_gamma, &w.ln1_beta, &w.w1,
                            &w.b1, &w.w2, &w.b2, &w.ln2_gamma, &w.ln2_beta}) {
                if (!p->name.empty()) out.push_back(p);
            }
        }
        std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
        return out;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    /// Records the forward pass on `tape` and returns n x K logits. When
    /// `record` is non-null it receives every layer's per-head attention.
    Var<Scalar> forward(Tape<Scalar>& tape, const RowMatrix<Scalar>& features, const AttentionStructure& structure,
                        Mode mode = Mode::Eval, AttentionRecord* record = nullptr, Rng* dropout_rng = nullptr) {
        const auto n = static_cast<std::size_t>(features.rows());
        if (static_cast<std::size_t>(features.cols()) != config_.input_dim) {
            throw ShapeError("feature width " + std::to_string(features.cols()) + " differs from model input_dim " +
                             std::to_string(config_.input_dim));
        }
        if (structure.size() != n) throw ShapeError("attention structure size differs from node count");
        if ((structure.kind == AttentionStructure::Kind::Constant) != (config_.variant == AttentionVariant::SC)) {
            throw ShapeError("attention structure kind does not match the model variant");
        }
        const double p_drop = mode == Mode::Train && dropout_rng != nullptr ? config_.dropout : 0.0;
        auto bind = [&](Parameter<Scalar>& p) { return mode == Mode::Train ? tape.parameter(p) : tape.constant(p.value); };

        if (record != nullptr) {
            record->config = config_;
            record->matrices.assign(config_.n_layers, {});
        }
        std::optional<Var<Scalar>> sc_coeffs;
        if (structure.kind == AttentionStructure::Kind::Constant) {
            sc_coeffs = tape.constant(structure.constant.template cast<Scalar>());
        }

        auto h = linear(tape.constant(features), bind(input_w_), bind(input_b_));
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            auto* heads = record != nullptr ? &record->matrices[l] : nullptr;
            h = encoder_layer(h, layers_[l], structure, sc_coeffs, bind, heads, p_drop, dropout_rng);
        }
        return linear(h, bind(readout_w_), bind(readout_b_));
    }

    /// Gradient-free pass returning logits and the full attention record.
    std::pair<RowMatrix<Scalar>, AttentionRecord> infer(const RowMatrix<Scalar>& features,
                                                        const AttentionStructure& structure) {
        Tape<Scalar> tape;
        AttentionRecord record;
        auto logits = forward(tape, features, structure, Mode::Eval, &record);
        return {logits.value(), std::move(record)};
    }

private:
    template <typename Bind>
    Var<Scalar> encoder_layer(Var<Scalar> h, LayerWeights<Scalar>& w,
                              const AttentionStructure& structure, const std::optional<Var<Scalar>>& sc_coeffs,
                              Bind& bind, std::vector<RowMatrix<double>>* heads, double p_drop, Rng* rng) {
        const bool pre = config_.norm == NormPlacement::Pre;
        auto attn_in = pre ? layer_norm(h, bind(w.ln1_gamma), bind(w.ln1_beta)) : h;
        auto attn = self_attention(attn_in, w, structure, sc_coeffs, bind, heads);
        if (p_drop > 0.0) attn = dropout(attn, p_drop, *rng);
        auto h1 = add(h, attn);
        if (!pre) h1 = layer_norm(h1, bind(w.ln1_gamma), bind(w.ln1_beta));

        auto ffn_in = pre ? layer_norm(h1, bind(w.ln2_gamma), bind(w.ln2_beta)) : h1;
        auto hidden = linear(ffn_in, bind(w.w1), bind(w.b1));
        hidden = config_.activation == Activation::ReLU ? relu(hidden) : gelu(hidden);
        if (p_drop > 0.0) hidden = dropout(hidden, p_drop, *rng);
        auto ffn = linear(hidden, bind(w.w2), bind(w.b2));
        if (p_drop > 0.0) ffn = dropout(ffn, p_drop, *rng);
        auto h2 = add(h1, ffn);
        if (!pre) h2 = layer_norm(h2, bind(w.ln2_gamma), bind(w.ln2_beta));
        return h2;
    }

    /// Multi-head attention block. Attention is captured after the softmax
    /// and before it is applied to the values.
    template <typename Bind>
    Var<Scalar> self_attention(const Var<Scalar>& h, LayerWeights<Scalar>& w,
                               const AttentionStructure& structure, const std::optional<Var<Scalar>>& sc_coeffs,
                               Bind& bind, std::vector<RowMatrix<double>>* heads) {
        const auto dh = static_cast<Eigen::Index>(config_.head_dim());
        auto v = linear(h, bind(w.wv), bind(w.bv));
        std::vector<Var<Scalar>> outputs;
        if (sc_coeffs) {
            if (heads != nullptr) heads->push_back(structure.constant);
            outputs.push_back(matmul(*sc_coeffs, v));
        } else {
            auto q = linear(h, bind(w.wq), bind(w.bq));
            auto k = linear(h, bind(w.wk), bind(w.bk));
            const auto inv_sqrt = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
            for (std::size_t head = 0; head < config_.n_heads; ++head) {
                const auto start = static_cast<Eigen::Index>(head) * dh;
                auto qh = config_.n_heads == 1 ? q : slice_cols(q, start, dh);
                auto kh = config_.n_heads == 1 ? k : slice_cols(k, start, dh);
                auto vh = config_.n_heads == 1 ? v : slice_cols(v, start, dh);
                // Graphormer-style bias: b_ik inside the normalizer for every
                // k, added to the already scaled scores.
                auto scores = matmul_nt(qh, kh, inv_sqrt);
                auto attn = masked_biased_softmax(scores, structure.additive);
                if (heads != nullptr) heads->push_back(attn.value().template cast<double>());
                outputs.push_back(matmul(attn, vh));
            }
        }
        auto merged = outputs.size() == 1 ? outputs.front() : concat_cols(std::span<const Var<Scalar>>(outputs));
        return linear(merged, bind(w.wo), bind(w.bo));
    }

    static Parameter<Scalar> glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        RowMatrix<Scalar> m(fan_in, fan_out);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
        return {std::move(name), std::move(m)};
    }
    static Parameter<Scalar> zeros(std::string name, std::size_t r, std::size_t c) {
        return {std::move(name), RowMatrix<Scalar>::Zero(r, c)};
    }
    static Parameter<Scalar> ones(std::string name, std::size_t r, std::size_t c) {
        return {std::move(name), RowMatrix<Scalar>::Ones(r, c)};
    }

    ModelConfig config_;
    Parameter<Scalar> input_w_, input_b_;
    std::vector<LayerWeights<Scalar>> layers_;
    Parameter<Scalar> readout_w_, readout_b_;
};

// ---------------------------------------------------------------------------
// Checkpoints: "AGCK", u32 version, u32 config-JSON length + bytes, u32
// parameter count, then per parameter (sorted by name): u32 name length +
// name, u64 rows, u64 cols, rows * cols f64 values.

inline constexpr char kCheckpointMagic[4] = {'A', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
std::string encode_checkpoint(GraphTransformer<Scalar>& model) {
    std::string buf(kCheckpointMagic, 4);
    detail::put<std::uint32_t>(buf, kCheckpointVersion);
    const auto cfg = to_json(model.config()).dump();
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.size()));
    buf += cfg;
    const auto params = model.parameters();
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p->name.size()));
        buf += p->name;
        detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(p->value.rows()));
        detail::put<std::uint64_t>(buf, static_cast<std::uint64_t>(p->value.cols()));
        for (Eigen::Index i = 0; i < p->value.size(); ++i) detail::put<double>(buf, static_cast<double>(p->value.data()[i]));
    }
    return buf;
}

template <typename Scalar>
GraphTransformer<Scalar> decode_checkpoint(std::string bytes) {
    detail::ByteReader in(std::move(bytes));
    char magic[4];
    if (!in.read(magic) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw HeaderError("missing AGCK magic", 0);
    std::uint32_t version = 0, cfg_len = 0, count = 0;
    std::string cfg;
    if (!in.read(version) || version != kCheckpointVersion) throw HeaderError("unsupported checkpoint version", 4);
    if (!in.read(cfg_len) || !in.read_bytes(cfg_len, cfg)) throw HeaderError("truncated config", in.offset());
    GraphTransformer<Scalar> model(model_config_from_json(nlohmann::json::parse(cfg)), 0);
    auto params = model.parameters();
    if (!in.read(count) || count != params.size()) throw HeaderError("parameter count mismatch", in.offset());
    for (auto* p : params) {
        std::uint32_t len = 0;
        std::string name;
        std::uint64_t rows = 0, cols = 0;
        const auto at = in.offset();
        if (!in.read(len) || !in.read_bytes(len, name) || !in.read(rows) || !in.read(cols)) {
            throw HeaderError("truncated parameter header", at);
        }
        if (name != p->name || rows != static_cast<std::uint64_t>(p->value.rows()) ||
            cols != static_cast<std::uint64_t>(p->value.cols())) {
            throw HeaderError("unexpected parameter " + name, at);
        }
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double v;
            if (!in.read(v)) throw HeaderError("truncated parameter values", in.offset());
            p->value.data()[i] = static_cast<Scalar>(v);
        }
    }
    return model;
}

}  // namespace attn_graphs
