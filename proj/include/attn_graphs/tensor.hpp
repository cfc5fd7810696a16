#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "attn_graphs/errors.hpp"
#include "attn_graphs/graph.hpp"
#include "attn_graphs/random.hpp"

namespace attn_graphs {

/// Marker for an entry that softmax must never attend to.
struct NegInf {};
inline constexpr NegInf kNegInf{};

/// Additive term for attention scores: each entry is a finite bias or the
/// NEG_INF mask marker. The marker only becomes a numeric stand-in inside the
/// softmax kernel.
class AdditiveMatrix {
public:
    AdditiveMatrix() = default;
    /// All-zero, unmasked. Storage is allocated on the first set().
    AdditiveMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

    static AdditiveMatrix zeros(std::size_t n) { return {n, n}; }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool has_bias() const noexcept { return bias_.size() != 0; }
    bool has_mask() const noexcept { return !masked_.empty(); }

    void set(std::size_t i, std::size_t j, double b) {
        if (b != 0.0 && !has_bias()) bias_ = RowMatrix<double>::Zero(rows_, cols_);
        if (has_bias()) bias_(i, j) = b;
        if (has_mask()) masked_[i * cols_ + j] = 0;
    }
    void set(std::size_t i, std::size_t j, NegInf) {
        if (!has_mask()) masked_.assign(rows_ * cols_, 0);
        masked_[i * cols_ + j] = 1;
        if (has_bias()) bias_(i, j) = 0.0;
    }
    bool is_masked(std::size_t i, std::size_t j) const { return has_mask() && masked_[i * cols_ + j] != 0; }
    double bias(std::size_t i, std::size_t j) const { return has_bias() ? bias_(i, j) : 0.0; }

    friend bool operator==(const AdditiveMatrix& a, const AdditiveMatrix& b) {
        if (a.rows_ != b.rows_ || a.cols_ != b.cols_) return false;
        for (std::size_t i = 0; i < a.rows_; ++i) {
            for (std::size_t j = 0; j < a.cols_; ++j) {
                if (a.is_masked(i, j) != b.is_masked(i, j) || a.bias(i, j) != b.bias(i, j)) return false;
            }
        }
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    RowMatrix<double> bias_;
    std::vector<std::uint8_t> masked_;
};

/// Named trainable matrix. Gradients accumulate across backward passes until
/// zero_grad().
template <typename Scalar>
struct Parameter {
    std::string name;
    RowMatrix<Scalar> value;
    RowMatrix<Scalar> grad;

    Parameter() = default;
    Parameter(std::string n, RowMatrix<Scalar> v)
        : name(std::move(n)), value(std::move(v)), grad(RowMatrix<Scalar>::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a tape.
template <typename Scalar>
class Var {
public:
    Var() = default;
    Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<Scalar>& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const RowMatrix<Scalar>& value() const { return tape_->value(id_); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }

private:
    Tape<Scalar>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
/// them backwards is a valid topological order and the result is
/// deterministic for a fixed op sequence.
template <typename Scalar>
class Tape {
public:
    using Matrix = RowMatrix<Scalar>;
    using Backward = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Scalar> constant(Matrix value) { return push(std::move(value), false, {}); }

    /// Differentiable input whose gradient is read back with grad().
    Var<Scalar> leaf(Matrix value) { return push(std::move(value), true, {}); }

    Var<Scalar> parameter(Parameter<Scalar>& p) {
        auto v = push(p.value, true, {});
        nodes_[v.id()].param = &p;
        return v;
    }

    /// Records an op result. `backward` is dropped when no input needs a
    /// gradient.
    Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || requires_grad(in);
        return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }
    Var<Scalar> record(Matrix value, std::span<const Var<Scalar>> inputs, Backward backward) {
        bool needs = false;
        for (const auto& in : inputs) needs = needs || requires_grad(in);
        return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(const Var<Scalar>& v) const { return nodes_[v.id()].requires_grad; }

    /// Gradient of the last backward() target with respect to v (zeros when
    /// v did not influence it).
    Matrix grad(const Var<Scalar>& v) const {
        const auto& node = nodes_[v.id()];
        if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
        return node.grad;
    }

    /// Adds `g` into the gradient slot of node `id` (no-op for constants).
    template <typename Expr>
    void accumulate(std::size_t id, const Expr& g) {
        auto& node = nodes_[id];
        if (!node.requires_grad) return;
        if (node.grad.size() == 0) {
            node.grad = g;
        } else {
            node.grad += g;
        }
    }

    const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }

    /// Back-propagates from a 1x1 loss and adds the result into the grad of
    /// every Parameter recorded on this tape.
    void backward(const Var<Scalar>& loss) {
        if (loss.rows() != 1 || loss.cols() != 1) {
            throw ShapeError("backward() needs a scalar loss, got " + std::to_string(loss.rows()) + "x" +
                             std::to_string(loss.cols()));
        }
        for (auto& node : nodes_) node.grad.resize(0, 0);
        if (!nodes_[loss.id()].requires_grad) return;
        nodes_[loss.id()].grad = Matrix::Ones(1, 1);
        for (std::size_t id = loss.id() + 1; id-- > 0;) {
            auto& node = nodes_[id];
            if (node.grad.size() == 0) continue;
            if (node.backward) {
                node.backward(*this, id);
                node.grad.resize(0, 0);  // consumed; parameters and leaves keep theirs
            } else if (node.param != nullptr) {
                node.param->grad += node.grad;
            }
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
        Parameter<Scalar>* param = nullptr;
    };

    Var<Scalar> push(Matrix value, bool requires_grad, Backward backward) {
        nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, std::move(backward), nullptr});
        return {this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops

namespace detail {

inline void require_shape(bool ok, const std::string& op, Eigen::Index ar, Eigen::Index ac, Eigen::Index br,
                          Eigen::Index bc) {
    if (!ok) {
        throw ShapeError(op + ": incompatible shapes " + std::to_string(ar) + "x" + std::to_string(ac) + " and " +
                         std::to_string(br) + "x" + std::to_string(bc));
    }
}

}  // namespace detail

/// C = A B.
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
    detail::require_shape(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
    auto& t = a.tape();
    RowMatrix<Scalar> c = a.value() * b.value();
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(c), {a, b}, [ia, ib](Tape<Scalar>& tp, std::size_t self) {
        const auto& dc = tp.upstream(self);
        if (tp.requires_grad(Var<Scalar>(&tp, ia))) tp.accumulate(ia, dc * tp.value(ib).transpose());
        if (tp.requires_grad(Var<Scalar>(&tp, ib))) tp.accumulate(ib, tp.value(ia).transpose() * dc);
    });
}

/// C = scale * A B^T (attention scores).
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b, Scalar scale = Scalar(1)) {
    detail::require_shape(a.cols() == b.cols(), "matmul_nt", a.rows(), a.cols(), b.rows(), b.cols());
    auto& t = a.tape();
    RowMatrix<Scalar> c = scale * (a.value() * b.value().transpose());
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(c), {a, b}, [ia, ib, scale](Tape<Scalar>& tp, std::size_t self) {
        const auto& dc = tp.upstream(self);
        if (tp.requires_grad(Var<Scalar>(&tp, ia))) tp.accumulate(ia, scale * (dc * tp.value(ib)));
        if (tp.requires_grad(Var<Scalar>(&tp, ib))) tp.accumulate(ib, scale * (dc.transpose() * tp.value(ia)));
    });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
    detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.rows(), a.cols(), b.rows(),
                          b.cols());
    auto& t = a.tape();
    RowMatrix<Scalar> c = a.value() + b.value();
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(c), {a, b}, [ia, ib](Tape<Scalar>& tp, std::size_t self) {
        tp.accumulate(ia, tp.upstream(self));
        tp.accumulate(ib, tp.upstream(self));
    });
}

/// Adds a 1 x c row vector to every row of `a`.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row) {
    detail::require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.rows(), a.cols(), row.rows(),
                          row.cols());
    auto& t = a.tape();
    RowMatrix<Scalar> c = a.value().rowwise() + row.value().row(0);
    const auto ia = a.id(), ir = row.id();
    return t.record(std::move(c), {a, row}, [ia, ir](Tape<Scalar>& tp, std::size_t self) {
        const auto& dc = tp.upstream(self);
        tp.accumulate(ia, dc);
        tp.accumulate(ir, dc.colwise().sum());
    });
}

/// x W + b.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
    return add_row(matmul(x, weight), bias);
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
    auto& t = a.tape();
    RowMatrix<Scalar> c = s * a.value();
    const auto ia = a.id();
    return t.record(std::move(c), {a}, [ia, s](Tape<Scalar>& tp, std::size_t self) {
        tp.accumulate(ia, s * tp.upstream(self));
    });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
    auto& t = a.tape();
    RowMatrix<Scalar> c = a.value().cwiseMax(Scalar(0));
    const auto ia = a.id();
    return t.record(std::move(c), {a}, [ia](Tape<Scalar>& tp, std::size_t self) {
        const auto& x = tp.value(ia);
        tp.accumulate(ia, tp.upstream(self).cwiseProduct((x.array() > Scalar(0)).template cast<Scalar>().matrix()));
    });
}

/// Exact (erf-based) GELU.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
    auto& t = a.tape();
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    RowMatrix<Scalar> c = a.value().unaryExpr([](Scalar x) {
        return static_cast<Scalar>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
    });
    const auto ia = a.id();
    return t.record(std::move(c), {a}, [ia](Tape<Scalar>& tp, std::size_t self) {
        constexpr double kInvSqrt2Pi = 0.39894228040143267794;
        RowMatrix<Scalar> d = tp.value(ia).unaryExpr([](Scalar x) {
            const double xd = x;
            return static_cast<Scalar>(0.5 * (1.0 + std::erf(xd * kInvSqrt2)) + xd * kInvSqrt2Pi * std::exp(-0.5 * xd * xd));
        });
        tp.accumulate(ia, tp.upstream(self).cwiseProduct(d));
    });
}

/// Inverted dropout; identity when p == 0.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw DomainError("dropout probability must be below 1");
    auto& t = a.tape();
    RowMatrix<Scalar> mask(a.rows(), a.cols());
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform01() < p ? Scalar(0) : keep;
    RowMatrix<Scalar> c = a.value().cwiseProduct(mask);
    const auto ia = a.id();
    return t.record(std::move(c), {a}, [ia, mask = std::move(mask)](Tape<Scalar>& tp, std::size_t self) {
        tp.accumulate(ia, tp.upstream(self).cwiseProduct(mask));
    });
}

namespace detail {

/// Row-wise softmax of scores + additive with max subtraction. Masked
/// entries get exactly 0. Accumulation is in double.
template <typename Scalar>
RowMatrix<Scalar> softmax_rows(const RowMatrix<Scalar>& scores, const AdditiveMatrix& additive) {
    const auto rows = scores.rows(), cols = scores.cols();
    RowMatrix<Scalar> out(rows, cols);
    const bool biased = additive.has_bias();
    const bool masked = additive.has_mask();
    std::vector<double> z(static_cast<std::size_t>(cols));
    for (Eigen::Index i = 0; i < rows; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        bool open = false;
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (masked && additive.is_masked(i, j)) {
                z[j] = -1e30;
                continue;
            }
            open = true;
            z[j] = static_cast<double>(scores(i, j)) + (biased ? additive.bias(i, j) : 0.0);
            // NaN must win so it reaches the loss instead of hiding here.
            m = std::isnan(z[j]) || std::isnan(m) ? std::numeric_limits<double>::quiet_NaN() : std::max(m, z[j]);
        }
        if (!open) throw MaskedRowError(static_cast<std::size_t>(i));
        double sum = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            z[j] = (masked && additive.is_masked(i, j)) ? 0.0 : std::exp(z[j] - m);
            sum += z[j];
        }
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = static_cast<Scalar>(z[j] / sum);
    }
    return out;
}

}  // namespace detail

/// Row-wise softmax of (scores + additive). Rows with every entry masked
/// throw MaskedRowError.
template <typename Scalar>
Var<Scalar> masked_biased_softmax(const Var<Scalar>& scores, const AdditiveMatrix& additive) {
    detail::require_shape(static_cast<std::size_t>(scores.rows()) == additive.rows() &&
                              static_cast<std::size_t>(scores.cols()) == additive.cols(),
                          "masked_biased_softmax", scores.rows(), scores.cols(),
                          static_cast<Eigen::Index>(additive.rows()), static_cast<Eigen::Index>(additive.cols()));
    auto& t = scores.tape();
    auto y = detail::softmax_rows(scores.value(), additive);
    const auto is = scores.id();
    return t.record(std::move(y), {scores}, [is](Tape<Scalar>& tp, std::size_t self) {
        const auto& y = tp.value(self);
        const auto& dy = tp.upstream(self);
        // dx_ij = y_ij (dy_ij - sum_k dy_ik y_ik)
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = dy.cwiseProduct(y).rowwise().sum();
        RowMatrix<Scalar> dx = y.cwiseProduct(dy.colwise() - dots);
        tp.accumulate(is, dx);
    });
}

/// Per-row normalization to zero mean and unit variance, then gamma * x + beta
/// with 1 x c gamma and beta.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta, double eps = 1e-5) {
    detail::require_shape(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 && beta.cols() == x.cols(),
                          "layer_norm", x.rows(), x.cols(), gamma.rows(), gamma.cols());
    auto& t = x.tape();
    const auto rows = x.rows(), cols = x.cols();
    RowMatrix<Scalar> xhat(rows, cols);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(rows);
    const auto& xv = x.value();
    for (Eigen::Index i = 0; i < rows; ++i) {
        double mean = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) mean += xv(i, j);
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = static_cast<Scalar>(is);
        for (Eigen::Index j = 0; j < cols; ++j) xhat(i, j) = static_cast<Scalar>((xv(i, j) - mean) * is);
    }
    RowMatrix<Scalar> y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
    return t.record(std::move(y), {x, gamma, beta},
                    [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& tp, std::size_t self) {
                        const auto& dy = tp.upstream(self);
                        tp.accumulate(ig, dy.cwiseProduct(xhat).colwise().sum());
                        tp.accumulate(ib, dy.colwise().sum());
                        if (!tp.requires_grad(Var<Scalar>(&tp, ix))) return;
                        const auto& g = tp.value(ig);
                        RowMatrix<Scalar> dxhat = dy.array().rowwise() * g.row(0).array();
                        const Scalar inv_c = Scalar(1) / static_cast<Scalar>(dxhat.cols());
                        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_d = dxhat.rowwise().sum() * inv_c;
                        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_dx = dxhat.cwiseProduct(xhat).rowwise().sum() * inv_c;
                        RowMatrix<Scalar> dx = dxhat;
                        dx.colwise() -= mean_d;
                        dx.array() -= xhat.array().colwise() * mean_dx.array();
                        dx.array().colwise() *= inv_std.array();
                        tp.accumulate(ix, dx);
                    });
}

/// Column-wise concatenation.
template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    auto& t = parts.front().tape();
    const auto rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        detail::require_shape(p.rows() == rows, "concat_cols", rows, cols, p.rows(), p.cols());
        cols += p.cols();
    }
    RowMatrix<Scalar> c(rows, cols);
    std::vector<std::pair<std::size_t, Eigen::Index>> layout;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        c.middleCols(at, p.cols()) = p.value();
        layout.emplace_back(p.id(), at);
        at += p.cols();
    }
    return t.record(std::move(c), parts, [layout = std::move(layout)](Tape<Scalar>& tp, std::size_t self) {
        const auto& dc = tp.upstream(self);
        for (const auto& [id, start] : layout) tp.accumulate(id, dc.middleCols(start, tp.value(id).cols()));
    });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index width) {
    if (start < 0 || width < 0 || start + width > a.cols()) {
        throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         ") outside width " + std::to_string(a.cols()));
    }
    auto& t = a.tape();
    RowMatrix<Scalar> c = a.value().middleCols(start, width);
    const auto ia = a.id();
    return t.record(std::move(c), {a}, [ia, start, width](Tape<Scalar>& tp, std::size_t self) {
        RowMatrix<Scalar> g = RowMatrix<Scalar>::Zero(tp.value(ia).rows(), tp.value(ia).cols());
        g.middleCols(start, width) = tp.upstream(self);
        tp.accumulate(ia, g);
    });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
    auto& t = a.tape();
    RowMatrix<Scalar> c(1, 1);
    c(0, 0) = a.value().sum();
    const auto ia = a.id();
    return t.record(std::move(c), {a}, [ia](Tape<Scalar>& tp, std::size_t self) {
        const Scalar g = tp.upstream(self)(0, 0);
        tp.accumulate(ia, RowMatrix<Scalar>::Constant(tp.value(ia).rows(), tp.value(ia).cols(), g));
    });
}

/// Mean negative log-softmax of the target class over the rows in `ids`.
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, std::span<const std::uint32_t> targets,
                          std::span<const std::uint32_t> ids) {
    if (ids.empty()) throw DomainError("cross_entropy: empty id mask");
    if (targets.size() != static_cast<std::size_t>(logits.rows())) {
        throw ShapeError("cross_entropy: target count differs from logit rows");
    }
    const auto k = logits.cols();
    const auto& z = logits.value();
    RowMatrix<Scalar> probs(static_cast<Eigen::Index>(ids.size()), k);
    double loss = 0.0;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(ids[r]);
        const auto y = targets[ids[r]];
        if (y >= static_cast<std::uint32_t>(k)) throw DomainError("cross_entropy: target outside [0, K)");
        const double m = z.row(i).maxCoeff();
        double s = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) s += std::exp(static_cast<double>(z(i, c)) - m);
        const double lse = m + std::log(s);
        loss += lse - static_cast<double>(z(i, y));
        for (Eigen::Index c = 0; c < k; ++c) probs(static_cast<Eigen::Index>(r), c) = static_cast<Scalar>(std::exp(z(i, c) - lse));
    }
    RowMatrix<Scalar> out(1, 1);
    out(0, 0) = static_cast<Scalar>(loss / static_cast<double>(ids.size()));
    std::vector<std::uint32_t> rows(ids.begin(), ids.end());
    std::vector<std::uint32_t> ys;
    ys.reserve(ids.size());
    for (auto i : ids) ys.push_back(targets[i]);
    const auto il = logits.id();
    auto& t = logits.tape();
    return t.record(std::move(out), {logits},
                    [il, rows = std::move(rows), ys = std::move(ys), probs = std::move(probs)](Tape<Scalar>& tp,
                                                                                                std::size_t self) {
                        const Scalar g = tp.upstream(self)(0, 0) / static_cast<Scalar>(rows.size());
                        const auto& z = tp.value(il);
                        RowMatrix<Scalar> dz = RowMatrix<Scalar>::Zero(z.rows(), z.cols());
                        for (std::size_t r = 0; r < rows.size(); ++r) {
                            dz.row(rows[r]) = g * probs.row(static_cast<Eigen::Index>(r));
                            dz(rows[r], ys[r]) -= g;
                        }
                        tp.accumulate(il, dz);
                    });
}

}  // namespace attn_graphs
