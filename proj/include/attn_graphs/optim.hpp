#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "attn_graphs/errors.hpp"
#include "attn_graphs/tensor.hpp"

namespace attn_graphs {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// L2 penalty folded into the gradient (classic Adam, not AdamW).
    double weight_decay = 0.0;
};

template <typename Scalar>
struct AdamState {
    std::vector<RowMatrix<Scalar>> m;
    std::vector<RowMatrix<Scalar>> v;
    std::uint64_t step = 0;

    static AdamState for_params(std::span<Parameter<Scalar>* const> params) {
        AdamState s;
        for (auto* p : params) {
            s.m.push_back(RowMatrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
            s.v.push_back(RowMatrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
        }
        return s;
    }
};

/// One bias-corrected Adam update. Throws NumericError, naming the parameter,
/// before touching anything if a gradient is non-finite.
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>* const> params, AdamState<Scalar>& state, const AdamHyper& hyper) {
    if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = *params[i];
        if (state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols()) {
            throw ShapeError("adam_step: state shape differs for parameter " + p.name);
        }
        if (!p.grad.allFinite()) throw NumericError("non-finite gradient in parameter " + p.name);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    const auto b1 = static_cast<Scalar>(hyper.beta1), b2 = static_cast<Scalar>(hyper.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        RowMatrix<Scalar> g = p.grad;
        if (hyper.weight_decay != 0.0) g += static_cast<Scalar>(hyper.weight_decay) * p.value;
        state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
        const auto lr = static_cast<Scalar>(hyper.learning_rate / c1);
        const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
        const auto eps = static_cast<Scalar>(hyper.eps);
        p.value.array() -= lr * state.m[i].array() / ((state.v[i].array() * inv_c2).sqrt() + eps);
    }
}

}  // namespace attn_graphs
