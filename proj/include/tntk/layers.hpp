#pragma once

// Parameter registry, deterministic initialization and the conv+BN+ReLU
// building block shared by the backbone, fusion neck and recognizer.

#include <string>
#include <utility>
#include <vector>

#include "tntk/nn_ops.hpp"
#include "tntk/rng.hpp"
#include "tntk/tensor.hpp"

namespace tntk {

template <class T>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<T>>> params;   // trainable
    std::vector<std::pair<std::string, Tensor<T>>> buffers;  // running stats

    Tensor<T> add_param(const std::string& name, Tensor<T> t) {
        t.set_requires_grad(true);
        params.emplace_back(name, t);
        return t;
    }

    Tensor<T> add_buffer(const std::string& name, Tensor<T> t) {
        buffers.emplace_back(name, t);
        return t;
    }

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return &t;
        for (const auto& [n, t] : buffers)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace init {

// Zero-mean uniform scaled by fan-in (He-style); biases start at zero.
template <class T>
Tensor<T> he_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(rng.uniform(-limit, limit));
    return t;
}

template <class T>
Tensor<T> conv_kernel(Rng& rng, int kh, int kw, int ci, int co) {
    return he_uniform<T>(rng, {kh, kw, ci, co},
                         static_cast<std::size_t>(kh) * kw * ci);
}

template <class T>
GruParams<T> gru(Rng& rng, ParamSet<T>& ps, const std::string& prefix, int din,
                 int dh) {
    GruParams<T> p;
    p.wx = ps.add_param(prefix + ".wx",
                        he_uniform<T>(rng, {din, 3 * dh}, static_cast<std::size_t>(din)));
    p.wh = ps.add_param(prefix + ".wh",
                        he_uniform<T>(rng, {dh, 3 * dh}, static_cast<std::size_t>(dh)));
    p.bx = ps.add_param(prefix + ".bx", Tensor<T>::zeros({3 * dh}));
    p.bh = ps.add_param(prefix + ".bh", Tensor<T>::zeros({3 * dh}));
    return p;
}

}  // namespace init

// conv -> batch norm -> ReLU. The convolution carries no bias; BN's beta
// plays that role.
template <class T>
struct ConvBn {
    Tensor<T> w;
    Tensor<T> gamma, beta;
    BnStats<T> stats;
    int stride = 1;

    ConvBn() = default;

    ConvBn(Rng& rng, ParamSet<T>& ps, const std::string& prefix, int kh, int kw,
           int ci, int co, int stride_in)
        : stride(stride_in) {
        w = ps.add_param(prefix + ".w", init::conv_kernel<T>(rng, kh, kw, ci, co));
        gamma = ps.add_param(prefix + ".gamma", Tensor<T>::full({co}, T(1)));
        beta = ps.add_param(prefix + ".beta", Tensor<T>::zeros({co}));
        stats.mean = ps.add_buffer(prefix + ".running_mean", Tensor<T>::zeros({co}));
        stats.var = ps.add_buffer(prefix + ".running_var", Tensor<T>::full({co}, T(1)));
    }

    // Non-const: training mode folds batch statistics into the running stats.
    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, bool training) {
        auto y = conv2d(tape, x, w, stride, Padding::same);
        y = batch_norm(tape, y, gamma, beta, stats, training);
        return relu(tape, y);
    }
};

}  // namespace tntk
