#pragma once

// Core differentiable primitives on the tape: elementwise arithmetic,
// matmul, reductions, activations, softmax/cross-entropy, smooth-L1 and
// the slicing/stacking ops the pipeline needs. Convolution, normalization,
// recurrent and sampling ops live in nn_ops.hpp.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "tntk/tensor.hpp"

namespace tntk {

namespace detail {

template <class T, class... Ts>
inline bool track(const Tape<T>& tape, const Ts&... ts) {
    return tape.recording() && (ts.requires_grad() || ...);
}

template <class T>
inline T* ensure_grad(TensorNode<T>& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad.data();
}

template <class T>
inline void check_same_shape(const char* op, const Tensor<T>& a,
                             const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
}

// dst[c*rows + r] = src[r*cols + c]
template <class T>
inline void transpose2d(std::size_t rows, std::size_t cols, const T* src, T* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <class T>
inline T sigmoid_val(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

// ------------------------------------------------------------ arithmetic ---

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("add", a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    detail::kt<T>().add(a.size(), a.data(), b.data(), out.data());
    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        auto an = a.node(), bn = b.node();
        tape.record(out, [an, bn](const std::vector<T>& d) {
            if (an->requires_grad)
                detail::kt<T>().axpy(d.size(), T(1), d.data(), detail::ensure_grad(*an));
            if (bn->requires_grad)
                detail::kt<T>().axpy(d.size(), T(1), d.data(), detail::ensure_grad(*bn));
        });
    }
    return out;
}

template <class T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("sub", a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    detail::kt<T>().sub(a.size(), a.data(), b.data(), out.data());
    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        auto an = a.node(), bn = b.node();
        tape.record(out, [an, bn](const std::vector<T>& d) {
            if (an->requires_grad)
                detail::kt<T>().axpy(d.size(), T(1), d.data(), detail::ensure_grad(*an));
            if (bn->requires_grad)
                detail::kt<T>().axpy(d.size(), T(-1), d.data(), detail::ensure_grad(*bn));
        });
    }
    return out;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("mul", a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    detail::kt<T>().mul(a.size(), a.data(), b.data(), out.data());
    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        auto an = a.node(), bn = b.node();
        tape.record(out, [an, bn](const std::vector<T>& d) {
            if (an->requires_grad)
                detail::kt<T>().mul_acc(d.size(), d.data(), bn->value.data(),
                                        detail::ensure_grad(*an));
            if (bn->requires_grad)
                detail::kt<T>().mul_acc(d.size(), d.data(), an->value.data(),
                                        detail::ensure_grad(*bn));
        });
    }
    return out;
}

// out = s * x
template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T s) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    detail::kt<T>().axpy(x.size(), s, x.data(), out.data());
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn, s](const std::vector<T>& d) {
            if (xn->requires_grad)
                detail::kt<T>().axpy(d.size(), s, d.data(), detail::ensure_grad(*xn));
        });
    }
    return out;
}

// Sum of same-shaped tensors in list order.
template <class T>
Tensor<T> add_n(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw UsageError("add_n: empty input list");
    Tensor<T> out = Tensor<T>::zeros(parts[0].shape());
    bool any_grad = false;
    for (const auto& p : parts) {
        detail::check_same_shape("add_n", parts[0], p);
        detail::kt<T>().axpy(p.size(), T(1), p.data(), out.data());
        any_grad = any_grad || p.requires_grad();
    }
    if (tape.recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode<T>>> nodes;
        nodes.reserve(parts.size());
        for (const auto& p : parts) nodes.push_back(p.node());
        tape.record(out, [nodes](const std::vector<T>& d) {
            for (const auto& n : nodes)
                if (n->requires_grad)
                    detail::kt<T>().axpy(d.size(), T(1), d.data(),
                                         detail::ensure_grad(*n));
        });
    }
    return out;
}

// --------------------------------------------------------------- reduce ----

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    T acc = T(0);
    const T* v = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += v[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            const T dv = d[0];
            for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += dv;
        });
    }
    return out;
}

template <class T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
    const T inv = T(1) / static_cast<T>(x.size());
    return scale(tape, sum(tape, x), inv);
}

// --------------------------------------------------------------- matmul ----

// a [M,K] @ b [K,N] -> [M,N]
template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " @ " + shape_str(b.shape()));
    const std::size_t m = static_cast<std::size_t>(a.dim(0));
    const std::size_t k = static_cast<std::size_t>(a.dim(1));
    const std::size_t n = static_cast<std::size_t>(b.dim(1));
    Tensor<T> out = Tensor<T>::zeros({a.dim(0), b.dim(1)});
    detail::kt<T>().matmul(m, k, n, a.data(), b.data(), out.data());
    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        auto an = a.node(), bn = b.node();
        tape.record(out, [an, bn, m, k, n](const std::vector<T>& d) {
            if (an->requires_grad) {
                std::vector<T> bt(bn->value.size());
                detail::transpose2d(k, n, bn->value.data(), bt.data());
                detail::kt<T>().matmul(m, n, k, d.data(), bt.data(),
                                       detail::ensure_grad(*an));
            }
            if (bn->requires_grad) {
                std::vector<T> at(an->value.size());
                detail::transpose2d(m, k, an->value.data(), at.data());
                detail::kt<T>().matmul(k, m, n, at.data(), d.data(),
                                       detail::ensure_grad(*bn));
            }
        });
    }
    return out;
}

// x [..., C] + b [C], broadcast over leading axes.
template <class T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& b) {
    if (b.rank() != 1 || x.dim(x.rank() - 1) != b.dim(0))
        throw ShapeError("add_bias: bias " + shape_str(b.shape()) +
                         " does not match " + shape_str(x.shape()));
    const std::size_t c = static_cast<std::size_t>(b.dim(0));
    const std::size_t rows = x.size() / c;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        detail::kt<T>().add(c, x.data() + r * c, b.data(), out.data() + r * c);
    if (detail::track(tape, x, b)) {
        out.set_requires_grad(true);
        auto xn = x.node(), bn = b.node();
        tape.record(out, [xn, bn, rows, c](const std::vector<T>& d) {
            if (xn->requires_grad)
                detail::kt<T>().axpy(d.size(), T(1), d.data(), detail::ensure_grad(*xn));
            if (bn->requires_grad) {
                T* g = detail::ensure_grad(*bn);
                for (std::size_t r = 0; r < rows; ++r)
                    detail::kt<T>().axpy(c, T(1), d.data() + r * c, g);
            }
        });
    }
    return out;
}

// x [..., C] * w [..., 1]: per-position scalar weight broadcast over the
// channel axis. Leading dims of w must equal x's.
template <class T>
Tensor<T> mul_bcast_last(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w) {
    if (w.rank() != x.rank() || w.dim(w.rank() - 1) != 1)
        throw ShapeError("mul_bcast_last: weight must be [...,1]");
    for (int i = 0; i + 1 < x.rank(); ++i)
        if (x.dim(i) != w.dim(i))
            throw ShapeError("mul_bcast_last: leading dims differ: " +
                             shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    const std::size_t c = static_cast<std::size_t>(x.dim(x.rank() - 1));
    const std::size_t rows = x.size() / c;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        detail::kt<T>().axpy(c, w.data()[r], x.data() + r * c, out.data() + r * c);
    if (detail::track(tape, x, w)) {
        out.set_requires_grad(true);
        auto xn = x.node(), wn = w.node();
        tape.record(out, [xn, wn, rows, c](const std::vector<T>& d) {
            if (xn->requires_grad) {
                T* g = detail::ensure_grad(*xn);
                for (std::size_t r = 0; r < rows; ++r)
                    detail::kt<T>().axpy(c, wn->value[r], d.data() + r * c, g + r * c);
            }
            if (wn->requires_grad) {
                T* g = detail::ensure_grad(*wn);
                for (std::size_t r = 0; r < rows; ++r) {
                    T acc = T(0);
                    const T* dr = d.data() + r * c;
                    const T* xr = xn->value.data() + r * c;
                    for (std::size_t j = 0; j < c; ++j) acc += dr[j] * xr[j];
                    g[r] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------- activations ----

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    detail::kt<T>().relu(x.size(), x.data(), out.data());
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn](const std::vector<T>& d) {
            if (xn->requires_grad)
                detail::kt<T>().relu_bwd(d.size(), xn->value.data(), d.data(),
                                         detail::ensure_grad(*xn));
        });
    }
    return out;
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = detail::sigmoid_val(x.data()[i]);
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node(), on = out.node();
        tape.record(out, [xn, on](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            const T* y = on->value.data();
            for (std::size_t i = 0; i < d.size(); ++i)
                g[i] += d[i] * y[i] * (T(1) - y[i]);
        });
    }
    return out;
}

template <class T>
Tensor<T> tanh_act(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x.data()[i]);
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node(), on = out.node();
        tape.record(out, [xn, on](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            const T* y = on->value.data();
            for (std::size_t i = 0; i < d.size(); ++i)
                g[i] += d[i] * (T(1) - y[i] * y[i]);
        });
    }
    return out;
}

// ------------------------------------------------- softmax/cross-entropy ---

namespace detail {

template <class T>
inline void axis_extents(const Tensor<T>& x, int axis, std::size_t& outer,
                         std::size_t& extent, std::size_t& inner) {
    if (axis < 0 || axis >= x.rank())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
    extent = static_cast<std::size_t>(x.dim(axis));
    for (int i = axis + 1; i < x.rank(); ++i)
        inner *= static_cast<std::size_t>(x.dim(i));
}

}  // namespace detail

// Normalizes along `axis`; max-shifted for stability. Output sums to 1 along
// the axis for any finite input.
template <class T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, int axis) {
    std::size_t outer, extent, inner;
    detail::axis_extents(x, axis, outer, extent, inner);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* v = x.data();
    T* y = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * extent * inner + i;
            T mx = v[base];
            for (std::size_t a = 1; a < extent; ++a)
                mx = std::max(mx, v[base + a * inner]);
            T denom = T(0);
            for (std::size_t a = 0; a < extent; ++a) {
                const T e = std::exp(v[base + a * inner] - mx);
                y[base + a * inner] = e;
                denom += e;
            }
            const T invd = T(1) / denom;
            for (std::size_t a = 0; a < extent; ++a) y[base + a * inner] *= invd;
        }
    }
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node(), on = out.node();
        tape.record(out, [xn, on, outer, extent, inner](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            const T* y = on->value.data();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * extent * inner + i;
                    T dot = T(0);
                    for (std::size_t a = 0; a < extent; ++a) {
                        const std::size_t k = base + a * inner;
                        dot += d[k] * y[k];
                    }
                    for (std::size_t a = 0; a < extent; ++a) {
                        const std::size_t k = base + a * inner;
                        g[k] += y[k] * (d[k] - dot);
                    }
                }
            }
        });
    }
    return out;
}

// -sum_axis q*log(p), the axis reduced away. Target probabilities must lie
// in [0,1]. p is clamped away from zero before the log; clamped entries get
// zero gradient.
template <class T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& p, const Tensor<T>& q,
                        int axis) {
    detail::check_same_shape("cross_entropy", p, q);
    for (std::size_t i = 0; i < q.size(); ++i)
        if (!(q.data()[i] >= T(0) && q.data()[i] <= T(1)))
            throw ValueError("cross_entropy: target probability " +
                             std::to_string(static_cast<double>(q.data()[i])) +
                             " outside [0,1]");
    std::size_t outer, extent, inner;
    detail::axis_extents(p, axis, outer, extent, inner);
    Shape oshape;
    for (int i = 0; i < p.rank(); ++i)
        if (i != axis) oshape.push_back(p.dim(i));
    if (oshape.empty()) oshape.push_back(1);
    constexpr T tiny = std::numeric_limits<T>::min();
    Tensor<T> out = Tensor<T>::zeros(oshape);
    const T* pv = p.data();
    const T* qv = q.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * extent * inner + i;
            T acc = T(0);
            for (std::size_t a = 0; a < extent; ++a) {
                const std::size_t k = base + a * inner;
                acc -= qv[k] * std::log(std::max(pv[k], tiny));
            }
            out[o * inner + i] = acc;
        }
    }
    if (detail::track(tape, p, q)) {
        out.set_requires_grad(true);
        auto pn = p.node(), qn = q.node();
        tape.record(out, [pn, qn, outer, extent, inner](const std::vector<T>& d) {
            constexpr T tiny = std::numeric_limits<T>::min();
            const T* pv = pn->value.data();
            const T* qv = qn->value.data();
            T* pg = pn->requires_grad ? detail::ensure_grad(*pn) : nullptr;
            T* qg = qn->requires_grad ? detail::ensure_grad(*qn) : nullptr;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * extent * inner + i;
                    const T dv = d[o * inner + i];
                    for (std::size_t a = 0; a < extent; ++a) {
                        const std::size_t k = base + a * inner;
                        if (pg && pv[k] > tiny) pg[k] -= dv * qv[k] / pv[k];
                        if (qg) qg[k] -= dv * std::log(std::max(pv[k], tiny));
                    }
                }
            }
        });
    }
    return out;
}

// Elementwise smooth L1 with unit transition: 0.5x^2 for |x|<1, |x|-0.5 else.
template <class T>
Tensor<T> smooth_l1(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x.data()[i];
        const T a = std::abs(v);
        out[i] = a < T(1) ? T(0.5) * v * v : a - T(0.5);
    }
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            const T* v = xn->value.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                const T s = std::abs(v[i]) < T(1) ? v[i]
                            : (v[i] > T(0) ? T(1) : T(-1));
                g[i] += d[i] * s;
            }
        });
    }
    return out;
}

// ------------------------------------------------------- shape plumbing ----

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from(std::move(shape), x.value());
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn](const std::vector<T>& d) {
            if (xn->requires_grad)
                detail::kt<T>().axpy(d.size(), T(1), d.data(), detail::ensure_grad(*xn));
        });
    }
    return out;
}

// Concatenate along the last axis; leading dims must match.
template <class T>
Tensor<T> concat_last(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw UsageError("concat_last: empty input list");
    const int rank = parts[0].rank();
    int ctotal = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        if (p.rank() != rank)
            throw ShapeError("concat_last: rank mismatch");
        for (int i = 0; i + 1 < rank; ++i)
            if (p.dim(i) != parts[0].dim(i))
                throw ShapeError("concat_last: leading dims differ");
        ctotal += p.dim(rank - 1);
        any_grad = any_grad || p.requires_grad();
    }
    Shape oshape = parts[0].shape();
    oshape[static_cast<std::size_t>(rank - 1)] = ctotal;
    Tensor<T> out = Tensor<T>::zeros(oshape);
    const std::size_t rows = out.size() / static_cast<std::size_t>(ctotal);
    std::size_t coff = 0;
    for (const auto& p : parts) {
        const std::size_t pc = static_cast<std::size_t>(p.dim(rank - 1));
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(out.data() + r * ctotal + coff, p.data() + r * pc,
                        pc * sizeof(T));
        coff += pc;
    }
    if (tape.recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode<T>>> nodes;
        std::vector<std::size_t> widths;
        for (const auto& p : parts) {
            nodes.push_back(p.node());
            widths.push_back(static_cast<std::size_t>(p.dim(rank - 1)));
        }
        const std::size_t ct = static_cast<std::size_t>(ctotal);
        tape.record(out, [nodes, widths, rows, ct](const std::vector<T>& d) {
            std::size_t coff = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const std::size_t pc = widths[k];
                if (nodes[k]->requires_grad) {
                    T* g = detail::ensure_grad(*nodes[k]);
                    for (std::size_t r = 0; r < rows; ++r)
                        detail::kt<T>().axpy(pc, T(1), d.data() + r * ct + coff,
                                             g + r * pc);
                }
                coff += pc;
            }
        });
    }
    return out;
}

namespace detail {

// Shared implementation for contiguous-block gather ops (image/row slice).
template <class T>
Tensor<T> block_slice(Tape<T>& tape, const Tensor<T>& x, Shape oshape,
                      std::size_t offset, std::size_t count) {
    Tensor<T> out = Tensor<T>::zeros(std::move(oshape));
    std::memcpy(out.data(), x.data() + offset, count * sizeof(T));
    if (track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn, offset, count](const std::vector<T>& d) {
            if (xn->requires_grad)
                kt<T>().axpy(count, T(1), d.data(), ensure_grad(*xn) + offset);
        });
    }
    return out;
}

}  // namespace detail

// Slice [from, from+len) of the last axis.
template <class T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& x, int from, int len) {
    const int rank = x.rank();
    const int c = x.dim(rank - 1);
    if (from < 0 || len < 1 || from + len > c)
        throw ShapeError("slice_channels: [" + std::to_string(from) + "," +
                         std::to_string(from + len) + ") outside of " +
                         std::to_string(c) + " channels");
    Shape oshape = x.shape();
    oshape[static_cast<std::size_t>(rank - 1)] = len;
    Tensor<T> out = Tensor<T>::zeros(oshape);
    const std::size_t cs = static_cast<std::size_t>(c);
    const std::size_t ls = static_cast<std::size_t>(len);
    const std::size_t rows = x.size() / cs;
    for (std::size_t r = 0; r < rows; ++r)
        std::memcpy(out.data() + r * ls, x.data() + r * cs + from, ls * sizeof(T));
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        const std::size_t off = static_cast<std::size_t>(from);
        tape.record(out, [xn, rows, cs, ls, off](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            for (std::size_t r = 0; r < rows; ++r)
                detail::kt<T>().axpy(ls, T(1), d.data() + r * ls, g + r * cs + off);
        });
    }
    return out;
}

// x [N,H,W,C] -> image n as [H,W,C]
template <class T>
Tensor<T> image_slice(Tape<T>& tape, const Tensor<T>& x, int n) {
    if (x.rank() != 4) throw ShapeError("image_slice: need rank-4 input");
    if (n < 0 || n >= x.dim(0)) throw ShapeError("image_slice: index out of range");
    const std::size_t count = x.size() / static_cast<std::size_t>(x.dim(0));
    return detail::block_slice(tape, x, {x.dim(1), x.dim(2), x.dim(3)},
                               static_cast<std::size_t>(n) * count, count);
}

// x [H,W,C] -> row i as [W,C]
template <class T>
Tensor<T> row_slice(Tape<T>& tape, const Tensor<T>& x, int i) {
    if (x.rank() != 3) throw ShapeError("row_slice: need rank-3 input");
    if (i < 0 || i >= x.dim(0)) throw ShapeError("row_slice: index out of range");
    const std::size_t count = static_cast<std::size_t>(x.dim(1) * x.dim(2));
    return detail::block_slice(tape, x, {x.dim(1), x.dim(2)},
                               static_cast<std::size_t>(i) * count, count);
}

// x [H,W,C] -> column j as [H,C]
template <class T>
Tensor<T> col_slice(Tape<T>& tape, const Tensor<T>& x, int j) {
    if (x.rank() != 3) throw ShapeError("col_slice: need rank-3 input");
    if (j < 0 || j >= x.dim(1)) throw ShapeError("col_slice: index out of range");
    const std::size_t h = static_cast<std::size_t>(x.dim(0));
    const std::size_t w = static_cast<std::size_t>(x.dim(1));
    const std::size_t c = static_cast<std::size_t>(x.dim(2));
    Tensor<T> out = Tensor<T>::zeros({x.dim(0), x.dim(2)});
    for (std::size_t r = 0; r < h; ++r)
        std::memcpy(out.data() + r * c, x.data() + (r * w + static_cast<std::size_t>(j)) * c,
                    c * sizeof(T));
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        const std::size_t jj = static_cast<std::size_t>(j);
        tape.record(out, [xn, h, w, c, jj](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            for (std::size_t r = 0; r < h; ++r)
                detail::kt<T>().axpy(c, T(1), d.data() + r * c, g + (r * w + jj) * c);
        });
    }
    return out;
}

// rows: list of [W,C] -> [H,W,C]
template <class T>
Tensor<T> stack_rows(Tape<T>& tape, const std::vector<Tensor<T>>& rows) {
    if (rows.empty()) throw UsageError("stack_rows: empty input list");
    const std::size_t count = rows[0].size();
    bool any_grad = false;
    for (const auto& r : rows) {
        detail::check_same_shape("stack_rows", rows[0], r);
        any_grad = any_grad || r.requires_grad();
    }
    Tensor<T> out = Tensor<T>::zeros(
        {static_cast<int>(rows.size()), rows[0].dim(0), rows[0].dim(1)});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::memcpy(out.data() + i * count, rows[i].data(), count * sizeof(T));
    if (tape.recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode<T>>> nodes;
        for (const auto& r : rows) nodes.push_back(r.node());
        tape.record(out, [nodes, count](const std::vector<T>& d) {
            for (std::size_t i = 0; i < nodes.size(); ++i)
                if (nodes[i]->requires_grad)
                    detail::kt<T>().axpy(count, T(1), d.data() + i * count,
                                         detail::ensure_grad(*nodes[i]));
        });
    }
    return out;
}

// cols: list of [H,C] -> [H,W,C]
template <class T>
Tensor<T> stack_cols(Tape<T>& tape, const std::vector<Tensor<T>>& cols) {
    if (cols.empty()) throw UsageError("stack_cols: empty input list");
    const std::size_t h = static_cast<std::size_t>(cols[0].dim(0));
    const std::size_t c = static_cast<std::size_t>(cols[0].dim(1));
    const std::size_t w = cols.size();
    bool any_grad = false;
    for (const auto& col : cols) {
        detail::check_same_shape("stack_cols", cols[0], col);
        any_grad = any_grad || col.requires_grad();
    }
    Tensor<T> out = Tensor<T>::zeros(
        {cols[0].dim(0), static_cast<int>(w), cols[0].dim(1)});
    for (std::size_t j = 0; j < w; ++j)
        for (std::size_t r = 0; r < h; ++r)
            std::memcpy(out.data() + (r * w + j) * c, cols[j].data() + r * c,
                        c * sizeof(T));
    if (tape.recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode<T>>> nodes;
        for (const auto& col : cols) nodes.push_back(col.node());
        tape.record(out, [nodes, h, w, c](const std::vector<T>& d) {
            for (std::size_t j = 0; j < w; ++j)
                if (nodes[j]->requires_grad) {
                    T* g = detail::ensure_grad(*nodes[j]);
                    for (std::size_t r = 0; r < h; ++r)
                        detail::kt<T>().axpy(c, T(1), d.data() + (r * w + j) * c,
                                             g + r * c);
                }
        });
    }
    return out;
}

}  // namespace tntk
