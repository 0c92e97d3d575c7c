#pragma once

// Network-level differentiable ops: convolution (NHWC, im2row + matmul),
// batch normalization, bilinear upsampling, fused stable losses, the GRU
// cell, embedding lookup and perspective bilinear sampling.

#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "tntk/geometry.hpp"
#include "tntk/ops.hpp"
#include "tntk/tensor.hpp"

namespace tntk {

enum class Padding { same, valid };

namespace detail {

struct ConvDims {
    int n, h, w, ci, kh, kw, co, stride;
    int ho, wo, pad_top, pad_left;
    std::size_t rows() const { return static_cast<std::size_t>(ho) * static_cast<std::size_t>(wo); }
    std::size_t cols() const {
        return static_cast<std::size_t>(kh) * static_cast<std::size_t>(kw) *
               static_cast<std::size_t>(ci);
    }
};

template <class T>
inline ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& k, int stride,
                          Padding pad) {
    if (x.rank() != 4 || k.rank() != 4)
        throw ShapeError("conv2d: input must be [N,H,W,Ci], kernel [kh,kw,Ci,Co]");
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    ConvDims d;
    d.n = x.dim(0); d.h = x.dim(1); d.w = x.dim(2); d.ci = x.dim(3);
    d.kh = k.dim(0); d.kw = k.dim(1); d.co = k.dim(3);
    d.stride = stride;
    if (k.dim(2) != d.ci)
        throw ShapeError("conv2d: input channels " + std::to_string(d.ci) +
                         " do not match kernel Cin " + std::to_string(k.dim(2)));
    if (pad == Padding::same) {
        if (d.kh % 2 == 0 || d.kw % 2 == 0)
            throw ValueError("conv2d: same padding requires odd kernel dims");
        d.ho = (d.h + stride - 1) / stride;
        d.wo = (d.w + stride - 1) / stride;
        const int pad_h = std::max((d.ho - 1) * stride + d.kh - d.h, 0);
        const int pad_w = std::max((d.wo - 1) * stride + d.kw - d.w, 0);
        d.pad_top = pad_h / 2;
        d.pad_left = pad_w / 2;
    } else {
        if (d.h < d.kh || d.w < d.kw)
            throw ShapeError("conv2d: input smaller than kernel with valid padding");
        d.ho = (d.h - d.kh) / stride + 1;
        d.wo = (d.w - d.kw) / stride + 1;
        d.pad_top = 0;
        d.pad_left = 0;
    }
    return d;
}

// Patch matrix for one image: row per output position, column block per
// (ky, kx, ci) in kernel layout order. Out-of-bounds taps stay zero.
template <class T>
inline void im2row(const T* img, const ConvDims& d, T* out) {
    const std::size_t cols = d.cols();
    std::memset(out, 0, d.rows() * cols * sizeof(T));
    const std::size_t kwci = static_cast<std::size_t>(d.kw) * static_cast<std::size_t>(d.ci);
    for (int oy = 0; oy < d.ho; ++oy) {
        for (int ox = 0; ox < d.wo; ++ox) {
            T* row = out + (static_cast<std::size_t>(oy) * d.wo + ox) * cols;
            const int iy0 = oy * d.stride - d.pad_top;
            const int ix0 = ox * d.stride - d.pad_left;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= d.h) continue;
                T* dst = row + static_cast<std::size_t>(ky) * kwci;
                if (ix0 >= 0 && ix0 + d.kw <= d.w) {
                    std::memcpy(dst,
                                img + (static_cast<std::size_t>(iy) * d.w + ix0) * d.ci,
                                kwci * sizeof(T));
                } else {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= d.w) continue;
                        std::memcpy(dst + static_cast<std::size_t>(kx) * d.ci,
                                    img + (static_cast<std::size_t>(iy) * d.w + ix) * d.ci,
                                    static_cast<std::size_t>(d.ci) * sizeof(T));
                    }
                }
            }
        }
    }
}

// Scatter-add the patch-matrix gradient back onto the image gradient.
template <class T>
inline void row2im_acc(const T* rows, const ConvDims& d, T* dimg) {
    const std::size_t cols = d.cols();
    const std::size_t kwci = static_cast<std::size_t>(d.kw) * static_cast<std::size_t>(d.ci);
    for (int oy = 0; oy < d.ho; ++oy) {
        for (int ox = 0; ox < d.wo; ++ox) {
            const T* row = rows + (static_cast<std::size_t>(oy) * d.wo + ox) * cols;
            const int iy0 = oy * d.stride - d.pad_top;
            const int ix0 = ox * d.stride - d.pad_left;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= d.h) continue;
                const T* src = row + static_cast<std::size_t>(ky) * kwci;
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= d.w) continue;
                    kt<T>().axpy(static_cast<std::size_t>(d.ci), T(1),
                                 src + static_cast<std::size_t>(kx) * d.ci,
                                 dimg + (static_cast<std::size_t>(iy) * d.w + ix) * d.ci);
                }
            }
        }
    }
}

}  // namespace detail

// x [N,H,W,Ci] (*) k [kh,kw,Ci,Co] -> [N,Ho,Wo,Co]. Same padding follows the
// ceil(H/stride) convention with the smaller pad on the top/left side.
template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& k,
                 int stride, Padding pad) {
    const detail::ConvDims d = detail::conv_dims(x, k, stride, pad);
    const std::size_t rows = d.rows(), cols = d.cols();
    const std::size_t img_in = static_cast<std::size_t>(d.h) * d.w * d.ci;
    const std::size_t img_out = rows * static_cast<std::size_t>(d.co);
    Tensor<T> out = Tensor<T>::zeros({d.n, d.ho, d.wo, d.co});
    {
        std::vector<T> patch(rows * cols);
        for (int n = 0; n < d.n; ++n) {
            detail::im2row(x.data() + n * img_in, d, patch.data());
            detail::kt<T>().matmul(rows, cols, static_cast<std::size_t>(d.co),
                                   patch.data(), k.data(), out.data() + n * img_out);
        }
    }
    if (detail::track(tape, x, k)) {
        out.set_requires_grad(true);
        auto xn = x.node(), kn = k.node();
        tape.record(out, [xn, kn, d, rows, cols, img_in, img_out](const std::vector<T>& dout) {
            const std::size_t co = static_cast<std::size_t>(d.co);
            std::vector<T> patch(rows * cols);
            std::vector<T> patch_t;
            std::vector<T> kmat_t;
            std::vector<T> drows;
            if (xn->requires_grad) {
                kmat_t.resize(kn->value.size());
                detail::transpose2d(cols, co, kn->value.data(), kmat_t.data());
                drows.resize(rows * cols);
            }
            if (kn->requires_grad) patch_t.resize(rows * cols);
            T* kg = kn->requires_grad ? detail::ensure_grad(*kn) : nullptr;
            T* xg = xn->requires_grad ? detail::ensure_grad(*xn) : nullptr;
            for (int n = 0; n < d.n; ++n) {
                detail::im2row(xn->value.data() + n * img_in, d, patch.data());
                const T* dslab = dout.data() + n * img_out;
                if (kg) {
                    detail::transpose2d(rows, cols, patch.data(), patch_t.data());
                    detail::kt<T>().matmul(cols, rows, co, patch_t.data(), dslab, kg);
                }
                if (xg) {
                    std::memset(drows.data(), 0, drows.size() * sizeof(T));
                    detail::kt<T>().matmul(rows, co, cols, dslab, kmat_t.data(),
                                           drows.data());
                    detail::row2im_acc(drows.data(), d, xg + n * img_in);
                }
            }
        });
    }
    return out;
}

// Per-channel batch statistics over all leading axes ([N,H,W,C] or [M,C]).
template <class T>
struct BnStats {
    Tensor<T> mean;  // [C]
    Tensor<T> var;   // [C], biased batch variance folded with `momentum`
};

template <class T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BnStats<T>& stats, bool training,
                     T momentum = T(0.9), T eps = T(1e-5)) {
    const int rank = x.rank();
    if (rank < 2) throw ShapeError("batch_norm: need at least rank 2");
    const std::size_t c = static_cast<std::size_t>(x.dim(rank - 1));
    if (gamma.size() != c || beta.size() != c || stats.mean.size() != c ||
        stats.var.size() != c)
        throw ShapeError("batch_norm: parameter size does not match channels");
    const std::size_t m = x.size() / c;
    Tensor<T> out = Tensor<T>::zeros(x.shape());

    std::vector<T> mu(c, T(0)), var(c, T(0)), istd(c);
    if (training) {
        const T* v = x.data();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) mu[j] += v[r * c + j];
        const T invm = T(1) / static_cast<T>(m);
        for (std::size_t j = 0; j < c; ++j) mu[j] *= invm;
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                const T dvj = v[r * c + j] - mu[j];
                var[j] += dvj * dvj;
            }
        for (std::size_t j = 0; j < c; ++j) var[j] *= invm;
        for (std::size_t j = 0; j < c; ++j) {
            stats.mean[j] = momentum * stats.mean[j] + (T(1) - momentum) * mu[j];
            stats.var[j] = momentum * stats.var[j] + (T(1) - momentum) * var[j];
        }
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            mu[j] = stats.mean[j];
            var[j] = stats.var[j];
        }
    }
    for (std::size_t j = 0; j < c; ++j) istd[j] = T(1) / std::sqrt(var[j] + eps);

    // xhat saved for the backward pass
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    {
        const T* v = x.data();
        T* xh = xhat->data();
        T* y = out.data();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t i = r * c + j;
                xh[i] = (v[i] - mu[j]) * istd[j];
                y[i] = gamma.data()[j] * xh[i] + beta.data()[j];
            }
    }

    if (detail::track(tape, x, gamma, beta)) {
        out.set_requires_grad(true);
        auto xn = x.node(), gn = gamma.node(), bn = beta.node();
        tape.record(out, [xn, gn, bn, xhat, istd, m, c, training](const std::vector<T>& d) {
            const T* xh = xhat->data();
            std::vector<T> sb(c, T(0)), sg(c, T(0));
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t j = 0; j < c; ++j) {
                    const std::size_t i = r * c + j;
                    sb[j] += d[i];
                    sg[j] += d[i] * xh[i];
                }
            if (gn->requires_grad) {
                T* g = detail::ensure_grad(*gn);
                for (std::size_t j = 0; j < c; ++j) g[j] += sg[j];
            }
            if (bn->requires_grad) {
                T* g = detail::ensure_grad(*bn);
                for (std::size_t j = 0; j < c; ++j) g[j] += sb[j];
            }
            if (xn->requires_grad) {
                T* g = detail::ensure_grad(*xn);
                const T invm = T(1) / static_cast<T>(m);
                if (training) {
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t j = 0; j < c; ++j) {
                            const std::size_t i = r * c + j;
                            g[i] += gn->value[j] * istd[j] *
                                    (d[i] - sb[j] * invm - xh[i] * sg[j] * invm);
                        }
                } else {
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t j = 0; j < c; ++j) {
                            const std::size_t i = r * c + j;
                            g[i] += gn->value[j] * istd[j] * d[i];
                        }
                }
            }
        });
    }
    return out;
}

// Integer-factor bilinear upsampling, align-corners=false: source coordinate
// of output o is (o + 0.5)/factor - 0.5, edge-clamped. x is [N,H,W,C].
template <class T>
Tensor<T> upsample_bilinear(Tape<T>& tape, const Tensor<T>& x, int factor) {
    if (x.rank() != 4) throw ShapeError("upsample_bilinear: need [N,H,W,C]");
    if (factor < 1) throw ValueError("upsample_bilinear: factor must be >= 1");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h * factor, ow = w * factor;

    struct Taps {
        std::vector<int> i0, i1;
        std::vector<T> w0, w1;
    };
    auto make_taps = [factor](int src, int dst) {
        Taps t;
        t.i0.resize(static_cast<std::size_t>(dst));
        t.i1.resize(static_cast<std::size_t>(dst));
        t.w0.resize(static_cast<std::size_t>(dst));
        t.w1.resize(static_cast<std::size_t>(dst));
        for (int o = 0; o < dst; ++o) {
            const double s = (o + 0.5) / factor - 0.5;
            double f = std::floor(s);
            double frac = s - f;
            int i0 = static_cast<int>(f);
            if (i0 < 0) { i0 = 0; frac = 0.0; }
            int i1 = i0 + 1;
            if (i1 > src - 1) { i1 = src - 1; frac = 0.0; }
            t.i0[static_cast<std::size_t>(o)] = i0;
            t.i1[static_cast<std::size_t>(o)] = i1;
            t.w0[static_cast<std::size_t>(o)] = static_cast<T>(1.0 - frac);
            t.w1[static_cast<std::size_t>(o)] = static_cast<T>(frac);
        }
        return t;
    };
    const Taps ty = make_taps(h, oh);
    const Taps tx = make_taps(w, ow);

    Tensor<T> out = Tensor<T>::zeros({n, oh, ow, c});
    const std::size_t cs = static_cast<std::size_t>(c);
    const std::size_t in_img = static_cast<std::size_t>(h) * w * cs;
    const std::size_t out_img = static_cast<std::size_t>(oh) * ow * cs;
    for (int b = 0; b < n; ++b) {
        const T* src = x.data() + b * in_img;
        T* dst = out.data() + b * out_img;
        for (int oy = 0; oy < oh; ++oy) {
            const std::size_t y0 = static_cast<std::size_t>(ty.i0[oy]) * w;
            const std::size_t y1 = static_cast<std::size_t>(ty.i1[oy]) * w;
            for (int ox = 0; ox < ow; ++ox) {
                T* orow = dst + (static_cast<std::size_t>(oy) * ow + ox) * cs;
                const std::size_t x0 = static_cast<std::size_t>(tx.i0[ox]);
                const std::size_t x1 = static_cast<std::size_t>(tx.i1[ox]);
                detail::kt<T>().axpy(cs, ty.w0[oy] * tx.w0[ox], src + (y0 + x0) * cs, orow);
                detail::kt<T>().axpy(cs, ty.w0[oy] * tx.w1[ox], src + (y0 + x1) * cs, orow);
                detail::kt<T>().axpy(cs, ty.w1[oy] * tx.w0[ox], src + (y1 + x0) * cs, orow);
                detail::kt<T>().axpy(cs, ty.w1[oy] * tx.w1[ox], src + (y1 + x1) * cs, orow);
            }
        }
    }
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        auto xn = x.node();
        tape.record(out, [xn, ty, tx, n, oh, ow, w, cs, in_img, out_img](const std::vector<T>& d) {
            if (!xn->requires_grad) return;
            T* g = detail::ensure_grad(*xn);
            for (int b = 0; b < n; ++b) {
                const T* dsl = d.data() + b * out_img;
                T* gsl = g + b * in_img;
                for (int oy = 0; oy < oh; ++oy) {
                    const std::size_t y0 = static_cast<std::size_t>(ty.i0[oy]) * w;
                    const std::size_t y1 = static_cast<std::size_t>(ty.i1[oy]) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const T* drow = dsl + (static_cast<std::size_t>(oy) * ow + ox) * cs;
                        const std::size_t x0 = static_cast<std::size_t>(tx.i0[ox]);
                        const std::size_t x1 = static_cast<std::size_t>(tx.i1[ox]);
                        detail::kt<T>().axpy(cs, ty.w0[oy] * tx.w0[ox], drow, gsl + (y0 + x0) * cs);
                        detail::kt<T>().axpy(cs, ty.w0[oy] * tx.w1[ox], drow, gsl + (y0 + x1) * cs);
                        detail::kt<T>().axpy(cs, ty.w1[oy] * tx.w0[ox], drow, gsl + (y1 + x0) * cs);
                        detail::kt<T>().axpy(cs, ty.w1[oy] * tx.w1[ox], drow, gsl + (y1 + x1) * cs);
                    }
                }
            }
        });
    }
    return out;
}

// Weighted sum of numerically stable binary cross-entropies on logits:
// sum_i w[i] * (max(z,0) - z*t + log(1+exp(-|z|))). Targets and weights are
// treated as constants.
template <class T>
Tensor<T> bce_logits_sum(Tape<T>& tape, const Tensor<T>& logits,
                         const Tensor<T>& targets, const Tensor<T>& weights) {
    detail::check_same_shape("bce_logits_sum", logits, targets);
    detail::check_same_shape("bce_logits_sum", logits, weights);
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (!(targets.data()[i] >= T(0) && targets.data()[i] <= T(1)))
            throw ValueError("bce_logits_sum: target outside [0,1]");
    T acc = T(0);
    const T* z = logits.data();
    const T* t = targets.data();
    const T* w = weights.data();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const T bce = std::max(z[i], T(0)) - z[i] * t[i] +
                      std::log1p(std::exp(-std::abs(z[i])));
        acc += w[i] * bce;
    }
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (detail::track(tape, logits)) {
        out.set_requires_grad(true);
        auto zn = logits.node(), tn = targets.node(), wn = weights.node();
        tape.record(out, [zn, tn, wn](const std::vector<T>& d) {
            if (!zn->requires_grad) return;
            T* g = detail::ensure_grad(*zn);
            const T dv = d[0];
            for (std::size_t i = 0; i < zn->value.size(); ++i)
                g[i] += dv * wn->value[i] *
                        (detail::sigmoid_val(zn->value[i]) - tn->value[i]);
        });
    }
    return out;
}

// -log softmax(logits)[target], logits flattened.
template <class T>
Tensor<T> softmax_xent(Tape<T>& tape, const Tensor<T>& logits, int target) {
    const std::size_t v = logits.size();
    if (target < 0 || static_cast<std::size_t>(target) >= v)
        throw ValueError("softmax_xent: target index " + std::to_string(target) +
                         " out of range");
    const T* z = logits.data();
    T mx = z[0];
    for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, z[i]);
    auto probs = std::make_shared<std::vector<T>>(v);
    T denom = T(0);
    for (std::size_t i = 0; i < v; ++i) {
        (*probs)[i] = std::exp(z[i] - mx);
        denom += (*probs)[i];
    }
    const T invd = T(1) / denom;
    for (std::size_t i = 0; i < v; ++i) (*probs)[i] *= invd;
    Tensor<T> out = Tensor<T>::scalar(mx + std::log(denom) - z[static_cast<std::size_t>(target)]);
    if (detail::track(tape, logits)) {
        out.set_requires_grad(true);
        auto zn = logits.node();
        tape.record(out, [zn, probs, target](const std::vector<T>& d) {
            if (!zn->requires_grad) return;
            T* g = detail::ensure_grad(*zn);
            const T dv = d[0];
            for (std::size_t i = 0; i < probs->size(); ++i)
                g[i] += dv * ((*probs)[i] -
                              (i == static_cast<std::size_t>(target) ? T(1) : T(0)));
        });
    }
    return out;
}

// ------------------------------------------------------------------ GRU ----

template <class T>
struct GruParams {
    Tensor<T> wx;  // [Din, 3*Dh], gate order [reset | update | candidate]
    Tensor<T> wh;  // [Dh, 3*Dh]
    Tensor<T> bx;  // [3*Dh]
    Tensor<T> bh;  // [3*Dh]
};

namespace detail {

template <class T>
inline void check_finite(const Tensor<T>& t, const char* op, const char* name) {
    const T* v = t.data();
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(v[i]))
            throw NumericError(std::string(op) + ": non-finite value in input '" +
                               name + "'");
}

}  // namespace detail

// Standard GRU update:
//   r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
//   z = sigmoid(x Wx_z + bx_z + h Wh_z + bh_z)
//   n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
//   h' = (1 - z) * n + z * h
template <class T>
Tensor<T> gru_cell(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h,
                   const GruParams<T>& p) {
    if (x.rank() != 2 || h.rank() != 2 || x.dim(0) != h.dim(0))
        throw ShapeError("gru_cell: x and h must be [B,Din] / [B,Dh]");
    const std::size_t b = static_cast<std::size_t>(x.dim(0));
    const std::size_t din = static_cast<std::size_t>(x.dim(1));
    const std::size_t dh = static_cast<std::size_t>(h.dim(1));
    if (p.wx.rank() != 2 || static_cast<std::size_t>(p.wx.dim(0)) != din ||
        static_cast<std::size_t>(p.wx.dim(1)) != 3 * dh ||
        p.wh.rank() != 2 || static_cast<std::size_t>(p.wh.dim(0)) != dh ||
        static_cast<std::size_t>(p.wh.dim(1)) != 3 * dh ||
        p.bx.size() != 3 * dh || p.bh.size() != 3 * dh)
        throw ShapeError("gru_cell: parameter shapes inconsistent with Din=" +
                         std::to_string(din) + " Dh=" + std::to_string(dh));
    detail::check_finite(x, "gru_cell", "x");
    detail::check_finite(h, "gru_cell", "h_prev");

    const std::size_t g3 = 3 * dh;
    std::vector<T> gx(b * g3), gh(b * g3);
    for (std::size_t r = 0; r < b; ++r) {
        std::memcpy(gx.data() + r * g3, p.bx.data(), g3 * sizeof(T));
        std::memcpy(gh.data() + r * g3, p.bh.data(), g3 * sizeof(T));
    }
    detail::kt<T>().matmul(b, din, g3, x.data(), p.wx.data(), gx.data());
    detail::kt<T>().matmul(b, dh, g3, h.data(), p.wh.data(), gh.data());

    Tensor<T> out = Tensor<T>::zeros(h.shape());
    auto saved = std::make_shared<std::array<std::vector<T>, 4>>();
    auto& rv = (*saved)[0]; rv.resize(b * dh);
    auto& zv = (*saved)[1]; zv.resize(b * dh);
    auto& nv = (*saved)[2]; nv.resize(b * dh);
    auto& qv = (*saved)[3]; qv.resize(b * dh);
    for (std::size_t r = 0; r < b; ++r) {
        const T* gxr = gx.data() + r * g3;
        const T* ghr = gh.data() + r * g3;
        for (std::size_t j = 0; j < dh; ++j) {
            const std::size_t i = r * dh + j;
            rv[i] = detail::sigmoid_val(gxr[j] + ghr[j]);
            zv[i] = detail::sigmoid_val(gxr[dh + j] + ghr[dh + j]);
            qv[i] = ghr[2 * dh + j];
            nv[i] = std::tanh(gxr[2 * dh + j] + rv[i] * qv[i]);
            out[i] = (T(1) - zv[i]) * nv[i] + zv[i] * h.data()[i];
        }
    }

    if (detail::track(tape, x, h, p.wx, p.wh, p.bx, p.bh)) {
        out.set_requires_grad(true);
        auto xn = x.node(), hn = h.node();
        auto wxn = p.wx.node(), whn = p.wh.node();
        auto bxn = p.bx.node(), bhn = p.bh.node();
        tape.record(out, [xn, hn, wxn, whn, bxn, bhn, saved, b, din, dh](const std::vector<T>& d) {
            const std::size_t g3 = 3 * dh;
            const auto& rv = (*saved)[0];
            const auto& zv = (*saved)[1];
            const auto& nv = (*saved)[2];
            const auto& qv = (*saved)[3];
            std::vector<T> dgx(b * g3), dgh(b * g3);
            T* hg = hn->requires_grad ? detail::ensure_grad(*hn) : nullptr;
            for (std::size_t r = 0; r < b; ++r) {
                T* dgxr = dgx.data() + r * g3;
                T* dghr = dgh.data() + r * g3;
                for (std::size_t j = 0; j < dh; ++j) {
                    const std::size_t i = r * dh + j;
                    const T dv = d[i];
                    const T dn = dv * (T(1) - zv[i]);
                    const T dz = dv * (hn->value[i] - nv[i]);
                    const T dpre_n = dn * (T(1) - nv[i] * nv[i]);
                    const T dr = dpre_n * qv[i];
                    const T dq = dpre_n * rv[i];
                    const T dpre_r = dr * rv[i] * (T(1) - rv[i]);
                    const T dpre_z = dz * zv[i] * (T(1) - zv[i]);
                    dgxr[j] = dpre_r;
                    dgxr[dh + j] = dpre_z;
                    dgxr[2 * dh + j] = dpre_n;
                    dghr[j] = dpre_r;
                    dghr[dh + j] = dpre_z;
                    dghr[2 * dh + j] = dq;
                    if (hg) hg[i] += dv * zv[i];
                }
            }
            if (xn->requires_grad) {
                std::vector<T> wxt(wxn->value.size());
                detail::transpose2d(din, g3, wxn->value.data(), wxt.data());
                detail::kt<T>().matmul(b, g3, din, dgx.data(), wxt.data(),
                                       detail::ensure_grad(*xn));
            }
            if (wxn->requires_grad) {
                std::vector<T> xt(xn->value.size());
                detail::transpose2d(b, din, xn->value.data(), xt.data());
                detail::kt<T>().matmul(din, b, g3, xt.data(), dgx.data(),
                                       detail::ensure_grad(*wxn));
            }
            if (bxn->requires_grad) {
                T* g = detail::ensure_grad(*bxn);
                for (std::size_t r = 0; r < b; ++r)
                    detail::kt<T>().axpy(g3, T(1), dgx.data() + r * g3, g);
            }
            if (hg) {
                std::vector<T> wht(whn->value.size());
                detail::transpose2d(dh, g3, whn->value.data(), wht.data());
                detail::kt<T>().matmul(b, g3, dh, dgh.data(), wht.data(), hg);
            }
            if (whn->requires_grad) {
                std::vector<T> ht(hn->value.size());
                detail::transpose2d(b, dh, hn->value.data(), ht.data());
                detail::kt<T>().matmul(dh, b, g3, ht.data(), dgh.data(),
                                       detail::ensure_grad(*whn));
            }
            if (bhn->requires_grad) {
                T* g = detail::ensure_grad(*bhn);
                for (std::size_t r = 0; r < b; ++r)
                    detail::kt<T>().axpy(g3, T(1), dgh.data() + r * g3, g);
            }
        });
    }
    return out;
}

// table [V,D] -> row idx as [1,D]
template <class T>
Tensor<T> embedding_row(Tape<T>& tape, const Tensor<T>& table, int idx) {
    if (table.rank() != 2) throw ShapeError("embedding_row: table must be [V,D]");
    if (idx < 0 || idx >= table.dim(0))
        throw ValueError("embedding_row: vocabulary index " + std::to_string(idx) +
                         " out of range [0," + std::to_string(table.dim(0)) + ")");
    const std::size_t dim = static_cast<std::size_t>(table.dim(1));
    const std::size_t off = static_cast<std::size_t>(idx) * dim;
    Tensor<T> out = Tensor<T>::zeros({1, table.dim(1)});
    std::memcpy(out.data(), table.data() + off, dim * sizeof(T));
    if (detail::track(tape, table)) {
        out.set_requires_grad(true);
        auto tn = table.node();
        tape.record(out, [tn, off, dim](const std::vector<T>& d) {
            if (tn->requires_grad)
                detail::kt<T>().axpy(dim, T(1), d.data(), detail::ensure_grad(*tn) + off);
        });
    }
    return out;
}

// Bilinear sampling of u [Hs,Ws,C] on the grid mapped by the homography:
// target pixel (tx,ty) -> source (u/w, v/w), kernel max(0, 1-|.|) realized as
// the 4-neighbor lookup. Out-of-bounds taps contribute zero. Differentiable
// w.r.t. u only; the sampling grid is constant.
template <class T>
Tensor<T> perspective_sample(Tape<T>& tape, const Tensor<T>& u,
                             const Homography& hom, int wt, int ht) {
    if (u.rank() != 3) throw ShapeError("perspective_sample: need [H,W,C] input");
    if (wt < 1 || ht < 1)
        throw ValueError("perspective_sample: target dims must be >= 1");
    const int hs = u.dim(0), ws = u.dim(1), c = u.dim(2);
    const std::size_t cs = static_cast<std::size_t>(c);
    const std::size_t npix = static_cast<std::size_t>(wt) * static_cast<std::size_t>(ht);

    // Precomputed taps: 4 source offsets (-1 when out of bounds) + weights.
    auto offs = std::make_shared<std::vector<long>>(npix * 4, -1L);
    auto wts = std::make_shared<std::vector<T>>(npix * 4, T(0));
    for (int ty = 0; ty < ht; ++ty) {
        for (int tx = 0; tx < wt; ++tx) {
            const std::size_t k = static_cast<std::size_t>(ty) * wt + tx;
            const double pw = hom.m[6] * tx + hom.m[7] * ty + hom.m[8];
            if (std::abs(pw) < 1e-12) continue;
            const double xs = (hom.m[0] * tx + hom.m[1] * ty + hom.m[2]) / pw;
            const double ys = (hom.m[3] * tx + hom.m[4] * ty + hom.m[5]) / pw;
            const double xf = std::floor(xs);
            const double yf = std::floor(ys);
            const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
            const double fx = xs - xf, fy = ys - yf;
            const double w4[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx,
                                  fy * (1 - fx), fy * fx};
            const int xi[4] = {x0, x0 + 1, x0, x0 + 1};
            const int yi[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int t4 = 0; t4 < 4; ++t4) {
                if (xi[t4] < 0 || xi[t4] >= ws || yi[t4] < 0 || yi[t4] >= hs)
                    continue;
                (*offs)[k * 4 + t4] = (static_cast<long>(yi[t4]) * ws + xi[t4]);
                (*wts)[k * 4 + t4] = static_cast<T>(w4[t4]);
            }
        }
    }

    Tensor<T> out = Tensor<T>::zeros({ht, wt, c});
    for (std::size_t k = 0; k < npix; ++k) {
        T* orow = out.data() + k * cs;
        for (int t4 = 0; t4 < 4; ++t4) {
            const long off = (*offs)[k * 4 + t4];
            if (off < 0) continue;
            detail::kt<T>().axpy(cs, (*wts)[k * 4 + t4],
                                 u.data() + static_cast<std::size_t>(off) * cs, orow);
        }
    }
    if (detail::track(tape, u)) {
        out.set_requires_grad(true);
        auto un = u.node();
        tape.record(out, [un, offs, wts, npix, cs](const std::vector<T>& d) {
            if (!un->requires_grad) return;
            T* g = detail::ensure_grad(*un);
            for (std::size_t k = 0; k < npix; ++k) {
                const T* drow = d.data() + k * cs;
                for (int t4 = 0; t4 < 4; ++t4) {
                    const long off = (*offs)[k * 4 + t4];
                    if (off < 0) continue;
                    detail::kt<T>().axpy(cs, (*wts)[k * 4 + t4], drow,
                                         g + static_cast<std::size_t>(off) * cs);
                }
            }
        });
    }
    return out;
}

}  // namespace tntk
