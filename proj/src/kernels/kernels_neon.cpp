// NEON kernel variants (AArch64). Compare-and-select keeps relu/relu_bwd
// identical to the scalar reference for NaNs and signed zeros; fmla is the
// fused multiply-accumulate required by the kernel contract.

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

#include "tntk/kernels.hpp"

namespace tntk::kernels {

namespace {

void axpy_f32(std::size_t n, float a, const float* x, float* y) {
    const float32x4_t av = vdupq_n_f32(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), av, vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void add_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vaddq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vsubq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vmulq_f32(vld1q_f32(x + i), vld1q_f32(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i,
                  vfmaq_f32(vld1q_f32(out + i), vld1q_f32(x + i), vld1q_f32(y + i)));
    for (; i < n; ++i) out[i] = std::fma(x[i], y[i], out[i]);
}

void scale_f32(std::size_t n, float a, float* x) {
    const float32x4_t av = vdupq_n_f32(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(x + i, vmulq_f32(vld1q_f32(x + i), av));
    for (; i < n; ++i) x[i] *= a;
}

void relu_f32(std::size_t n, const float* x, float* out) {
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t xv = vld1q_f32(x + i);
        vst1q_f32(out + i, vbslq_f32(vcgtq_f32(xv, zero), xv, zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32(std::size_t n, const float* x, const float* dy, float* dx) {
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t xv = vld1q_f32(x + i);
        const float32x4_t dv = vld1q_f32(dx + i);
        const float32x4_t sum = vaddq_f32(dv, vld1q_f32(dy + i));
        vst1q_f32(dx + i, vbslq_f32(vcgtq_f32(xv, zero), sum, dv));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) dx[i] += dy[i];
}

void matmul_f32(std::size_t m, std::size_t k, std::size_t n,
                const float* a, const float* b, float* c) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const float* a0 = a + i * k;
        const float* a1 = a0 + k;
        float* c0 = c + i * n;
        float* c1 = c0 + n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            float32x4_t s0 = vld1q_f32(c0 + j);
            float32x4_t s1 = vld1q_f32(c1 + j);
            for (std::size_t p = 0; p < k; ++p) {
                const float32x4_t bv = vld1q_f32(b + p * n + j);
                s0 = vfmaq_n_f32(s0, bv, a0[p]);
                s1 = vfmaq_n_f32(s1, bv, a1[p]);
            }
            vst1q_f32(c0 + j, s0);
            vst1q_f32(c1 + j, s1);
        }
        for (; j < n; ++j) {
            float s0 = c0[j], s1 = c1[j];
            for (std::size_t p = 0; p < k; ++p) {
                const float bv = b[p * n + j];
                s0 = std::fma(a0[p], bv, s0);
                s1 = std::fma(a1[p], bv, s1);
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }
    for (; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            float32x4_t s = vld1q_f32(crow + j);
            for (std::size_t p = 0; p < k; ++p)
                s = vfmaq_n_f32(s, vld1q_f32(b + p * n + j), arow[p]);
            vst1q_f32(crow + j, s);
        }
        for (; j < n; ++j) {
            float s = crow[j];
            for (std::size_t p = 0; p < k; ++p)
                s = std::fma(arow[p], b[p * n + j], s);
            crow[j] = s;
        }
    }
}

void axpy_f64(std::size_t n, double a, const double* x, double* y) {
    const float64x2_t av = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void add_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i,
                  vfmaq_f64(vld1q_f64(out + i), vld1q_f64(x + i), vld1q_f64(y + i)));
    for (; i < n; ++i) out[i] = std::fma(x[i], y[i], out[i]);
}

void scale_f64(std::size_t n, double a, double* x) {
    const float64x2_t av = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), av));
    for (; i < n; ++i) x[i] *= a;
}

void relu_f64(std::size_t n, const double* x, double* out) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t xv = vld1q_f64(x + i);
        vst1q_f64(out + i, vbslq_f64(vcgtq_f64(xv, zero), xv, zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f64(std::size_t n, const double* x, const double* dy, double* dx) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t xv = vld1q_f64(x + i);
        const float64x2_t dv = vld1q_f64(dx + i);
        const float64x2_t sum = vaddq_f64(dv, vld1q_f64(dy + i));
        vst1q_f64(dx + i, vbslq_f64(vcgtq_f64(xv, zero), sum, dv));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) dx[i] += dy[i];
}

void matmul_f64(std::size_t m, std::size_t k, std::size_t n,
                const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 2 <= n; j += 2) {
            float64x2_t s = vld1q_f64(crow + j);
            for (std::size_t p = 0; p < k; ++p)
                s = vfmaq_n_f64(s, vld1q_f64(b + p * n + j), arow[p]);
            vst1q_f64(crow + j, s);
        }
        for (; j < n; ++j) {
            double s = crow[j];
            for (std::size_t p = 0; p < k; ++p)
                s = std::fma(arow[p], b[p * n + j], s);
            crow[j] = s;
        }
    }
}

}  // namespace

const Table<float>& neon_table_f32() {
    static constexpr Table<float> t{axpy_f32, add_f32,  sub_f32,
                                    mul_f32,  mul_acc_f32, scale_f32,
                                    relu_f32, relu_bwd_f32, matmul_f32};
    return t;
}

const Table<double>& neon_table_f64() {
    static constexpr Table<double> t{axpy_f64, add_f64,  sub_f64,
                                     mul_f64,  mul_acc_f64, scale_f64,
                                     relu_f64, relu_bwd_f64, matmul_f64};
    return t;
}

}  // namespace tntk::kernels

#endif  // aarch64 NEON
