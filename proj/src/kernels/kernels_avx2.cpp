// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86-64 and only entered when the dispatcher verified both
// CPU features. Lane semantics match the scalar reference exactly: max with
// the zero operand second reproduces (x > 0 ? x : 0) including signed zeros
// and NaNs, blends reproduce the reference's conditional skips, and all
// multiply-accumulates are fused.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "tntk/kernels.hpp"

namespace tntk::kernels {

namespace {

// ---------------------------------------------------------------- float ----

void axpy_f32(std::size_t n, float a, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] = __builtin_fmaf(a, x[i], y[i]);
}

void add_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(x + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc_f32(std::size_t n, const float* x, const float* y, float* out) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 ov = _mm256_loadu_ps(out + i);
        ov = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), ov);
        _mm256_storeu_ps(out + i, ov);
    }
    for (; i < n; ++i) out[i] = __builtin_fmaf(x[i], y[i], out[i]);
}

void scale_f32(std::size_t n, float a, float* x) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), av));
    for (; i < n; ++i) x[i] *= a;
}

void relu_f32(std::size_t n, const float* x, float* out) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32(std::size_t n, const float* x, const float* dy, float* dx) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 xv = _mm256_loadu_ps(x + i);
        __m256 dv = _mm256_loadu_ps(dx + i);
        __m256 sum = _mm256_add_ps(dv, _mm256_loadu_ps(dy + i));
        __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_blendv_ps(dv, sum, mask));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) dx[i] += dy[i];
}

// 4x8 register tile, k innermost; tails fall back to narrower code with the
// same per-element accumulation order.
void matmul_f32(std::size_t m, std::size_t k, std::size_t n,
                const float* a, const float* b, float* c) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const float* a0 = a + i * k;
        const float* a1 = a0 + k;
        const float* a2 = a1 + k;
        const float* a3 = a2 + k;
        float* c0 = c + i * n;
        float* c1 = c0 + n;
        float* c2 = c1 + n;
        float* c3 = c2 + n;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 s0 = _mm256_loadu_ps(c0 + j);
            __m256 s1 = _mm256_loadu_ps(c1 + j);
            __m256 s2 = _mm256_loadu_ps(c2 + j);
            __m256 s3 = _mm256_loadu_ps(c3 + j);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256 bv = _mm256_loadu_ps(b + p * n + j);
                s0 = _mm256_fmadd_ps(_mm256_set1_ps(a0[p]), bv, s0);
                s1 = _mm256_fmadd_ps(_mm256_set1_ps(a1[p]), bv, s1);
                s2 = _mm256_fmadd_ps(_mm256_set1_ps(a2[p]), bv, s2);
                s3 = _mm256_fmadd_ps(_mm256_set1_ps(a3[p]), bv, s3);
            }
            _mm256_storeu_ps(c0 + j, s0);
            _mm256_storeu_ps(c1 + j, s1);
            _mm256_storeu_ps(c2 + j, s2);
            _mm256_storeu_ps(c3 + j, s3);
        }
        for (; j < n; ++j) {
            float s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
            for (std::size_t p = 0; p < k; ++p) {
                const float bv = b[p * n + j];
                s0 = __builtin_fmaf(a0[p], bv, s0);
                s1 = __builtin_fmaf(a1[p], bv, s1);
                s2 = __builtin_fmaf(a2[p], bv, s2);
                s3 = __builtin_fmaf(a3[p], bv, s3);
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    for (; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 s = _mm256_loadu_ps(crow + j);
            for (std::size_t p = 0; p < k; ++p)
                s = _mm256_fmadd_ps(_mm256_set1_ps(arow[p]),
                                    _mm256_loadu_ps(b + p * n + j), s);
            _mm256_storeu_ps(crow + j, s);
        }
        for (; j < n; ++j) {
            float s = crow[j];
            for (std::size_t p = 0; p < k; ++p)
                s = __builtin_fmaf(arow[p], b[p * n + j], s);
            crow[j] = s;
        }
    }
}

// --------------------------------------------------------------- double ----

void axpy_f64(std::size_t n, double a, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] = __builtin_fma(a, x[i], y[i]);
}

void add_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc_f64(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d ov = _mm256_loadu_pd(out + i);
        ov = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), ov);
        _mm256_storeu_pd(out + i, ov);
    }
    for (; i < n; ++i) out[i] = __builtin_fma(x[i], y[i], out[i]);
}

void scale_f64(std::size_t n, double a, double* x) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
    for (; i < n; ++i) x[i] *= a;
}

void relu_f64(std::size_t n, const double* x, double* out) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f64(std::size_t n, const double* x, const double* dy, double* dx) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d dv = _mm256_loadu_pd(dx + i);
        __m256d sum = _mm256_add_pd(dv, _mm256_loadu_pd(dy + i));
        __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_blendv_pd(dv, sum, mask));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) dx[i] += dy[i];
}

void matmul_f64(std::size_t m, std::size_t k, std::size_t n,
                const double* a, const double* b, double* c) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d s0 = _mm256_loadu_pd(c0 + j);
            __m256d s1 = _mm256_loadu_pd(c1 + j);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d bv = _mm256_loadu_pd(b + p * n + j);
                s0 = _mm256_fmadd_pd(_mm256_set1_pd(a0[p]), bv, s0);
                s1 = _mm256_fmadd_pd(_mm256_set1_pd(a1[p]), bv, s1);
            }
            _mm256_storeu_pd(c0 + j, s0);
            _mm256_storeu_pd(c1 + j, s1);
        }
        for (; j < n; ++j) {
            double s0 = c0[j], s1 = c1[j];
            for (std::size_t p = 0; p < k; ++p) {
                const double bv = b[p * n + j];
                s0 = __builtin_fma(a0[p], bv, s0);
                s1 = __builtin_fma(a1[p], bv, s1);
            }
            c0[j] = s0;
            c1[j] = s1;
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d s = _mm256_loadu_pd(crow + j);
            for (std::size_t p = 0; p < k; ++p)
                s = _mm256_fmadd_pd(_mm256_set1_pd(arow[p]),
                                    _mm256_loadu_pd(b + p * n + j), s);
            _mm256_storeu_pd(crow + j, s);
        }
        for (; j < n; ++j) {
            double s = crow[j];
            for (std::size_t p = 0; p < k; ++p)
                s = __builtin_fma(arow[p], b[p * n + j], s);
            crow[j] = s;
        }
    }
}

}  // namespace

const Table<float>& avx2_table_f32() {
    static constexpr Table<float> t{axpy_f32, add_f32,  sub_f32,
                                    mul_f32,  mul_acc_f32, scale_f32,
                                    relu_f32, relu_bwd_f32, matmul_f32};
    return t;
}

const Table<double>& avx2_table_f64() {
    static constexpr Table<double> t{axpy_f64, add_f64,  sub_f64,
                                     mul_f64,  mul_acc_f64, scale_f64,
                                     relu_f64, relu_bwd_f64, matmul_f64};
    return t;
}

}  // namespace tntk::kernels

#endif  // x86-64
