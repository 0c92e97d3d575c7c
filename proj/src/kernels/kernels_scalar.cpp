// Reference kernels. These define the numerical contract; the SIMD variants
// must reproduce them bit for bit (see kernels.hpp).

#include <cmath>

#include "tntk/kernels.hpp"

namespace tntk::kernels {

namespace {

template <class T>
void axpy_scalar(std::size_t n, T a, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

template <class T>
void add_scalar(std::size_t n, const T* x, const T* y, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void sub_scalar(std::size_t n, const T* x, const T* y, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

template <class T>
void mul_scalar(std::size_t n, const T* x, const T* y, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
void mul_acc_scalar(std::size_t n, const T* x, const T* y, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(x[i], y[i], out[i]);
}

template <class T>
void scale_scalar(std::size_t n, T a, T* x) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

template <class T>
void relu_scalar(std::size_t n, const T* x, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd_scalar(std::size_t n, const T* x, const T* dy, T* dx) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > T(0)) dx[i] += dy[i];
}

// Rank-1-update ordering (m, k, n): streams B rows, keeps the per-element
// accumulation in ascending k order as required by the kernel contract.
template <class T>
void matmul_scalar(std::size_t m, std::size_t k, std::size_t n,
                   const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

template <class T>
constexpr Table<T> make_table() {
    return Table<T>{axpy_scalar<T>,    add_scalar<T>,  sub_scalar<T>,
                    mul_scalar<T>,     mul_acc_scalar<T>, scale_scalar<T>,
                    relu_scalar<T>,    relu_bwd_scalar<T>, matmul_scalar<T>};
}

}  // namespace

const Table<float>& scalar_table_f32() {
    static constexpr Table<float> t = make_table<float>();
    return t;
}

const Table<double>& scalar_table_f64() {
    static constexpr Table<double> t = make_table<double>();
    return t;
}

}  // namespace tntk::kernels
