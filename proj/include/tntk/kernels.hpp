#pragma once

#include <cstddef>

// Data-parallel arithmetic kernels behind a runtime-dispatched table.
//
// Every kernel has a scalar reference implementation and, where the host
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The variants
// are bit-identical to the reference by construction: vector lanes only ever
// map to independent output elements, per-element accumulation order is fixed
// (ascending k for matmul), and multiply-accumulate is always the correctly
// rounded fused op (std::fma in the reference, vfmadd/fmla in the variants).
// The whole library is therefore bitwise deterministic regardless of which
// table is active. Equivalence is enforced by tests/test_kernels.cpp.

namespace tntk::kernels {

enum class Isa { scalar = 0, avx2 = 1, neon = 2 };

template <class T>
struct Table {
    // y[i] = fma(a, x[i], y[i])
    void (*axpy)(std::size_t n, T a, const T* x, T* y);
    // out[i] = x[i] + y[i]
    void (*add)(std::size_t n, const T* x, const T* y, T* out);
    // out[i] = x[i] - y[i]
    void (*sub)(std::size_t n, const T* x, const T* y, T* out);
    // out[i] = x[i] * y[i]
    void (*mul)(std::size_t n, const T* x, const T* y, T* out);
    // out[i] = fma(x[i], y[i], out[i])
    void (*mul_acc)(std::size_t n, const T* x, const T* y, T* out);
    // x[i] *= a
    void (*scale)(std::size_t n, T a, T* x);
    // out[i] = max(x[i], 0)
    void (*relu)(std::size_t n, const T* x, T* out);
    // dx[i] += x[i] > 0 ? dy[i] : 0
    void (*relu_bwd)(std::size_t n, const T* x, const T* dy, T* dx);
    // C[M,N] += A[M,K] @ B[K,N], all row-major contiguous.
    // Contract: C[m,n] = fma(A[m,k], B[k,n], C[m,n]) applied in ascending k
    // order, starting from the incoming C[m,n].
    void (*matmul)(std::size_t m, std::size_t k, std::size_t n,
                   const T* a, const T* b, T* c);
};

// Active table (selected at startup, see below).
const Table<float>& f32();
const Table<double>& f64();

// Table for an explicit ISA; throws ValueError if unsupported on this host.
const Table<float>& f32(Isa isa);
const Table<double>& f64(Isa isa);

bool isa_supported(Isa isa);
const char* isa_name(Isa isa);

// Selection: highest supported ISA by default; the TNTK_KERNELS environment
// variable ("scalar", "avx2", "neon", "auto") overrides, as does set_isa().
Isa active_isa();
void set_isa(Isa isa);

}  // namespace tntk::kernels
