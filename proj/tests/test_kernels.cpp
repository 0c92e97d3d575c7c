#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "tntk/kernels.hpp"
#include "tntk/rng.hpp"

using tntk::Rng;
namespace kn = tntk::kernels;

namespace {

template <class T>
std::vector<T> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                          double hi = 2.0) {
    std::vector<T> v(n);
    for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
    return v;
}

// Independent matmul oracle: per-element dot products accumulated in double.
template <class T>
std::vector<T> matmul_oracle(std::size_t m, std::size_t k, std::size_t n,
                             const std::vector<T>& a, const std::vector<T>& b,
                             const std::vector<T>& c0) {
    std::vector<T> c = c0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = static_cast<double>(c0[i * n + j]);
            for (std::size_t p = 0; p < k; ++p)
                acc += static_cast<double>(a[i * k + p]) *
                       static_cast<double>(b[p * n + j]);
            c[i * n + j] = static_cast<T>(acc);
        }
    return c;
}

template <class T>
const kn::Table<T>& table(kn::Isa isa);

template <>
const kn::Table<float>& table<float>(kn::Isa isa) { return kn::f32(isa); }
template <>
const kn::Table<double>& table<double>(kn::Isa isa) { return kn::f64(isa); }

template <class T>
void check_equivalence(kn::Isa isa) {
    const auto& ref = table<T>(kn::Isa::scalar);
    const auto& alt = table<T>(isa);
    Rng rng(0x5eedULL + static_cast<std::uint64_t>(isa));

    // deliberately awkward lengths to exercise the vector tails
    for (std::size_t n : {std::size_t(1), std::size_t(7), std::size_t(8),
                          std::size_t(9), std::size_t(31), std::size_t(200)}) {
        auto x = random_vec<T>(rng, n);
        auto y = random_vec<T>(rng, n);
        const T a = static_cast<T>(rng.uniform(-3.0, 3.0));

        auto y1 = y, y2 = y;
        ref.axpy(n, a, x.data(), y1.data());
        alt.axpy(n, a, x.data(), y2.data());
        CHECK(std::memcmp(y1.data(), y2.data(), n * sizeof(T)) == 0);

        std::vector<T> o1(n), o2(n);
        ref.add(n, x.data(), y.data(), o1.data());
        alt.add(n, x.data(), y.data(), o2.data());
        CHECK(std::memcmp(o1.data(), o2.data(), n * sizeof(T)) == 0);

        ref.sub(n, x.data(), y.data(), o1.data());
        alt.sub(n, x.data(), y.data(), o2.data());
        CHECK(std::memcmp(o1.data(), o2.data(), n * sizeof(T)) == 0);

        ref.mul(n, x.data(), y.data(), o1.data());
        alt.mul(n, x.data(), y.data(), o2.data());
        CHECK(std::memcmp(o1.data(), o2.data(), n * sizeof(T)) == 0);

        auto acc1 = y, acc2 = y;
        ref.mul_acc(n, x.data(), y.data(), acc1.data());
        alt.mul_acc(n, x.data(), y.data(), acc2.data());
        CHECK(std::memcmp(acc1.data(), acc2.data(), n * sizeof(T)) == 0);

        auto s1 = x, s2 = x;
        ref.scale(n, a, s1.data());
        alt.scale(n, a, s2.data());
        CHECK(std::memcmp(s1.data(), s2.data(), n * sizeof(T)) == 0);

        // mix in signed zeros for the relu edge
        auto xr = x;
        if (n > 2) { xr[1] = T(-0.0); xr[2] = T(0.0); }
        ref.relu(n, xr.data(), o1.data());
        alt.relu(n, xr.data(), o2.data());
        CHECK(std::memcmp(o1.data(), o2.data(), n * sizeof(T)) == 0);

        auto d1 = y, d2 = y;
        ref.relu_bwd(n, xr.data(), x.data(), d1.data());
        alt.relu_bwd(n, xr.data(), x.data(), d2.data());
        CHECK(std::memcmp(d1.data(), d2.data(), n * sizeof(T)) == 0);
    }

    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t m = 1 + rng.below(9);
        const std::size_t k = 1 + rng.below(17);
        const std::size_t n = 1 + rng.below(21);
        auto a = random_vec<T>(rng, m * k);
        auto b = random_vec<T>(rng, k * n);
        auto c = random_vec<T>(rng, m * n);
        auto c1 = c, c2 = c;
        ref.matmul(m, k, n, a.data(), b.data(), c1.data());
        alt.matmul(m, k, n, a.data(), b.data(), c2.data());
        CHECK(std::memcmp(c1.data(), c2.data(), m * n * sizeof(T)) == 0);
    }
}

}  // namespace

TEST_CASE("kernels: scalar matmul matches independent oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t m = 1 + rng.below(8);
        const std::size_t k = 1 + rng.below(12);
        const std::size_t n = 1 + rng.below(15);
        auto a = random_vec<double>(rng, m * k);
        auto b = random_vec<double>(rng, k * n);
        auto c0 = random_vec<double>(rng, m * n);
        auto expect = matmul_oracle(m, k, n, a, b, c0);
        auto got = c0;
        kn::f64(kn::Isa::scalar).matmul(m, k, n, a.data(), b.data(), got.data());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("kernels: axpy/mul_acc use fused multiply-add") {
    // A case where fma(a,x,y) differs from a*x+y in double rounding.
    const double a = 1.0 + 0x1.0p-30;
    const double x = 1.0 + 0x1.0p-29;
    double y1 = -1.0, y2 = -1.0;
    kn::f64(kn::Isa::scalar).axpy(1, a, &x, &y1);
    y2 = std::fma(a, x, y2);
    CHECK(y1 == y2);
}

TEST_CASE("kernels: SIMD variants are bit-identical to the reference") {
    bool any = false;
    for (kn::Isa isa : {kn::Isa::avx2, kn::Isa::neon}) {
        if (!kn::isa_supported(isa)) continue;
        any = true;
        check_equivalence<float>(isa);
        check_equivalence<double>(isa);
    }
    if (!any)
        MESSAGE("no SIMD isa supported on this host; reference-only run");
}

TEST_CASE("kernels: dispatcher override") {
    const kn::Isa before = kn::active_isa();
    kn::set_isa(kn::Isa::scalar);
    CHECK(kn::active_isa() == kn::Isa::scalar);
    kn::set_isa(before);
    CHECK(kn::active_isa() == before);
}
