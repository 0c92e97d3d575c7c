#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "tntk/error.hpp"
#include "tntk/kernels.hpp"

namespace tntk::kernels {

const Table<float>& scalar_table_f32();
const Table<double>& scalar_table_f64();

#if defined(__x86_64__) || defined(_M_X64)
const Table<float>& avx2_table_f32();
const Table<double>& avx2_table_f64();
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
const Table<float>& neon_table_f32();
const Table<double>& neon_table_f64();
#endif

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "?";
}

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(__aarch64__) && defined(__ARM_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const Table<float>& f32(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return scalar_table_f32();
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            if (isa_supported(Isa::avx2)) return avx2_table_f32();
#endif
            break;
        case Isa::neon:
#if defined(__aarch64__) && defined(__ARM_NEON)
            return neon_table_f32();
#else
            break;
#endif
    }
    throw ValueError(std::string("kernel isa '") + isa_name(isa) +
                     "' is not supported on this host");
}

const Table<double>& f64(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return scalar_table_f64();
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            if (isa_supported(Isa::avx2)) return avx2_table_f64();
#endif
            break;
        case Isa::neon:
#if defined(__aarch64__) && defined(__ARM_NEON)
            return neon_table_f64();
#else
            break;
#endif
    }
    throw ValueError(std::string("kernel isa '") + isa_name(isa) +
                     "' is not supported on this host");
}

namespace {

Isa best_isa() {
    if (isa_supported(Isa::avx2)) return Isa::avx2;
    if (isa_supported(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

Isa initial_isa() {
    const char* env = std::getenv("TNTK_KERNELS");
    if (env == nullptr || std::strcmp(env, "auto") == 0) return best_isa();
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
        if (std::strcmp(env, isa_name(isa)) == 0) {
            if (isa_supported(isa)) return isa;
            std::fprintf(stderr,
                         "tntk: TNTK_KERNELS=%s unsupported on this host, "
                         "falling back to %s\n",
                         env, isa_name(best_isa()));
            return best_isa();
        }
    }
    std::fprintf(stderr, "tntk: unknown TNTK_KERNELS value '%s', using auto\n",
                 env);
    return best_isa();
}

struct Active {
    const Table<float>* t32;
    const Table<double>* t64;
    Isa isa;
};

Active& active() {
    static Active a = [] {
        const Isa isa = initial_isa();
        return Active{&f32(isa), &f64(isa), isa};
    }();
    return a;
}

}  // namespace

const Table<float>& f32() { return *active().t32; }
const Table<double>& f64() { return *active().t64; }

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) {
    active() = Active{&f32(isa), &f64(isa), isa};
}

}  // namespace tntk::kernels
