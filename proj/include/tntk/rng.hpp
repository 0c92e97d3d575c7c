#pragma once

#include <cmath>
#include <cstdint>

namespace tntk {

// splitmix64-based generator. Hand-rolled so that streams are identical
// across platforms and standard libraries; determinism of the whole pipeline
// rests on it.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool chance(double p) { return uniform() < p; }

    // Derive an independent stream, e.g. per sample index.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        Rng r(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
        r.next_u64();
        return r.next_u64() ^ b;
    }

  private:
    std::uint64_t state_;
};

}  // namespace tntk
