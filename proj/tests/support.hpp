#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "tntk/rng.hpp"
#include "tntk/tensor.hpp"

namespace testsup {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

template <class T>
tntk::Tensor<T> random_tensor(tntk::Rng& rng, tntk::Shape shape, double lo = -1.0,
                              double hi = 1.0, bool requires_grad = false) {
    tntk::Tensor<T> t = tntk::Tensor<T>::zeros(std::move(shape), requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Central-difference gradient check. `fwd` rebuilds the graph from the
// current leaf values on the tape it is given and returns a scalar loss.
// Checks every coordinate of every leaf (pass check_stride > 1 to subsample).
struct GradcheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

inline GradcheckResult gradcheck(
    const std::function<tntk::Tensor<double>(tntk::Tape<double>&)>& fwd,
    std::vector<tntk::Tensor<double>> leaves, double tol = 1e-4,
    double eps_base = 1e-5, std::size_t check_stride = 1) {
    for (auto& l : leaves) l.drop_grad();
    tntk::Tape<double> tape;
    tntk::Tensor<double> loss = fwd(tape);
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& l : leaves)
        analytic.push_back(l.has_grad() ? l.grad()
                                        : std::vector<double>(l.size(), 0.0));

    GradcheckResult res;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (std::size_t i = 0; i < leaf.size(); i += check_stride) {
            const double orig = leaf[i];
            const double eps = eps_base * std::max(1.0, std::abs(orig));
            leaf[i] = orig + eps;
            tntk::Tape<double> tp;
            const double fp = fwd(tp).item();
            leaf[i] = orig - eps;
            tntk::Tape<double> tm;
            const double fm = fwd(tm).item();
            leaf[i] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = analytic[li][i];
            ++res.checked;
            if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
            const double re = rel_err(an, fd);
            res.max_rel_err = std::max(res.max_rel_err, re);
            if (re >= tol) {
                CAPTURE(li);
                CAPTURE(i);
                CAPTURE(an);
                CAPTURE(fd);
                CHECK(re < tol);
                return res;
            }
        }
    }
    CHECK(res.max_rel_err < tol);
    return res;
}

}  // namespace testsup
