#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "tntk/ops.hpp"

using namespace tntk;
using testsup::gradcheck;
using testsup::random_tensor;

TEST_CASE("softmax: equal logits of length 4 give 0.25 each") {
    Tape<double> tape;
    auto x = Tensor<double>::full({4}, 1.7);
    auto y = softmax(tape, x, 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(0.25));
}

TEST_CASE("softmax: nonnegative, sums to one along the axis") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_tensor<double>(rng, {3, 5, 4}, -50.0, 50.0);
        const int axis = static_cast<int>(rng.below(3));
        Tape<double> tape;
        auto y = softmax(tape, x, axis);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] >= 0.0);
        std::size_t outer = 1, extent = 1, inner = 1;
        detail::axis_extents(x, axis, outer, extent, inner);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                double s = 0.0;
                for (std::size_t a = 0; a < extent; ++a)
                    s += y[o * extent * inner + a * inner + i];
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
    }
}

TEST_CASE("softmax: gradient matches finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        auto x = random_tensor<double>(rng, {2, 6}, -2.0, 2.0, true);
        auto w = random_tensor<double>(rng, {2, 6});
        gradcheck([&](Tape<double>& t) { return sum(t, mul(t, softmax(t, x, 1), w)); },
                  {x});
    }
}

TEST_CASE("cross_entropy: rejects target probabilities outside [0,1]") {
    Tape<double> tape;
    auto p = Tensor<double>::full({3}, 0.5);
    auto q = Tensor<double>::from({3}, {0.2, 1.4, -0.6});
    CHECK_THROWS_AS(cross_entropy(tape, p, q, 0), ValueError);
}

TEST_CASE("cross_entropy: value and gradient") {
    Tape<double> tape;
    auto p = Tensor<double>::from({2}, {0.25, 0.75}, true);
    auto q = Tensor<double>::from({2}, {0.0, 1.0});
    auto ce = cross_entropy(tape, p, q, 0);
    CHECK(ce.item() == doctest::Approx(-std::log(0.75)));

    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        auto pr = random_tensor<double>(rng, {3, 4}, 0.05, 1.0, true);
        auto qr = random_tensor<double>(rng, {3, 4}, 0.0, 1.0, true);
        gradcheck([&](Tape<double>& t) { return sum(t, cross_entropy(t, pr, qr, 1)); },
                  {pr, qr});
    }
}

TEST_CASE("smooth_l1: closed-form values") {
    Tape<double> tape;
    auto x = Tensor<double>::from({3}, {0.0, 0.5, 2.0});
    auto y = smooth_l1(tape, x);
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(0.125));
    CHECK(y[2] == doctest::Approx(1.5));
}

TEST_CASE("smooth_l1: gradient matches finite differences") {
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        // keep away from the |x|=1 kink where FD is invalid
        auto x = Tensor<double>::zeros({12}, true);
        for (std::size_t i = 0; i < x.size(); ++i) {
            double v = rng.uniform(-3.0, 3.0);
            if (std::abs(std::abs(v) - 1.0) < 0.05) v += 0.2;
            x[i] = v;
        }
        gradcheck([&](Tape<double>& t) { return sum(t, smooth_l1(t, x)); }, {x});
    }
}

TEST_CASE("matmul / add_bias / activations: gradients") {
    Rng rng(17);
    for (int trial = 0; trial < 4; ++trial) {
        auto a = random_tensor<double>(rng, {3, 4}, -1.0, 1.0, true);
        auto b = random_tensor<double>(rng, {4, 5}, -1.0, 1.0, true);
        auto bias = random_tensor<double>(rng, {5}, -1.0, 1.0, true);
        auto w = random_tensor<double>(rng, {3, 5});
        gradcheck(
            [&](Tape<double>& t) {
                auto y = add_bias(t, matmul(t, a, b), bias);
                return sum(t, mul(t, tanh_act(t, y), w));
            },
            {a, b, bias});
        gradcheck(
            [&](Tape<double>& t) {
                auto y = matmul(t, a, b);
                return sum(t, mul(t, sigmoid(t, y), w));
            },
            {a, b});
    }
}

TEST_CASE("relu: gradient ignores non-positive inputs") {
    Rng rng(21);
    auto x = Tensor<double>::from({4}, {-2.0, -0.5, 0.7, 3.0}, true);
    gradcheck([&](Tape<double>& t) { return sum(t, relu(t, x)); }, {x});
}

TEST_CASE("scale, add, sub, add_n, mean: gradients") {
    Rng rng(23);
    auto a = random_tensor<double>(rng, {2, 3}, -1.0, 1.0, true);
    auto b = random_tensor<double>(rng, {2, 3}, -1.0, 1.0, true);
    gradcheck(
        [&](Tape<double>& t) {
            auto s = add_n(t, {add(t, a, b), sub(t, a, b), scale(t, a, 0.3)});
            return mean(t, mul(t, s, s));
        },
        {a, b});
}

TEST_CASE("shape ops: gradients flow through slice/stack/concat/reshape") {
    Rng rng(29);
    auto x = random_tensor<double>(rng, {3, 4, 2}, -1.0, 1.0, true);
    auto w = random_tensor<double>(rng, {24});
    gradcheck(
        [&](Tape<double>& t) {
            std::vector<Tensor<double>> rows;
            for (int i = 0; i < 3; ++i) rows.push_back(row_slice(t, x, i));
            auto re = stack_rows(t, rows);
            std::vector<Tensor<double>> cols;
            for (int j = 0; j < 4; ++j) cols.push_back(col_slice(t, re, j));
            auto rc = stack_cols(t, cols);
            auto cat = concat_last(t, {rc, rc});
            auto flat = reshape(t, cat, {48});
            auto half = detail::block_slice(t, flat, Shape{24}, 0, 24);
            return sum(t, mul(t, half, w));
        },
        {x});
}

TEST_CASE("mul_bcast_last: weighted channels and gradients") {
    Rng rng(31);
    auto x = random_tensor<double>(rng, {2, 2, 3}, -1.0, 1.0, true);
    auto w = random_tensor<double>(rng, {2, 2, 1}, 0.1, 1.0, true);
    Tape<double> tape;
    auto y = mul_bcast_last(tape, x, w);
    CHECK(y[0] == doctest::Approx(x[0] * w[0]));
    CHECK(y[5] == doctest::Approx(x[5] * w[1]));
    gradcheck([&](Tape<double>& t) { return sum(t, mul_bcast_last(t, x, w)); },
              {x, w});
}

TEST_CASE("shape mismatches raise structured errors") {
    Tape<double> tape;
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({3, 2});
    CHECK_THROWS_AS(add(tape, a, b), ShapeError);
    CHECK_THROWS_AS(matmul(tape, a, a), ShapeError);
}
