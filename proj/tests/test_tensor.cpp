#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "tntk/ops.hpp"
#include "tntk/tensor.hpp"

using namespace tntk;

TEST_CASE("tensor: element count must match shape") {
    CHECK_THROWS_AS(Tensor<float>::from({2, 3}, {1.f, 2.f}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>::zeros({0, 3}), ShapeError);
    auto t = Tensor<float>::from({2, 2}, {1.f, 2.f, 3.f, 4.f});
    CHECK(t.size() == 4);
    CHECK(t.rank() == 2);
}

TEST_CASE("backward: loss = sum(x) gives all-ones gradient") {
    Tape<double> tape;
    auto x = Tensor<double>::from({3}, {1.0, -2.0, 5.0}, true);
    auto loss = sum(tape, x);
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);
    CHECK(tape.size() == 0);  // consumed
}

TEST_CASE("backward: loss = sum(x*x) at [1,2] gives [2,4]") {
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
    auto loss = sum(tape, mul(tape, x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward: non-scalar loss is a usage error") {
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
    auto y = mul(tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("backward: tensors off the loss path keep zero/absent gradient") {
    Tape<double> tape;
    auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
    auto y = Tensor<double>::from({2}, {3.0, 4.0}, true);
    auto on_path = mul(tape, x, x);
    auto off_path = mul(tape, y, y);  // recorded but never reaches the loss
    auto loss = sum(tape, on_path);
    tape.backward(loss);
    CHECK(x.has_grad());
    if (y.has_grad())
        for (double g : y.grad()) CHECK(g == 0.0);
    CHECK(off_path.defined());
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
    Rng rng(11);
    auto x = testsup::random_tensor<float>(rng, {4, 9});
    Tape<float> t1(false), t2(false);
    auto a = softmax(t1, x, 1);
    auto b = softmax(t2, x, 1);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("tape: recording can be disabled for inference") {
    Tape<float> tape(false);
    auto x = Tensor<float>::from({2}, {1.f, 2.f}, true);
    auto y = mul(tape, x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(tape.size() == 0);
}
