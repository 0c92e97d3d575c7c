#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tntk/error.hpp"
#include "tntk/kernels.hpp"

namespace tntk {

// Dense shapes, row-major. Feature maps use [N, H, W, C] throughout.
using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

namespace detail {

template <class T>
const kernels::Table<T>& kt();

template <>
inline const kernels::Table<float>& kt<float>() { return kernels::f32(); }

template <>
inline const kernels::Table<double>& kt<double>() { return kernels::f64(); }

}  // namespace detail

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
};

// Shared handle to a tensor node. Copies alias the same storage; ops always
// produce fresh nodes, so aliasing only matters for leaves (parameters).
template <class T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.n_ = std::make_shared<TensorNode<T>>();
        const std::size_t n = shape_numel(shape);
        t.n_->shape = std::move(shape);
        t.n_->value.assign(n, T(0));
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(Shape shape, T v) {
        Tensor t = zeros(std::move(shape));
        for (T& e : t.n_->value) e = v;
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data,
                       bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.n_ = std::make_shared<TensorNode<T>>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    bool defined() const { return static_cast<bool>(n_); }

    const Shape& shape() const { return node_ref().shape; }
    int rank() const { return static_cast<int>(shape().size()); }
    int dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return node_ref().value.size(); }

    const std::vector<T>& value() const { return node_ref().value; }
    std::vector<T>& value() { return node_ref().value; }
    const T* data() const { return node_ref().value.data(); }
    T* data() { return node_ref().value.data(); }

    bool requires_grad() const { return node_ref().requires_grad; }
    void set_requires_grad(bool b) { node_ref().requires_grad = b; }

    bool has_grad() const { return !node_ref().grad.empty(); }

    // Allocates a zeroed gradient buffer on first use.
    std::vector<T>& grad() {
        auto& n = node_ref();
        if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
        return n.grad;
    }

    const std::vector<T>& grad() const {
        const auto& n = node_ref();
        if (n.grad.empty())
            throw UsageError("gradient not materialized for this tensor");
        return n.grad;
    }

    void zero_grad() {
        auto& n = node_ref();
        for (T& g : n.grad) g = T(0);
    }

    void drop_grad() { node_ref().grad.clear(); }

    T item() const {
        if (size() != 1)
            throw UsageError("item() on tensor of shape " + shape_str(shape()));
        return value()[0];
    }

    T& operator[](std::size_t i) { return node_ref().value[i]; }
    const T& operator[](std::size_t i) const { return node_ref().value[i]; }

    const std::shared_ptr<TensorNode<T>>& node() const {
        node_ref();
        return n_;
    }

  private:
    TensorNode<T>& node_ref() const {
        if (!n_) throw UsageError("operation on an undefined tensor");
        return *n_;
    }

    std::shared_ptr<TensorNode<T>> n_;
};

// Reverse-mode tape. Ops append one entry per primitive application in
// forward order; backward() sweeps the entries once, in reverse, and clears
// the tape. An entry whose output never received gradient is skipped, which
// keeps tensors off the loss path at zero (or absent) gradient.
template <class T>
class Tape {
  public:
    Tape() = default;
    explicit Tape(bool recording) : recording_(recording) {}

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    void record(const Tensor<T>& out,
                std::function<void(const std::vector<T>&)> backward_fn) {
        entries_.push_back(Entry{out.node(), std::move(backward_fn)});
    }

    void backward(const Tensor<T>& loss) {
        if (loss.size() != 1)
            throw UsageError("backward requires a scalar loss, got shape " +
                             shape_str(loss.shape()));
        auto ln = loss.node();
        if (ln->grad.empty()) ln->grad.assign(1, T(0));
        ln->grad[0] += T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (it->out->grad.empty()) continue;
            it->fn(it->out->grad);
        }
        clear();
    }

    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

  private:
    struct Entry {
        std::shared_ptr<TensorNode<T>> out;
        std::function<void(const std::vector<T>&)> fn;
    };
    std::vector<Entry> entries_;
    bool recording_ = true;
};

namespace detail {

// Accumulate src into the node's gradient buffer.
template <class T>
inline void acc_grad(TensorNode<T>& n, const T* src, std::size_t count) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    kt<T>().axpy(count, T(1), src, n.grad.data());
}

}  // namespace detail

}  // namespace tntk
