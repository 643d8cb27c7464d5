// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensor with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage. Values are
// immutable once an op has produced them; only the gradient buffer is
// written, and only during backward(). Parameters are leaf tensors with
// requires_grad set, updated in place by the optimizer between steps.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace depthconv {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class Tensor;

namespace detail {

struct TensorImpl;

// One recorded op. `backward` reads the output gradient and accumulates into
// the gradients of `inputs`.
struct Node {
    std::uint64_t seq = 0;
    std::string name;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(std::span<const double> out_grad)> backward;
    bool consumed = false;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty when absent
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves
};

}  // namespace detail

class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl().shape; }
    std::int64_t dim(std::size_t axis) const { return impl().shape.at(axis); }
    std::size_t rank() const { return impl().shape.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl().data.size()); }

    std::span<const double> data() const { return impl().data; }
    // Mutable access for leaves only (initialisation, optimizer updates).
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const { return impl().requires_grad; }
    void set_requires_grad(bool value);

    bool has_grad() const { return !impl().grad.empty(); }
    std::span<const double> grad() const { return impl().grad; }
    std::span<double> mutable_grad() const;
    void zero_grad() const;
    void clear_grad() const { impl().grad.clear(); }

    bool is_leaf() const { return impl().node == nullptr; }

    // Deep copy of values; the copy is a fresh leaf.
    Tensor clone(bool requires_grad = false) const;

    // Same storage identity.
    bool same(const Tensor& other) const { return impl_ == other.impl_; }

    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    detail::TensorImpl& impl() const;

    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, std::string,
                              std::function<void(std::span<const double>)>);
};

// Throws NonFiniteError naming `where` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const char* where);
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

// Creates an op result. When any input requires grad a tape node is recorded
// whose backward closure receives the output gradient; the closure accumulates
// into input gradients obtained through grad_of().
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::string name, std::function<void(std::span<const double>)> backward);

// Gradient buffer of an op input during the reverse sweep, or an empty span
// when that input does not require grad.
std::span<double> grad_of(const Tensor& t);

// Reverse sweep from a scalar loss. Fills grads of every reachable tensor that
// requires grad, then releases the tape. Leaf grads accumulate.
void backward(const Tensor& loss);

// Number of tape nodes currently reachable from `t` (test hook).
std::size_t graph_size(const Tensor& t);

// While alive, results are produced without recording the tape (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

}  // namespace depthconv
