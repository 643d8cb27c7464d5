// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace depthconv {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool g_grad_enabled = true;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto extent : shape) {
        if (extent < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
        n *= extent;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void require_finite(std::span<const double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFiniteError(std::string(where) + ": non-finite value");
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(where) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
    }
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
    }
    require_finite(data, "Tensor");
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), 0.0),
                  requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), value),
                  requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of undefined Tensor");
    return *impl_;
}

std::span<double> Tensor::mutable_data() {
    if (!is_leaf()) throw GraphError("mutable_data on a non-leaf tensor");
    return impl().data;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return impl().data[0];
}

void Tensor::set_requires_grad(bool value) {
    if (!is_leaf()) throw GraphError("requires_grad can only be changed on leaves");
    impl().requires_grad = value;
}

std::span<double> Tensor::mutable_grad() const {
    auto& t = impl();
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

void Tensor::zero_grad() const {
    auto& t = impl();
    std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const { return Tensor(shape(), impl().data, requires_grad); }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, std::string name,
                   std::function<void(std::span<const double>)> backward_fn) {
    require_finite(data, name.c_str());
    auto impl = std::make_shared<detail::TensorImpl>();
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError(name + ": result length does not match " + shape_string(shape));
    }
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    const bool needs_grad = g_grad_enabled &&
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (needs_grad) {
        auto node = std::make_shared<detail::Node>();
        node->seq = g_next_seq.fetch_add(1);
        node->name = std::move(name);
        for (const auto& in : inputs) {
            if (in.impl_ptr()->node && in.impl_ptr()->node->consumed) {
                throw GraphError(node->name + ": input belongs to a consumed graph");
            }
            node->inputs.push_back(in.impl_ptr());
        }
        node->backward = std::move(backward_fn);
        impl->node = std::move(node);
        impl->requires_grad = true;
    }
    return Tensor(std::move(impl));
}

std::span<double> grad_of(const Tensor& t) {
    auto& impl = *t.impl_ptr();
    if (!impl.requires_grad) return {};
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
    return impl.grad;
}

namespace {

std::vector<detail::TensorImpl*> reachable_results(detail::TensorImpl* root) {
    std::vector<detail::TensorImpl*> out;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<detail::TensorImpl*> stack{root};
    while (!stack.empty()) {
        auto* t = stack.back();
        stack.pop_back();
        if (!t->node || t->node->consumed || !seen.insert(t).second) continue;
        out.push_back(t);
        for (const auto& in : t->node->inputs) stack.push_back(in.get());
    }
    return out;
}

}  // namespace

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw GraphError("backward() requires a scalar loss, got shape " +
                                            shape_string(loss.shape()));
    auto* root = loss.impl_ptr().get();
    if (root->node && root->node->consumed) throw GraphError("backward(): graph already consumed");
    if (!root->requires_grad) return;

    auto order = reachable_results(root);
    // Reverse of execution order: later ops first.
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->node->seq > b->node->seq; });

    if (root->grad.empty()) root->grad.assign(1, 0.0);
    root->grad[0] += 1.0;

    for (auto* t : order) {
        if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
        t->node->backward(t->grad);
    }

    // Hold every reachable tensor until the whole tape is released.
    std::vector<std::shared_ptr<detail::TensorImpl>> keep_alive;
    for (auto* t : order) {
        for (const auto& in : t->node->inputs) keep_alive.push_back(in);
    }
    for (auto* t : order) {
        t->node->consumed = true;
        t->node->inputs.clear();
        t->node->backward = nullptr;
        if (t != root) std::vector<double>().swap(t->grad);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::size_t graph_size(const Tensor& t) {
    if (!t.defined()) return 0;
    return reachable_results(t.impl_ptr().get()).size();
}

}  // namespace depthconv
