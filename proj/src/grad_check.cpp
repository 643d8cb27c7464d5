// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace depthconv {

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, double h) {
    for (auto& t : wrt) {
        if (!t.is_leaf()) throw GraphError("grad_check: tensors must be leaves");
        t.set_requires_grad(true);
        t.clear_grad();
    }

    const Tensor first = f();
    const Tensor second = f();
    if (first.numel() != 1 || second.numel() != 1) throw GraphError("grad_check: f must be scalar-valued");
    if (first.item() != second.item()) {
        throw NonDeterministicError("grad_check: f is not deterministic");
    }
    backward(first);

    GradCheckResult result;
    for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
        auto& t = wrt[ti];
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        if (analytic.empty()) analytic.assign(static_cast<std::size_t>(t.numel()), 0.0);
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double plus = f().item();
            data[i] = saved - h;
            const double minus = f().item();
            data[i] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            const double err = std::abs(analytic[i] - numeric) / denom;
            if (err > result.max_rel_error) result = {err, ti, i, analytic[i], numeric};
        }
    }
    for (auto& t : wrt) t.clear_grad();
    return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    return grad_check([&] { return f(x); }, {x}, h).max_rel_error;
}

}  // namespace depthconv
