// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "depthconv/tensor.hpp"

#include <functional>
#include <vector>

namespace depthconv {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

class NonDeterministicError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Compares backward() gradients of the scalar `f` w.r.t. every tensor in
// `wrt` against central differences with step h. Relative error per
// coordinate is |a - n| / max(|a|, |n|, 1e-8). The tensors must be leaves;
// their values are perturbed in place and restored.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, double h = 1e-5);

// Single-input form: f receives x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace depthconv
