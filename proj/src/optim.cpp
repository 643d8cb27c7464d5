// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace depthconv {

void sgd_step(std::vector<Tensor>& params, std::vector<std::vector<double>>& velocity, double lr,
              double momentum) {
    if (!std::isfinite(lr) || !std::isfinite(momentum)) throw std::invalid_argument("sgd: non-finite hyperparameter");
    if (velocity.size() != params.size()) velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw GraphError("sgd: parameter " + std::to_string(i) + " has no grad");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto& v = velocity[i];
        if (v.size() != static_cast<std::size_t>(p.numel())) v.assign(static_cast<std::size_t>(p.numel()), 0.0);
        const auto g = p.grad();
        auto data = p.mutable_data();
        for (std::size_t j = 0; j < data.size(); ++j) {
            v[j] = momentum * v[j] + g[j];
            data[j] -= lr * v[j];
        }
        require_finite(data, "sgd_step");
        p.zero_grad();
    }
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), velocity_(params_.size()), lr_(lr), momentum_(momentum) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        velocity_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
    }
}

void Sgd::step() { sgd_step(params_, velocity_, lr_, momentum_); }

void Sgd::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace depthconv
