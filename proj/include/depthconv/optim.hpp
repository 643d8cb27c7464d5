// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "depthconv/tensor.hpp"

#include <vector>

namespace depthconv {

// SGD with heavy-ball momentum: v <- momentum * v + grad; p <- p - lr * v.
// Grads are zeroed after the update.
class Sgd {
public:
    Sgd(std::vector<Tensor> params, double lr, double momentum);

    void step();
    void zero_grad();

    double lr() const { return lr_; }
    double momentum() const { return momentum_; }
    const std::vector<Tensor>& params() const { return params_; }
    // One buffer per parameter, same length as its data.
    std::vector<std::vector<double>>& velocity() { return velocity_; }
    const std::vector<std::vector<double>>& velocity() const { return velocity_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
    double lr_;
    double momentum_;
};

// Free-function form of a single update.
void sgd_step(std::vector<Tensor>& params, std::vector<std::vector<double>>& velocity, double lr,
              double momentum);

}  // namespace depthconv
