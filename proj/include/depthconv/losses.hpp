// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Depth regression losses on predictions of shape [N, 1, H, W] against N
// ground-truth maps. Both are means over the eligible pixels of the batch.
#pragma once

#include "depthconv/geometry.hpp"
#include "depthconv/tensor.hpp"

#include <span>

namespace depthconv {

struct LossConfig {
    double lambda_grad = 1.0;

    void validate() const;
};

// Mean |d - d_hat| over valid ground-truth pixels.
Tensor loss_depth(const Tensor& pred, std::span<const DepthMap> gt);

// Mean over pixels with a valid forward-difference stencil of
// |dx d - dx d_hat| + |dy d - dy d_hat|.
Tensor loss_grad(const Tensor& pred, std::span<const DepthMap> gt);

// loss_depth + lambda_grad * loss_grad
Tensor total_depth_loss(const Tensor& pred, std::span<const DepthMap> gt, const LossConfig& cfg);

}  // namespace depthconv
