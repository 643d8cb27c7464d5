// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Binary ops never broadcast: shapes must match
// exactly, or the second operand is a plain scalar.
#pragma once

#include "depthconv/image.hpp"
#include "depthconv/tensor.hpp"

#include <span>

namespace depthconv {

enum class ElementwiseKind { add, mul, relu, scale };

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// d/dx relu at 0 is taken as 0.
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);

// Dispatching form; `b` is ignored for relu, and must be scalar-shaped for scale.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// 2x2 stride-2 max pooling over NCHW. Gradient goes to the first maximal
// element of each window.
Tensor maxpool2(const Tensor& x);
// Bilinear 2x upsampling over NCHW with half-pixel centres and edge clamping.
Tensor upsample2(const Tensor& x);

// Mean negative log-likelihood over pixels whose label is not `ignore_label`.
// logits: [N,K,H,W]; labels: N maps of HxW.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const LabelMap> labels,
                             std::int32_t ignore_label = kIgnoreLabel);

// Per-pixel argmax over the channel axis of [N,K,H,W].
std::vector<LabelMap> argmax_channels(const Tensor& logits);

}  // namespace depthconv
