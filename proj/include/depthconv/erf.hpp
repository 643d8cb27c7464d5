// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Effective receptive field: the input-gradient saliency of one output pixel.
#pragma once

#include "depthconv/image.hpp"
#include "depthconv/network.hpp"
#include "depthconv/scenegen.hpp"
#include "depthconv/tensor.hpp"

#include <functional>
#include <stdexcept>

namespace depthconv {

// The probed unit has no gradient path to the input; its radius is undefined.
class DeadUnitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ErfMap {
    Plane saliency;  // channel-summed |d y / d x|, normalised to sum 1
    Eigen::Index row = 0, col = 0;
    double depth = 0.0;  // depth at the probed pixel, 0 if unknown
    double radius = 0.0;
};

// Radius of the smallest disc centred on (row, col) holding `mass` of the saliency.
double erf_radius(const Plane& saliency, Eigen::Index row, Eigen::Index col, double mass = 0.95);

// `features` maps a [1, C, H, W] input to [1, D, H, W] pre-loss features; the
// probed unit is the channel sum of the features at (row, col).
ErfMap erf_probe(const std::function<Tensor(const Tensor&)>& features, const Tensor& input, Eigen::Index row,
                 Eigen::Index col, double depth = 0.0, double mass = 0.95);

// Probes a network on one sample; `depth` is the depth fed to the network
// (empty for a constant d0 plane).
ErfMap erf_probe(const Network& net, const Sample& sample, const DepthMap* depth, Eigen::Index row, Eigen::Index col);

}  // namespace depthconv
