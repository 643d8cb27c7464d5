// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/erf.hpp"

#include "depthconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace depthconv {

double erf_radius(const Plane& saliency, Eigen::Index row, Eigen::Index col, double mass) {
    const double total = saliency.sum();
    if (!(total > 0.0)) throw DeadUnitError("erf_radius: zero saliency");
    std::vector<std::pair<double, double>> by_distance;  // (squared distance, value)
    for (Eigen::Index y = 0; y < saliency.rows(); ++y) {
        for (Eigen::Index x = 0; x < saliency.cols(); ++x) {
            const double dy = static_cast<double>(y - row), dx = static_cast<double>(x - col);
            by_distance.emplace_back(dy * dy + dx * dx, saliency(y, x));
        }
    }
    std::sort(by_distance.begin(), by_distance.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < by_distance.size(); ++i) {
        acc += by_distance[i].second;
        const bool last_at_distance = i + 1 == by_distance.size() || by_distance[i + 1].first != by_distance[i].first;
        if (last_at_distance && acc >= mass * total * (1.0 - 1e-12)) return std::sqrt(by_distance[i].first);
    }
    return std::sqrt(by_distance.back().first);
}

ErfMap erf_probe(const std::function<Tensor(const Tensor&)>& features, const Tensor& input, Eigen::Index row,
                 Eigen::Index col, double depth, double mass) {
    if (input.rank() != 4 || input.dim(0) != 1) throw ShapeError("erf_probe: expected a [1,C,H,W] input");
    const auto x = input.clone(true);
    const auto y = features(x);
    if (y.rank() != 4 || y.dim(0) != 1) throw ShapeError("erf_probe: features must be [1,D,H,W]");
    const auto d = y.dim(1), h = y.dim(2), w = y.dim(3);
    if (row < 0 || row >= h || col < 0 || col >= w) {
        throw std::out_of_range("erf_probe: pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                                ") outside the " + std::to_string(h) + "x" + std::to_string(w) + " output");
    }
    auto selector = Tensor::zeros(y.shape());
    for (std::int64_t c = 0; c < d; ++c) selector.mutable_data()[static_cast<std::size_t>((c * h + row) * w + col)] = 1.0;
    const auto unit = sum(mul(y, selector));
    if (!unit.requires_grad()) throw DeadUnitError("erf_probe: output does not depend on the input");
    backward(unit);

    const auto ih = x.dim(2), iw = x.dim(3), hw = ih * iw;
    ErfMap map;
    map.saliency = Plane::Zero(ih, iw);
    const auto g = x.grad();
    for (std::int64_t c = 0; c < x.dim(1); ++c) {
        for (std::int64_t i = 0; i < hw; ++i) map.saliency.data()[i] += std::abs(g[static_cast<std::size_t>(c * hw + i)]);
    }
    const double total = map.saliency.sum();
    if (!(total > 0.0)) throw DeadUnitError("erf_probe: dead unit (zero input gradient)");
    map.saliency /= total;
    map.row = row;
    map.col = col;
    map.depth = depth;
    map.radius = erf_radius(map.saliency, row, col, mass);
    return map;
}

ErfMap erf_probe(const Network& net, const Sample& sample, const DepthMap* depth, Eigen::Index row, Eigen::Index col) {
    const RgbImage* images[] = {&sample.rgb};
    std::vector<DepthMap> d;
    if (depth) d.push_back(*depth);
    double probed = 0.0;
    if (row >= 0 && row < sample.depth.height() && col >= 0 && col < sample.depth.width()) {
        probed = (depth ? *depth : sample.depth).values(row, col);
    }
    return erf_probe([&](const Tensor& x) { return net.features(x, d); }, rgb_batch(images), row, col, probed);
}

}  // namespace depthconv
