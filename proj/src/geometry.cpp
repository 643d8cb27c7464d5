// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/geometry.hpp"

#include <algorithm>

namespace depthconv {

void SigmaSchedule::validate() const {
    if (!(sigma0 > 0.0)) throw GeometryError("sigma schedule: sigma0 must be positive");
    double prev = 1.0;
    for (double s : downsampling) {
        if (!(s >= 1.0)) throw GeometryError("sigma schedule: downsampling factors must be >= 1");
        if (s < prev) throw GeometryError("sigma schedule: downsampling must be non-decreasing");
        prev = s;
    }
}

double SigmaSchedule::sigma(std::size_t layer) const { return sigma_for_layer(*this, downsampling.at(layer)); }

double sigma_for_layer(const SigmaSchedule& schedule, double downsampling) {
    if (!(downsampling >= 1.0)) throw GeometryError("sigma_for_layer: downsampling must be >= 1");
    return schedule.sigma0 * downsampling;
}

DepthMap downsample_depth(const DepthMap& depth) {
    const auto h = depth.height() / 2, w = depth.width() / 2;
    if (depth.height() % 2 != 0 || depth.width() % 2 != 0) {
        throw GeometryError("downsample_depth: odd extent");
    }
    DepthMap out(h, w, 0.0);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            double total = 0.0;
            int count = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    if (depth.valid(2 * y + dy, 2 * x + dx)) {
                        total += depth.values(2 * y + dy, 2 * x + dx);
                        ++count;
                    }
                }
            }
            out.values(y, x) = count ? total / count : 0.0;
        }
    }
    return out;
}

double median_valid_depth(std::span<const DepthMap> maps) {
    std::vector<double> all;
    for (const auto& m : maps) {
        for (Eigen::Index i = 0; i < m.values.size(); ++i) {
            const double d = m.values.data()[i];
            if (DepthMap::is_valid_depth(d)) all.push_back(d);
        }
    }
    if (all.empty()) throw GeometryError("median_valid_depth: no valid depth");
    const auto mid = all.begin() + static_cast<std::ptrdiff_t>((all.size() - 1) / 2);
    std::nth_element(all.begin(), mid, all.end());
    return *mid;
}

}  // namespace depthconv
