// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace depthconv {

// Row-major so that (row, col) = (v, u) walks memory like an NCHW plane.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelMap = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::int32_t kIgnoreLabel = 255;

struct RgbImage {
    Plane r, g, b;

    Eigen::Index height() const { return r.rows(); }
    Eigen::Index width() const { return r.cols(); }
    const Plane& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }
    Plane& channel(int c) { return c == 0 ? r : (c == 1 ? g : b); }
};

}  // namespace depthconv
