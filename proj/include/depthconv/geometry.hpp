// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole camera algebra relating a metric 3D neighbourhood of radius sigma
// around a surface point to the image-space window and depth interval it
// covers.
#pragma once

#include "depthconv/image.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace depthconv {

class GeometryError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct CameraIntrinsics {
    double mu = 1.0;  // focal length, pixels
    double cu = 0.0;  // principal point, pixels
    double cv = 0.0;

    void validate() const {
        if (!(mu > 0.0) || !std::isfinite(mu)) throw GeometryError("camera: mu must be positive");
        if (!std::isfinite(cu) || !std::isfinite(cv)) throw GeometryError("camera: non-finite principal point");
    }

    // Principal point at the geometric image centre (pixel centres at integers).
    static CameraIntrinsics centered(double mu, int width, int height) {
        return {mu, 0.5 * (width - 1), 0.5 * (height - 1)};
    }
};

// Metric depth per pixel; values <= 0 (or non-finite) mark holes.
struct DepthMap {
    Plane values;

    DepthMap() = default;
    explicit DepthMap(Plane v) : values(std::move(v)) {}
    DepthMap(Eigen::Index height, Eigen::Index width, double fill) : values(Plane::Constant(height, width, fill)) {}

    Eigen::Index height() const { return values.rows(); }
    Eigen::Index width() const { return values.cols(); }
    bool valid(Eigen::Index y, Eigen::Index x) const { return is_valid_depth(values(y, x)); }

    static bool is_valid_depth(double d) { return d > 0.0 && std::isfinite(d); }
};

// Inclusive clamp band for the scaled radius, in multiples of r0.
struct ClampBand {
    double lo = 0.25;
    double hi = 8.0;
};

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

// (x, y, z) in camera coordinates -> (u, v, d).
template <typename Scalar>
Vector3<Scalar> project_point(const Vector3<Scalar>& p, const CameraIntrinsics& cam) {
    if (!(p.z() > Scalar(0))) throw GeometryError("project_point: point behind the camera");
    return {Scalar(cam.cu) + Scalar(cam.mu) * p.x() / p.z(), Scalar(cam.cv) + Scalar(cam.mu) * p.y() / p.z(),
            p.z()};
}

// (u, v, d) -> (x, y, z).
template <typename Scalar>
Vector3<Scalar> back_project(const Vector3<Scalar>& uvd, const CameraIntrinsics& cam) {
    const Scalar d = uvd.z();
    return {(uvd.x() - Scalar(cam.cu)) * d / Scalar(cam.mu), (uvd.y() - Scalar(cam.cv)) * d / Scalar(cam.mu), d};
}

// Scaled kernel radius (d0 / d) * r0, clamped to [lo, hi] * r0. Holes keep r0.
template <typename Scalar>
Scalar receptive_radius(Scalar d, Scalar d0, Scalar r0, const ClampBand& band = {}) {
    if (!(d0 > Scalar(0)) || !(r0 > Scalar(0))) throw GeometryError("receptive_radius: d0 and r0 must be positive");
    if (!DepthMap::is_valid_depth(static_cast<double>(d))) return r0;
    return std::clamp(d0 / d * r0, Scalar(band.lo) * r0, Scalar(band.hi) * r0);
}

struct ImageBox {
    double u_lo, u_hi, v_lo, v_hi;
    double half_width;
};

// Image window covered by a sigma-neighbourhood around the point seen at (u, v)
// with depth d: half-width mu * sigma / d.
inline ImageBox neighborhood_bounds_2d(double u, double v, double d, double sigma, const CameraIntrinsics& cam) {
    if (!DepthMap::is_valid_depth(d)) throw GeometryError("neighborhood_bounds_2d: invalid depth");
    if (sigma < 0.0) throw GeometryError("neighborhood_bounds_2d: negative sigma");
    const double hw = cam.mu * sigma / d;
    return {u - hw, u + hw, v - hw, v + hw, hw};
}

// Depth range [d - sigma, d + sigma] of the same neighbourhood.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> depth_interval(Scalar d, Scalar sigma) {
    if (sigma < Scalar(0)) throw GeometryError("depth_interval: negative sigma");
    return {d - sigma, d + sigma};
}

// Per-layer neighbourhood radius: sigma grows linearly with the cumulative
// spatial downsampling of the layer.
struct SigmaSchedule {
    double sigma0 = 0.3;
    std::vector<double> downsampling;  // s_l per layer, >= 1, non-decreasing

    void validate() const;
    double sigma(std::size_t layer) const;
};

double sigma_for_layer(const SigmaSchedule& schedule, double downsampling);

// 2x2 area average over valid pixels; a block without valid pixels becomes a hole.
DepthMap downsample_depth(const DepthMap& depth);

// Median over all valid pixels of all maps (lower median for even counts).
double median_valid_depth(std::span<const DepthMap> maps);

}  // namespace depthconv
