// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// 3D-neighbourhood convolution.
//
// For an output pixel i with depth d_i the k x k tap grid is spaced by the
// scaled radius r_S = (d0 / d_i) * r0, so that the kernel covers a fixed
// metric neighbourhood, and every tap j is reweighted by a window of the depth
// difference d_j - d_i. Features at fractional tap positions are bilinearly
// interpolated:
//
//   y_i = b + sum_t L_ti * W_t * x(p_ti)  [+ sum_t E_t * x(i + r0 * n_t)]
//
// The optional second sum is the edge branch: an unweighted, unscaled
// convolution with its own weights, intended for the first layer only.
// Depth is an input, never differentiated.
#pragma once

#include "depthconv/geometry.hpp"
#include "depthconv/image.hpp"
#include "depthconv/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace depthconv {

enum class WindowKind { gaussian, step, exp_decay };
enum class ScaleMode { off, discretized, bilinear };

std::string to_string(WindowKind kind);
std::string to_string(ScaleMode mode);
WindowKind parse_window_kind(const std::string& s);
ScaleMode parse_scale_mode(const std::string& s);

struct WindowSpec {
    WindowKind kind = WindowKind::gaussian;
    double sigma = 0.3;  // metres; gaussian width or step cutoff
    double alpha = 1.0;  // 1/metres; exp-decay rate

    void validate() const;
};

// Weight in [0, 1] of a tap at depth d_j for a centre at depth d_i.
//   gaussian:  exp(-((d_j - d_i) / sigma)^2)
//   step:      |d_j - d_i| <= sigma
//   exp-decay: exp(-alpha * |d_j - d_i|)
// An invalid d_i or d_j gives 1.
double locality_weight(double d_j, double d_i, const WindowSpec& window);

struct DnConvConfig {
    int kernel = 3;
    double r0 = 1.0;  // base tap spacing in pixels at canonical depth
    double d0 = 2.0;  // canonical depth, metres
    WindowSpec window;
    bool locality = true;  // false: all tap weights are 1
    ScaleMode scale = ScaleMode::bilinear;
    bool edge_branch = false;
    ClampBand clamp;

    void validate() const;
    int taps() const { return kernel * kernel; }
};

// Tap layout for one output pixel. Positions are in (u, v) pixel
// coordinates of the layer, before any border handling; tap depths are
// sampled with border clamping.
struct TapGrid {
    std::vector<Eigen::Vector2d> positions;
    std::vector<Eigen::Vector2i> offsets;  // (column, row) index relative to the centre tap
    std::vector<double> depths;
    std::vector<double> weights;
    double spacing = 1.0;
};

// Tap spacing used at a pixel of depth d_i.
double tap_spacing(double d_i, const DnConvConfig& cfg);

TapGrid sample_offsets(Eigen::Index row, Eigen::Index col, const DepthMap& depth, const DnConvConfig& cfg);

// Bilinear interpolation with border-clamped corner indices.
double bilinear_sample(const Plane& map, double u, double v);
// Bilinear interpolation where corners outside the plane read as zero.
double bilinear_sample_zero(const Plane& map, double u, double v);
// Bilinear depth interpolation that ignores holes among the corners;
// returns 0 when every contributing corner is a hole.
double bilinear_sample_depth(const DepthMap& depth, double u, double v);

struct DnConvLayer {
    DnConvConfig config;
    Tensor weight;       // [D, k, k, C]
    Tensor bias;         // [D]
    Tensor edge_weight;  // [D, k, k, C] when config.edge_branch, undefined otherwise

    std::int64_t in_channels() const { return weight.dim(3); }
    std::int64_t out_channels() const { return weight.dim(0); }
    std::vector<Tensor> parameters() const;
    std::int64_t parameter_count() const;

    // He-uniform weights, zero bias.
    static DnConvLayer create(std::int64_t in_channels, std::int64_t out_channels, const DnConvConfig& cfg,
                              std::mt19937_64& rng);
};

// Per-pixel gather plan: for each (pixel, tap) up to four input pixels and
// their weights (bilinear corner weight times locality weight). Index -1
// marks an unused corner.
struct SamplingPlan {
    std::int64_t height = 0, width = 0, taps = 0;
    std::vector<std::int32_t> index;  // [pixel][tap][4]
    std::vector<double> weight;       // [pixel][tap][4]
};

SamplingPlan build_dnconv_plan(const DepthMap& depth, const DnConvConfig& cfg);
// Integer grid with the given spacing, zero padding, unit weights.
SamplingPlan build_grid_plan(std::int64_t height, std::int64_t width, int kernel, double spacing);

struct DnConvState {
    std::vector<SamplingPlan> plans;  // one per sample
    SamplingPlan edge_plan;           // shared; empty without edge branch
};

struct DnConvGrads {
    std::vector<double> input, weight, edge_weight, bias;
};

// x: [N, C, H, W]; depth: N maps of H x W. Activation is left to the caller.
Tensor dnconv_forward(const Tensor& x, std::span<const DepthMap> depth, const DnConvLayer& layer);

// Same, also returning the state needed by dnconv_backward.
Tensor dnconv_forward(const Tensor& x, std::span<const DepthMap> depth, const DnConvLayer& layer,
                      DnConvState& state);

// Exact adjoint of the forward map for upstream gradient `grad_out` ([N, D, H, W]).
// The input gradient is left empty when `input_grad` is false.
DnConvGrads dnconv_backward(std::span<const double> grad_out, const DnConvState& state, const DnConvLayer& layer,
                            const Tensor& x, bool input_grad = true);

// Stride-1 zero-padded "same" convolution with weights [D, k, k, C].
Tensor standard_conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, double dilation = 1.0);

}  // namespace depthconv
