// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/dnconv.hpp"

#include "depthconv/parallel.hpp"
#include "depthconv/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>

namespace depthconv {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

struct Corners {
    std::array<std::int64_t, 4> col{}, row{};
    std::array<double, 4> weight{};
};

Corners bilinear_corners(double u, double v) {
    const double fu = std::floor(u), fv = std::floor(v);
    const double au = u - fu, av = v - fv;
    const auto c0 = static_cast<std::int64_t>(fu), r0 = static_cast<std::int64_t>(fv);
    Corners c;
    c.col = {c0, c0 + 1, c0, c0 + 1};
    c.row = {r0, r0, r0 + 1, r0 + 1};
    c.weight = {(1.0 - au) * (1.0 - av), au * (1.0 - av), (1.0 - au) * av, au * av};
    return c;
}

bool inside(std::int64_t row, std::int64_t col, std::int64_t h, std::int64_t w) {
    return row >= 0 && row < h && col >= 0 && col < w;
}

void require_depth_batch(const Tensor& x, std::span<const DepthMap> depth) {
    if (x.rank() != 4) throw ShapeError("dnconv: expected NCHW input, got " + shape_string(x.shape()));
    if (static_cast<std::int64_t>(depth.size()) != x.dim(0)) {
        throw ShapeError("dnconv: " + std::to_string(depth.size()) + " depth maps for batch of " +
                         std::to_string(x.dim(0)));
    }
    for (const auto& d : depth) {
        if (d.height() != x.dim(2) || d.width() != x.dim(3)) {
            throw ShapeError("dnconv: depth map " + std::to_string(d.height()) + "x" + std::to_string(d.width()) +
                             " does not match input " + shape_string(x.shape()));
        }
    }
}

void require_weight(const Tensor& weight, std::int64_t channels, const char* what) {
    if (weight.rank() != 4 || weight.dim(1) != weight.dim(2) || weight.dim(1) % 2 == 0) {
        throw ShapeError(std::string(what) + ": weight must be [D, k, k, C] with odd k, got " +
                         shape_string(weight.shape()));
    }
    if (weight.dim(3) != channels) {
        throw ShapeError(std::string(what) + ": weight expects " + std::to_string(weight.dim(3)) +
                         " input channels, input has " + std::to_string(channels));
    }
}

void set_tap(SamplingPlan& plan, std::int64_t pixel, std::int64_t tap, double u, double v, double scale) {
    const auto base = static_cast<std::size_t>((pixel * plan.taps + tap) * 4);
    const auto c = bilinear_corners(u, v);
    for (int k = 0; k < 4; ++k) {
        const bool used = c.weight[k] != 0.0 && inside(c.row[k], c.col[k], plan.height, plan.width);
        plan.index[base + k] = used ? static_cast<std::int32_t>(c.row[k] * plan.width + c.col[k]) : -1;
        plan.weight[base + k] = used ? scale * c.weight[k] : 0.0;
    }
}

SamplingPlan empty_plan(std::int64_t height, std::int64_t width, int taps) {
    SamplingPlan plan;
    plan.height = height;
    plan.width = width;
    plan.taps = taps;
    const auto n = static_cast<std::size_t>(height * width * taps * 4);
    plan.index.assign(n, -1);
    plan.weight.assign(n, 0.0);
    return plan;
}

// Patch matrix (pixels x taps*C): row p holds the gathered, weighted inputs of pixel p.
RowMatrix gather(const SamplingPlan& plan, const RowMatrix& pixels) {
    const auto channels = pixels.cols();
    const auto n_pix = plan.height * plan.width;
    RowMatrix cols = RowMatrix::Zero(n_pix, plan.taps * channels);
    for (std::int64_t p = 0; p < n_pix; ++p) {
        for (std::int64_t t = 0; t < plan.taps; ++t) {
            const auto base = static_cast<std::size_t>((p * plan.taps + t) * 4);
            auto seg = cols.row(p).segment(t * channels, channels);
            for (int k = 0; k < 4; ++k) {
                const auto idx = plan.index[base + k];
                if (idx >= 0) seg.noalias() += plan.weight[base + k] * pixels.row(idx);
            }
        }
    }
    return cols;
}

// Adjoint of gather: accumulates dcols into dpixels.
void scatter(const SamplingPlan& plan, const RowMatrix& dcols, RowMatrix& dpixels) {
    const auto channels = dpixels.cols();
    const auto n_pix = plan.height * plan.width;
    for (std::int64_t p = 0; p < n_pix; ++p) {
        for (std::int64_t t = 0; t < plan.taps; ++t) {
            const auto base = static_cast<std::size_t>((p * plan.taps + t) * 4);
            const auto seg = dcols.row(p).segment(t * channels, channels);
            for (int k = 0; k < 4; ++k) {
                const auto idx = plan.index[base + k];
                if (idx >= 0) dpixels.row(idx).noalias() += plan.weight[base + k] * seg;
            }
        }
    }
}

// Input sample s as (pixels x C).
RowMatrix sample_pixels(const Tensor& x, std::int64_t s) {
    const auto c = x.dim(1), hw = x.dim(2) * x.dim(3);
    return ConstRowMap(x.data().data() + s * c * hw, c, hw).transpose();
}

Tensor conv_with_plans(const Tensor& x, const Tensor& weight, const Tensor& bias, const Tensor* edge_weight,
                       std::shared_ptr<DnConvState> state, const char* name, const DnConvLayer& layer) {
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto d = weight.dim(0);
    const auto hw = h * w;
    const auto tc = weight.dim(1) * weight.dim(2) * c;
    std::vector<double> out(static_cast<std::size_t>(n * d * hw));

    const ConstRowMap wmat(weight.data().data(), d, tc);
    const Eigen::Map<const Eigen::VectorXd> bvec(bias.data().data(), d);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t s) {
        const RowMatrix pixels = sample_pixels(x, static_cast<std::int64_t>(s));
        RowMap y(out.data() + s * d * hw, d, hw);
        y.noalias() = wmat * gather(state->plans[s], pixels).transpose();
        if (edge_weight) {
            const ConstRowMap emat(edge_weight->data().data(), d, tc);
            y.noalias() += emat * gather(state->edge_plan, pixels).transpose();
        }
        y.colwise() += bvec;
    });

    std::vector<Tensor> inputs{x, weight, bias};
    if (edge_weight) inputs.push_back(*edge_weight);
    return make_result({n, d, h, w}, std::move(out), std::move(inputs), name,
                       [x, weight, bias, edge = edge_weight ? *edge_weight : Tensor(), state, layer](
                           std::span<const double> g) {
                           const auto grads = dnconv_backward(g, *state, layer, x, x.requires_grad());
                           auto accumulate = [](const Tensor& t, const std::vector<double>& src) {
                               if (!t.defined()) return;
                               auto dst = grad_of(t);
                               for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                           };
                           accumulate(x, grads.input);
                           accumulate(weight, grads.weight);
                           accumulate(bias, grads.bias);
                           accumulate(edge, grads.edge_weight);
                       });
}

}  // namespace

std::string to_string(WindowKind kind) {
    switch (kind) {
        case WindowKind::gaussian: return "gaussian";
        case WindowKind::step: return "step";
        case WindowKind::exp_decay: return "exp-decay";
    }
    return "?";
}

std::string to_string(ScaleMode mode) {
    switch (mode) {
        case ScaleMode::off: return "off";
        case ScaleMode::discretized: return "discretized-dilation";
        case ScaleMode::bilinear: return "bilinear";
    }
    return "?";
}

WindowKind parse_window_kind(const std::string& s) {
    if (s == "gaussian") return WindowKind::gaussian;
    if (s == "step") return WindowKind::step;
    if (s == "exp-decay" || s == "exp_decay") return WindowKind::exp_decay;
    throw std::invalid_argument("unknown window kind '" + s + "'");
}

ScaleMode parse_scale_mode(const std::string& s) {
    if (s == "off") return ScaleMode::off;
    if (s == "discretized-dilation" || s == "discretized") return ScaleMode::discretized;
    if (s == "bilinear") return ScaleMode::bilinear;
    throw std::invalid_argument("unknown scale mode '" + s + "'");
}

void WindowSpec::validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("window: sigma must be positive");
    if (kind == WindowKind::exp_decay && !(alpha > 0.0)) {
        throw std::invalid_argument("window: alpha must be positive for exp-decay");
    }
}

double locality_weight(double d_j, double d_i, const WindowSpec& window) {
    if (!DepthMap::is_valid_depth(d_i) || !DepthMap::is_valid_depth(d_j)) return 1.0;
    const double diff = d_j - d_i;
    switch (window.kind) {
        case WindowKind::gaussian: {
            const double z = diff / window.sigma;
            return std::exp(-(z * z));
        }
        case WindowKind::step:
            return std::abs(diff) <= window.sigma ? 1.0 : 0.0;
        case WindowKind::exp_decay:
            return std::exp(-window.alpha * std::abs(diff));
    }
    return 1.0;
}

void DnConvConfig::validate() const {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("dnconv: kernel must be odd and positive");
    if (!(r0 > 0.0)) throw std::invalid_argument("dnconv: r0 must be positive");
    if (!(d0 > 0.0)) throw std::invalid_argument("dnconv: d0 must be positive");
    if (!(clamp.lo > 0.0) || !(clamp.hi >= clamp.lo)) throw std::invalid_argument("dnconv: invalid clamp band");
    window.validate();
}

double tap_spacing(double d_i, const DnConvConfig& cfg) {
    switch (cfg.scale) {
        case ScaleMode::off:
            return cfg.r0;
        case ScaleMode::bilinear:
            return receptive_radius(d_i, cfg.d0, cfg.r0, cfg.clamp);
        case ScaleMode::discretized:
            return std::max(1.0, std::round(receptive_radius(d_i, cfg.d0, cfg.r0, cfg.clamp)));
    }
    return cfg.r0;
}

double bilinear_sample(const Plane& map, double u, double v) {
    const auto h = map.rows(), w = map.cols();
    const auto c = bilinear_corners(u, v);
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (c.weight[k] == 0.0) continue;
        const auto row = std::clamp<std::int64_t>(c.row[k], 0, h - 1);
        const auto col = std::clamp<std::int64_t>(c.col[k], 0, w - 1);
        total += c.weight[k] * map(row, col);
    }
    return total;
}

double bilinear_sample_zero(const Plane& map, double u, double v) {
    const auto c = bilinear_corners(u, v);
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (c.weight[k] == 0.0 || !inside(c.row[k], c.col[k], map.rows(), map.cols())) continue;
        total += c.weight[k] * map(c.row[k], c.col[k]);
    }
    return total;
}

double bilinear_sample_depth(const DepthMap& depth, double u, double v) {
    const auto h = depth.height(), w = depth.width();
    const auto c = bilinear_corners(u, v);
    double total = 0.0, mass = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (c.weight[k] == 0.0) continue;
        const auto row = std::clamp<std::int64_t>(c.row[k], 0, h - 1);
        const auto col = std::clamp<std::int64_t>(c.col[k], 0, w - 1);
        if (!depth.valid(row, col)) continue;
        total += c.weight[k] * depth.values(row, col);
        mass += c.weight[k];
    }
    return mass > 0.0 ? total / mass : 0.0;
}

TapGrid sample_offsets(Eigen::Index row, Eigen::Index col, const DepthMap& depth, const DnConvConfig& cfg) {
    if (row < 0 || row >= depth.height() || col < 0 || col >= depth.width()) {
        throw std::out_of_range("sample_offsets: pixel outside image");
    }
    const int half = cfg.kernel / 2;
    const double d_i = depth.values(row, col);
    const bool centre_valid = depth.valid(row, col);
    TapGrid grid;
    grid.spacing = tap_spacing(d_i, cfg);
    for (int a = -half; a <= half; ++a) {
        for (int b = -half; b <= half; ++b) {
            const double u = static_cast<double>(col) + b * grid.spacing;
            const double v = static_cast<double>(row) + a * grid.spacing;
            const bool centre = a == 0 && b == 0;
            const double d_j = centre ? d_i : bilinear_sample_depth(depth, u, v);
            double weight = 1.0;
            if (cfg.locality && centre_valid && !centre) weight = locality_weight(d_j, d_i, cfg.window);
            grid.positions.emplace_back(u, v);
            grid.offsets.emplace_back(b, a);
            grid.depths.push_back(d_j);
            grid.weights.push_back(weight);
        }
    }
    return grid;
}

SamplingPlan build_dnconv_plan(const DepthMap& depth, const DnConvConfig& cfg) {
    const auto h = depth.height(), w = depth.width();
    auto plan = empty_plan(h, w, cfg.taps());
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            const auto grid = sample_offsets(y, x, depth, cfg);
            for (int t = 0; t < cfg.taps(); ++t) {
                set_tap(plan, y * w + x, t, grid.positions[t].x(), grid.positions[t].y(), grid.weights[t]);
            }
        }
    }
    return plan;
}

SamplingPlan build_grid_plan(std::int64_t height, std::int64_t width, int kernel, double spacing) {
    const int half = kernel / 2;
    auto plan = empty_plan(height, width, kernel * kernel);
    for (std::int64_t y = 0; y < height; ++y) {
        for (std::int64_t x = 0; x < width; ++x) {
            int t = 0;
            for (int a = -half; a <= half; ++a) {
                for (int b = -half; b <= half; ++b, ++t) {
                    set_tap(plan, y * width + x, t, static_cast<double>(x) + b * spacing,
                            static_cast<double>(y) + a * spacing, 1.0);
                }
            }
        }
    }
    return plan;
}

std::vector<Tensor> DnConvLayer::parameters() const {
    std::vector<Tensor> out{weight, bias};
    if (edge_weight.defined()) out.push_back(edge_weight);
    return out;
}

std::int64_t DnConvLayer::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

DnConvLayer DnConvLayer::create(std::int64_t in_channels, std::int64_t out_channels, const DnConvConfig& cfg,
                                std::mt19937_64& rng) {
    cfg.validate();
    const std::int64_t k = cfg.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(k * k * in_channels));
    auto make = [&] {
        auto t = Tensor::zeros({out_channels, k, k, in_channels}, true);
        fill_uniform(t.mutable_data(), rng, -bound, bound);
        return t;
    };
    DnConvLayer layer;
    layer.config = cfg;
    layer.weight = make();
    layer.bias = Tensor::zeros({out_channels}, true);
    if (cfg.edge_branch) layer.edge_weight = make();
    return layer;
}

namespace {

std::pair<Tensor, std::shared_ptr<DnConvState>> dnconv_impl(const Tensor& x, std::span<const DepthMap> depth,
                                                            const DnConvLayer& layer) {
    layer.config.validate();
    require_depth_batch(x, depth);
    require_weight(layer.weight, x.dim(1), "dnconv");
    if (layer.weight.dim(1) != layer.config.kernel) throw ShapeError("dnconv: weight kernel does not match config");
    if (layer.config.edge_branch != layer.edge_weight.defined()) {
        throw ShapeError("dnconv: edge weights must be present iff the edge branch is enabled");
    }
    if (layer.edge_weight.defined()) require_same_shape(layer.weight, layer.edge_weight, "dnconv edge");
    require_finite(x.data(), "dnconv");

    auto state = std::make_shared<DnConvState>();
    state->plans.resize(depth.size());
    parallel_for(depth.size(), [&](std::size_t s) { state->plans[s] = build_dnconv_plan(depth[s], layer.config); });
    if (layer.config.edge_branch) {
        state->edge_plan = build_grid_plan(x.dim(2), x.dim(3), layer.config.kernel, layer.config.r0);
    }
    auto y = conv_with_plans(x, layer.weight, layer.bias, layer.config.edge_branch ? &layer.edge_weight : nullptr,
                             state, "dnconv", layer);
    return {std::move(y), std::move(state)};
}

}  // namespace

Tensor dnconv_forward(const Tensor& x, std::span<const DepthMap> depth, const DnConvLayer& layer) {
    return dnconv_impl(x, depth, layer).first;
}

Tensor dnconv_forward(const Tensor& x, std::span<const DepthMap> depth, const DnConvLayer& layer,
                      DnConvState& state) {
    auto [y, shared] = dnconv_impl(x, depth, layer);
    state = *shared;
    return y;
}

DnConvGrads dnconv_backward(std::span<const double> grad_out, const DnConvState& state, const DnConvLayer& layer,
                            const Tensor& x, bool input_grad) {
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto d = layer.weight.dim(0);
    const auto hw = h * w;
    const auto tc = layer.weight.dim(1) * layer.weight.dim(2) * c;
    if (static_cast<std::int64_t>(state.plans.size()) != n) throw GraphError("dnconv_backward: missing saved state");
    if (static_cast<std::int64_t>(grad_out.size()) != n * d * hw) {
        throw ShapeError("dnconv_backward: upstream gradient has wrong size");
    }
    const bool edge = layer.edge_weight.defined();
    if (edge && state.edge_plan.taps == 0) throw GraphError("dnconv_backward: missing edge plan");

    DnConvGrads grads;
    if (input_grad) grads.input.assign(static_cast<std::size_t>(n * c * hw), 0.0);
    std::vector<RowMatrix> dw(static_cast<std::size_t>(n)), dwe(static_cast<std::size_t>(n));
    std::vector<Eigen::VectorXd> db(static_cast<std::size_t>(n));

    const ConstRowMap wmat(layer.weight.data().data(), d, tc);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t s) {
        const RowMatrix pixels = sample_pixels(x, static_cast<std::int64_t>(s));
        const ConstRowMap g(grad_out.data() + s * d * hw, d, hw);
        RowMatrix dpixels = input_grad ? RowMatrix::Zero(hw, c) : RowMatrix();

        dw[s].noalias() = g * gather(state.plans[s], pixels);
        if (input_grad) scatter(state.plans[s], g.transpose() * wmat, dpixels);
        if (edge) {
            const ConstRowMap emat(layer.edge_weight.data().data(), d, tc);
            dwe[s].noalias() = g * gather(state.edge_plan, pixels);
            if (input_grad) scatter(state.edge_plan, g.transpose() * emat, dpixels);
        }
        db[s] = g.rowwise().sum();
        if (input_grad) RowMap(grads.input.data() + s * c * hw, c, hw) = dpixels.transpose();
    });

    // Fixed sample order keeps the reduction independent of the worker count.
    RowMatrix wsum = RowMatrix::Zero(d, tc), esum = RowMatrix::Zero(d, tc);
    Eigen::VectorXd bsum = Eigen::VectorXd::Zero(d);
    for (std::int64_t s = 0; s < n; ++s) {
        wsum += dw[s];
        if (edge) esum += dwe[s];
        bsum += db[s];
    }
    grads.weight.assign(wsum.data(), wsum.data() + wsum.size());
    grads.bias.assign(bsum.data(), bsum.data() + bsum.size());
    if (edge) grads.edge_weight.assign(esum.data(), esum.data() + esum.size());
    return grads;
}

Tensor standard_conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, double dilation) {
    if (x.rank() != 4) throw ShapeError("conv: expected NCHW input, got " + shape_string(x.shape()));
    require_weight(weight, x.dim(1), "conv");
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) throw ShapeError("conv: bias must be [D]");
    if (!(dilation > 0.0)) throw std::invalid_argument("conv: dilation must be positive");
    require_finite(x.data(), "conv");
    const int k = static_cast<int>(weight.dim(1));
    auto state = std::make_shared<DnConvState>();
    auto plan = build_grid_plan(x.dim(2), x.dim(3), k, dilation);
    state->plans.assign(static_cast<std::size_t>(x.dim(0)), plan);
    DnConvLayer layer;
    layer.config.kernel = k;
    layer.weight = weight;
    layer.bias = bias;
    return conv_with_plans(x, weight, bias, nullptr, state, "conv", layer);
}

}  // namespace depthconv
