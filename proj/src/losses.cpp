// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/losses.hpp"

#include "depthconv/metrics.hpp"
#include "depthconv/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace depthconv {

void LossConfig::validate() const {
    if (!(lambda_grad >= 0.0) || !std::isfinite(lambda_grad)) {
        throw std::invalid_argument("loss: lambda_grad must be a finite value >= 0");
    }
}

namespace {

void require_depth_pred(const Tensor& pred, std::span<const DepthMap> gt, const char* what) {
    if (pred.rank() != 4 || pred.dim(1) != 1) {
        throw ShapeError(std::string(what) + ": prediction must be [N,1,H,W], got " + shape_string(pred.shape()));
    }
    if (static_cast<std::int64_t>(gt.size()) != pred.dim(0)) throw ShapeError(std::string(what) + ": batch mismatch");
    for (const auto& g : gt) {
        if (g.height() != pred.dim(2) || g.width() != pred.dim(3)) {
            throw ShapeError(std::string(what) + ": ground truth size mismatch");
        }
    }
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

Tensor loss_depth(const Tensor& pred, std::span<const DepthMap> gt) {
    require_depth_pred(pred, gt, "loss_depth");
    const auto h = pred.dim(2), w = pred.dim(3), hw = h * w;
    const auto p = pred.data();
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t s = 0; s < gt.size(); ++s) {
        for (std::int64_t i = 0; i < hw; ++i) {
            const double g = gt[s].values.data()[i];
            if (!DepthMap::is_valid_depth(g)) continue;
            total += std::abs(p[s * hw + i] - g);
            ++count;
        }
    }
    if (count == 0) throw std::domain_error("loss_depth: no valid ground-truth pixels");
    std::vector<DepthMap> gt_copy(gt.begin(), gt.end());
    return make_result({}, {total / count}, {pred}, "loss_depth",
                       [pred, gt_copy, count, hw](std::span<const double> g) {
                           auto dp = grad_of(pred);
                           const auto p = pred.data();
                           const double scale = g[0] / static_cast<double>(count);
                           for (std::size_t s = 0; s < gt_copy.size(); ++s) {
                               for (std::int64_t i = 0; i < hw; ++i) {
                                   const double d = gt_copy[s].values.data()[i];
                                   if (!DepthMap::is_valid_depth(d)) continue;
                                   dp[s * hw + i] += scale * sign(p[s * hw + i] - d);
                               }
                           }
                       });
}

Tensor loss_grad(const Tensor& pred, std::span<const DepthMap> gt) {
    require_depth_pred(pred, gt, "loss_grad");
    const auto h = pred.dim(2), w = pred.dim(3), hw = h * w;
    const auto p = pred.data();
    // Per eligible pixel: signs of the x and y difference errors.
    struct Term {
        std::int64_t at;
        double sx, sy;
    };
    std::vector<Term> terms;
    double total = 0.0;
    for (std::size_t s = 0; s < gt.size(); ++s) {
        const auto& g = gt[s];
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                if (!grad_stencil_ok(g, y, x)) continue;
                const auto i = static_cast<std::int64_t>(s) * hw + y * w + x;
                const double ex = (p[i + 1] - p[i]) - (g.values(y, x + 1) - g.values(y, x));
                const double ey = (p[i + w] - p[i]) - (g.values(y + 1, x) - g.values(y, x));
                total += std::abs(ex) + std::abs(ey);
                terms.push_back({i, sign(ex), sign(ey)});
            }
        }
    }
    if (terms.empty()) throw std::domain_error("loss_grad: no pixels with a valid difference stencil");
    const auto n = static_cast<double>(terms.size());
    return make_result({}, {total / n}, {pred}, "loss_grad", [pred, terms, n, w](std::span<const double> g) {
        auto dp = grad_of(pred);
        const double scale = g[0] / n;
        for (const auto& t : terms) {
            dp[t.at + 1] += scale * t.sx;
            dp[t.at + w] += scale * t.sy;
            dp[t.at] -= scale * (t.sx + t.sy);
        }
    });
}

Tensor total_depth_loss(const Tensor& pred, std::span<const DepthMap> gt, const LossConfig& cfg) {
    cfg.validate();
    auto l = loss_depth(pred, gt);
    if (cfg.lambda_grad == 0.0) return l;
    return add(l, scale(loss_grad(pred, gt), cfg.lambda_grad));
}

}  // namespace depthconv
