// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include "depthconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace depthconv {

namespace {

void require_nchw(const Tensor& x, const char* where) {
    if (x.rank() != 4) {
        throw ShapeError(std::string(where) + ": expected NCHW tensor, got " + shape_string(x.shape()));
    }
}

template <typename F>
Tensor unary(const Tensor& a, const char* name, F&& value_and_slope) {
    require_finite(a.data(), name);
    const auto in = a.data();
    std::vector<double> out(in.size());
    std::vector<double> slope(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        auto [v, s] = value_and_slope(in[i]);
        out[i] = v;
        slope[i] = s;
    }
    return make_result(a.shape(), std::move(out), {a}, name,
                       [a, slope = std::move(slope)](std::span<const double> g) {
                           auto ga = grad_of(a);
                           if (ga.empty()) return;
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * slope[i];
                       });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    require_finite(a.data(), "add");
    require_finite(b.data(), "add");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return make_result(a.shape(), std::move(out), {a, b}, "add", [a, b](std::span<const double> g) {
        for (const Tensor* t : {&a, &b}) {
            auto gt = grad_of(*t);
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
        }
    });
}

Tensor add(const Tensor& a, double b) {
    if (!std::isfinite(b)) throw NonFiniteError("add: non-finite scalar");
    return unary(a, "add_scalar", [b](double v) { return std::pair{v + b, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    require_finite(a.data(), "mul");
    require_finite(b.data(), "mul");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return make_result(a.shape(), std::move(out), {a, b}, "mul", [a, b](std::span<const double> g) {
        auto ga = grad_of(a);
        auto gb = grad_of(b);
        const auto x = a.data();
        const auto y = b.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * x[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    if (!std::isfinite(factor)) throw NonFiniteError("scale: non-finite factor");
    return unary(a, "scale", [factor](double v) { return std::pair{v * factor, factor}; });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double v) { return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0}; });
}

Tensor softplus(const Tensor& a) {
    return unary(a, "softplus", [](double v) {
        // log(1 + e^v) without overflow; slope is the logistic function.
        const double value = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        const double slope = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return std::pair{value, slope};
    });
}

Tensor square(const Tensor& a) {
    return unary(a, "square", [](double v) { return std::pair{v * v, 2.0 * v}; });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
    switch (kind) {
        case ElementwiseKind::add:
            return b.numel() == 1 && a.numel() != 1 && !b.requires_grad() ? add(a, b.item()) : add(a, b);
        case ElementwiseKind::mul:
            return mul(a, b);
        case ElementwiseKind::relu:
            return relu(a);
        case ElementwiseKind::scale:
            return scale(a, b.item());
    }
    throw std::invalid_argument("elementwise: unknown kind");
}

Tensor sum(const Tensor& a) {
    require_finite(a.data(), "sum");
    double total = 0.0;
    for (double v : a.data()) total += v;
    return make_result({}, {total}, {a}, "sum", [a](std::span<const double> g) {
        auto ga = grad_of(a);
        for (double& v : ga) v += g[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor maxpool2(const Tensor& x) {
    require_nchw(x, "maxpool2");
    require_finite(x.data(), "maxpool2");
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2: odd spatial extent " + shape_string(x.shape()));
    }
    const auto oh = h / 2, ow = w / 2;
    const auto in = x.data();
    std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
    std::vector<std::int64_t> argmax(out.size());
    for (std::int64_t p = 0; p < n * c; ++p) {
        const double* src = in.data() + p * h * w;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                std::int64_t best = (2 * oy) * w + 2 * ox;
                for (std::int64_t dy = 0; dy < 2; ++dy) {
                    for (std::int64_t dx = 0; dx < 2; ++dx) {
                        const auto idx = (2 * oy + dy) * w + 2 * ox + dx;
                        if (src[idx] > src[best]) best = idx;
                    }
                }
                const auto o = static_cast<std::size_t>(p * oh * ow + oy * ow + ox);
                out[o] = src[best];
                argmax[o] = p * h * w + best;
            }
        }
    }
    return make_result({n, c, oh, ow}, std::move(out), {x}, "maxpool2",
                       [x, argmax = std::move(argmax)](std::span<const double> g) {
                           auto gx = grad_of(x);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
                       });
}

namespace {

struct LinearTap {
    std::int64_t lo, hi;
    double frac;
};

// Source coordinate for output index o under 2x upsampling, half-pixel centres.
LinearTap upsample_tap(std::int64_t o, std::int64_t in_extent) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_extent - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    const auto hi = std::min(lo + 1, in_extent - 1);
    return {lo, hi, src - static_cast<double>(lo)};
}

}  // namespace

Tensor upsample2(const Tensor& x) {
    require_nchw(x, "upsample2");
    require_finite(x.data(), "upsample2");
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto oh = 2 * h, ow = 2 * w;
    std::vector<LinearTap> ty(static_cast<std::size_t>(oh)), tx(static_cast<std::size_t>(ow));
    for (std::int64_t o = 0; o < oh; ++o) ty[o] = upsample_tap(o, h);
    for (std::int64_t o = 0; o < ow; ++o) tx[o] = upsample_tap(o, w);

    const auto in = x.data();
    std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow));
    for (std::int64_t p = 0; p < n * c; ++p) {
        const double* src = in.data() + p * h * w;
        double* dst = out.data() + p * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            const auto& a = ty[oy];
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const auto& b = tx[ox];
                const double top = (1.0 - b.frac) * src[a.lo * w + b.lo] + b.frac * src[a.lo * w + b.hi];
                const double bot = (1.0 - b.frac) * src[a.hi * w + b.lo] + b.frac * src[a.hi * w + b.hi];
                dst[oy * ow + ox] = (1.0 - a.frac) * top + a.frac * bot;
            }
        }
    }
    return make_result({n, c, oh, ow}, std::move(out), {x}, "upsample2",
                       [x, ty, tx, n, c, h, w, oh, ow](std::span<const double> g) {
                           auto gx = grad_of(x);
                           for (std::int64_t p = 0; p < n * c; ++p) {
                               double* dst = gx.data() + p * h * w;
                               const double* src = g.data() + p * oh * ow;
                               for (std::int64_t oy = 0; oy < oh; ++oy) {
                                   const auto& a = ty[oy];
                                   for (std::int64_t ox = 0; ox < ow; ++ox) {
                                       const auto& b = tx[ox];
                                       const double v = src[oy * ow + ox];
                                       dst[a.lo * w + b.lo] += (1.0 - a.frac) * (1.0 - b.frac) * v;
                                       dst[a.lo * w + b.hi] += (1.0 - a.frac) * b.frac * v;
                                       dst[a.hi * w + b.lo] += a.frac * (1.0 - b.frac) * v;
                                       dst[a.hi * w + b.hi] += a.frac * b.frac * v;
                                   }
                               }
                           }
                       });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const LabelMap> labels,
                             std::int32_t ignore_label) {
    require_nchw(logits, "softmax_cross_entropy");
    require_finite(logits.data(), "softmax_cross_entropy");
    const auto n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    if (static_cast<std::int64_t>(labels.size()) != n) {
        throw ShapeError("softmax_cross_entropy: label batch size mismatch");
    }
    const auto plane = h * w;
    const auto in = logits.data();
    // softmax - onehot per counted pixel, scaled by 1/count afterwards
    std::vector<double> dlogits(in.size(), 0.0);
    double total = 0.0;
    std::int64_t count = 0;
    std::vector<double> prob(static_cast<std::size_t>(k));
    for (std::int64_t s = 0; s < n; ++s) {
        const auto& lab = labels[static_cast<std::size_t>(s)];
        if (lab.rows() != h || lab.cols() != w) {
            throw ShapeError("softmax_cross_entropy: label map extent mismatch");
        }
        const double* base = in.data() + s * k * plane;
        double* dbase = dlogits.data() + s * k * plane;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const std::int32_t label = lab(y, x);
                if (label == ignore_label) continue;
                if (label < 0 || label >= k) {
                    throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                                            " outside [0, " + std::to_string(k) + ")");
                }
                const auto pix = y * w + x;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::int64_t c = 0; c < k; ++c) mx = std::max(mx, base[c * plane + pix]);
                double z = 0.0;
                for (std::int64_t c = 0; c < k; ++c) {
                    prob[c] = std::exp(base[c * plane + pix] - mx);
                    z += prob[c];
                }
                total += std::log(z) + mx - base[label * plane + pix];
                for (std::int64_t c = 0; c < k; ++c) dbase[c * plane + pix] = prob[c] / z;
                dbase[label * plane + pix] -= 1.0;
                ++count;
            }
        }
    }
    if (count == 0) {
        return make_result({}, {0.0}, {logits}, "softmax_cross_entropy", [](std::span<const double>) {});
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (double& v : dlogits) v *= inv;
    return make_result({}, {total * inv}, {logits}, "softmax_cross_entropy",
                       [logits, dlogits = std::move(dlogits)](std::span<const double> g) {
                           auto gl = grad_of(logits);
                           for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g[0] * dlogits[i];
                       });
}

std::vector<LabelMap> argmax_channels(const Tensor& logits) {
    require_nchw(logits, "argmax_channels");
    const auto n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    const auto plane = h * w;
    const auto in = logits.data();
    std::vector<LabelMap> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t s = 0; s < n; ++s) {
        LabelMap m(h, w);
        const double* base = in.data() + s * k * plane;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                std::int32_t best = 0;
                for (std::int64_t c = 1; c < k; ++c) {
                    if (base[c * plane + y * w + x] > base[best * plane + y * w + x]) {
                        best = static_cast<std::int32_t>(c);
                    }
                }
                m(y, x) = best;
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace depthconv
