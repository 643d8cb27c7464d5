// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations used only by tests. They share no
// code with the library kernels: every tap, channel and bilinear corner is an
// explicit scalar loop.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

struct Dims {
    int n, c, h, w;
};

inline double at(const std::vector<double>& x, const Dims& s, int n, int c, int y, int xx) {
    return x[((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + xx];
}

// weight layout [D, k, k, C]
inline double wat(const std::vector<double>& w, int k, int c_in, int d, int a, int b, int c) {
    return w[((static_cast<std::size_t>(d) * k + a) * k + b) * c_in + c];
}

inline std::vector<double> conv(const std::vector<double>& x, const Dims& s, const std::vector<double>& weight,
                                const std::vector<double>& bias, int k, int dilation) {
    const int d_out = static_cast<int>(bias.size());
    const int half = k / 2;
    std::vector<double> out(static_cast<std::size_t>(s.n) * d_out * s.h * s.w, 0.0);
    for (int n = 0; n < s.n; ++n)
        for (int d = 0; d < d_out; ++d)
            for (int y = 0; y < s.h; ++y)
                for (int x0 = 0; x0 < s.w; ++x0) {
                    double acc = bias[d];
                    for (int a = 0; a < k; ++a)
                        for (int b = 0; b < k; ++b) {
                            const int yy = y + (a - half) * dilation;
                            const int xx = x0 + (b - half) * dilation;
                            if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                            for (int c = 0; c < s.c; ++c) acc += wat(weight, k, s.c, d, a, b, c) * at(x, s, n, c, yy, xx);
                        }
                    out[((static_cast<std::size_t>(n) * d_out + d) * s.h + y) * s.w + x0] = acc;
                }
    return out;
}

// Scalar bilinear sample of one plane, zero outside.
inline double sample_zero(const std::vector<double>& x, const Dims& s, int n, int c, double u, double v) {
    const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
    const double fu = u - u0, fv = v - v0;
    double total = 0.0;
    for (int dv = 0; dv <= 1; ++dv)
        for (int du = 0; du <= 1; ++du) {
            const double wgt = (du ? fu : 1.0 - fu) * (dv ? fv : 1.0 - fv);
            const int uu = u0 + du, vv = v0 + dv;
            if (wgt == 0.0 || uu < 0 || uu >= s.w || vv < 0 || vv >= s.h) continue;
            total += wgt * at(x, s, n, c, vv, uu);
        }
    return total;
}

// Depth sample with border clamping; corners with non-positive depth skipped and
// the remaining weights renormalised.
inline double sample_depth(const std::vector<double>& depth, int h, int w, double u, double v) {
    const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
    const double fu = u - u0, fv = v - v0;
    double total = 0.0, mass = 0.0;
    for (int dv = 0; dv <= 1; ++dv)
        for (int du = 0; du <= 1; ++du) {
            const double wgt = (du ? fu : 1.0 - fu) * (dv ? fv : 1.0 - fv);
            if (wgt == 0.0) continue;
            const int uu = std::clamp(u0 + du, 0, w - 1), vv = std::clamp(v0 + dv, 0, h - 1);
            const double d = depth[static_cast<std::size_t>(vv) * w + uu];
            if (!(d > 0.0)) continue;
            total += wgt * d;
            mass += wgt;
        }
    return mass > 0.0 ? total / mass : 0.0;
}

enum class Window { gaussian, step, exp_decay };
enum class Scale { off, discretized, bilinear };

struct DnParams {
    int k = 3;
    double r0 = 1.0, d0 = 2.0, sigma = 0.3, alpha = 1.0, lo = 0.25, hi = 8.0;
    Window window = Window::gaussian;
    Scale scale = Scale::bilinear;
    bool locality = true;
    bool edge = false;
};

inline double window_weight(double dj, double di, const DnParams& p) {
    if (!(dj > 0.0) || !(di > 0.0)) return 1.0;
    const double diff = dj - di;
    switch (p.window) {
        case Window::gaussian: return std::exp(-(diff / p.sigma) * (diff / p.sigma));
        case Window::step: return std::abs(diff) <= p.sigma ? 1.0 : 0.0;
        case Window::exp_decay: return std::exp(-p.alpha * std::abs(diff));
    }
    return 1.0;
}

// depth: one H*W plane per sample.
inline std::vector<double> dnconv(const std::vector<double>& x, const Dims& s,
                                  const std::vector<std::vector<double>>& depth, const std::vector<double>& weight,
                                  const std::vector<double>& bias, const std::vector<double>& edge_weight,
                                  const DnParams& p) {
    const int d_out = static_cast<int>(bias.size());
    const int half = p.k / 2;
    std::vector<double> out(static_cast<std::size_t>(s.n) * d_out * s.h * s.w, 0.0);
    for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int x0 = 0; x0 < s.w; ++x0) {
                const double di = depth[n][static_cast<std::size_t>(y) * s.w + x0];
                const bool valid = di > 0.0;
                double r = p.r0;
                if (valid) r = std::min(std::max(p.d0 / di * p.r0, p.lo * p.r0), p.hi * p.r0);
                double spacing = p.r0;
                if (p.scale == Scale::bilinear) spacing = r;
                if (p.scale == Scale::discretized) spacing = std::max(1.0, std::round(r));
                for (int d = 0; d < d_out; ++d) {
                    double acc = bias[d];
                    for (int a = 0; a < p.k; ++a)
                        for (int b = 0; b < p.k; ++b) {
                            const double u = x0 + (b - half) * spacing;
                            const double v = y + (a - half) * spacing;
                            const bool centre = a == half && b == half;
                            double lw = 1.0;
                            if (p.locality && valid && !centre) {
                                lw = window_weight(sample_depth(depth[n], s.h, s.w, u, v), di, p);
                            }
                            for (int c = 0; c < s.c; ++c) {
                                acc += lw * wat(weight, p.k, s.c, d, a, b, c) * sample_zero(x, s, n, c, u, v);
                            }
                            if (p.edge) {
                                const double ue = x0 + (b - half) * p.r0, ve = y + (a - half) * p.r0;
                                for (int c = 0; c < s.c; ++c) {
                                    acc += wat(edge_weight, p.k, s.c, d, a, b, c) * sample_zero(x, s, n, c, ue, ve);
                                }
                            }
                        }
                    out[((static_cast<std::size_t>(n) * d_out + d) * s.h + y) * s.w + x0] = acc;
                }
            }
    return out;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace oracle
