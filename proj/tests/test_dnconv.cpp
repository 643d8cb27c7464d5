// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "depthconv/dnconv.hpp"
#include "depthconv/grad_check.hpp"
#include "depthconv/ops.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace depthconv;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool requires_grad = false) {
    return Tensor(shape, oracle::random_values(static_cast<std::size_t>(shape_numel(shape)), rng), requires_grad);
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

DepthMap random_depth(int h, int w, std::mt19937_64& rng, double lo = 1.0, double hi = 4.0) {
    DepthMap d(h, w, 0.0);
    for (Eigen::Index i = 0; i < d.values.size(); ++i) d.values.data()[i] = oracle::random_values(1, rng, lo, hi)[0];
    return d;
}

std::vector<double> plane_vector(const DepthMap& d) { return {d.values.data(), d.values.data() + d.values.size()}; }

oracle::DnParams to_oracle(const DnConvConfig& cfg) {
    oracle::DnParams p;
    p.k = cfg.kernel;
    p.r0 = cfg.r0;
    p.d0 = cfg.d0;
    p.sigma = cfg.window.sigma;
    p.alpha = cfg.window.alpha;
    p.lo = cfg.clamp.lo;
    p.hi = cfg.clamp.hi;
    p.window = cfg.window.kind == WindowKind::gaussian ? oracle::Window::gaussian
               : cfg.window.kind == WindowKind::step   ? oracle::Window::step
                                                       : oracle::Window::exp_decay;
    p.scale = cfg.scale == ScaleMode::off           ? oracle::Scale::off
              : cfg.scale == ScaleMode::discretized ? oracle::Scale::discretized
                                                    : oracle::Scale::bilinear;
    p.locality = cfg.locality;
    p.edge = cfg.edge_branch;
    return p;
}

}  // namespace

TEST_CASE("locality window closed forms") {
    WindowSpec g{WindowKind::gaussian, 0.4, 1.0};
    CHECK(locality_weight(2.0, 2.0, g) == 1.0);
    CHECK(locality_weight(2.4, 2.0, g) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(locality_weight(1.2, 2.0, g) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));

    WindowSpec s{WindowKind::step, 0.5, 1.0};
    CHECK(locality_weight(3.0, 3.0, s) == 1.0);
    CHECK(locality_weight(3.0 + 0.5 * 1.001, 3.0, s) == 0.0);
    CHECK(locality_weight(3.0 + 0.499, 3.0, s) == 1.0);

    WindowSpec e{WindowKind::exp_decay, 0.5, 2.0};
    CHECK(locality_weight(1.0, 1.0, e) == 1.0);
    CHECK(locality_weight(1.75, 1.0, e) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));

    CHECK(locality_weight(0.0, 2.0, g) == 1.0);
    CHECK(locality_weight(2.0, -1.0, g) == 1.0);
}

TEST_CASE("locality window is monotone and bounded") {
    std::mt19937_64 rng(4);
    for (auto kind : {WindowKind::gaussian, WindowKind::exp_decay, WindowKind::step}) {
        WindowSpec w{kind, 0.3, 2.5};
        double prev = locality_weight(2.0, 2.0, w);
        CHECK(prev == 1.0);
        for (double delta = 0.01; delta < 3.0; delta += 0.01) {
            const double up = locality_weight(2.0 + delta, 2.0, w);
            const double down = locality_weight(2.0 - delta * 0.5, 2.0 - delta * 0.5 + delta, w);
            CHECK(up >= 0.0);
            CHECK(up <= 1.0);
            CHECK(down == doctest::Approx(up).epsilon(1e-12));
            if (kind == WindowKind::step) {
                CHECK(up <= prev);
            } else if (up > 0.0) {
                CHECK(up < prev);
            }
            prev = up;
        }
    }
}

TEST_CASE("bilinear sampling") {
    Plane p(2, 2);
    p << 0.0, 1.0, 2.0, 3.0;
    CHECK(bilinear_sample(p, 1.0, 0.0) == 1.0);
    CHECK(bilinear_sample(p, 0.0, 1.0) == 2.0);
    CHECK(bilinear_sample(p, 0.5, 0.5) == 1.5);
    CHECK(bilinear_sample(p, 7.0, 0.0) == 1.0);
    CHECK(bilinear_sample(p, -3.0, 1.0) == 2.0);
    CHECK(bilinear_sample_zero(p, -1.0, 0.0) == 0.0);
    CHECK(bilinear_sample_zero(p, 1.5, 0.0) == 0.5);

    DepthMap d(2, 2, 2.0);
    d.values(0, 1) = 0.0;
    CHECK(bilinear_sample_depth(d, 0.5, 0.0) == 2.0);
    CHECK(bilinear_sample_depth(d, 1.0, 0.0) == 0.0);
}

TEST_CASE("sample_offsets") {
    DnConvConfig cfg;
    cfg.d0 = 3.0;
    cfg.r0 = 1.0;
    cfg.scale = ScaleMode::bilinear;

    SUBCASE("canonical depth gives the integer grid") {
        const DepthMap depth(9, 9, 3.0);
        const auto g = sample_offsets(4, 4, depth, cfg);
        REQUIRE(g.positions.size() == 9);
        for (std::size_t t = 0; t < 9; ++t) {
            CHECK(g.positions[t].x() == 4.0 + g.offsets[t].x());
            CHECK(g.positions[t].y() == 4.0 + g.offsets[t].y());
            CHECK(g.weights[t] == 1.0);
        }
    }
    SUBCASE("twice the canonical depth halves the spacing") {
        const DepthMap depth(9, 9, 6.0);
        const auto g = sample_offsets(4, 4, depth, cfg);
        CHECK(g.spacing == 0.5);
        CHECK(g.positions[0].x() == 3.5);
        CHECK(g.positions[0].y() == 3.5);
    }
    SUBCASE("discretized spacing is floored at one") {
        cfg.scale = ScaleMode::discretized;
        const DepthMap depth(9, 9, 2.6 * 3.0);
        CHECK(sample_offsets(4, 4, depth, cfg).spacing == 1.0);
        const DepthMap near(9, 9, 3.0 / 2.4);
        CHECK(sample_offsets(4, 4, near, cfg).spacing == 2.0);
    }
    SUBCASE("grid invariants on random depth") {
        std::mt19937_64 rng(9);
        const auto depth = random_depth(7, 7, rng);
        for (Eigen::Index y = 0; y < 7; ++y) {
            for (Eigen::Index x = 0; x < 7; ++x) {
                const auto g = sample_offsets(y, x, depth, cfg);
                CHECK(g.weights[4] == 1.0);
                CHECK(g.positions[4].x() == static_cast<double>(x));
                for (double w : g.weights) {
                    CHECK(w >= 0.0);
                    CHECK(w <= 1.0);
                }
                for (double d : g.depths) {
                    CHECK(d >= depth.values.minCoeff());
                    CHECK(d <= depth.values.maxCoeff());
                }
            }
        }
    }
    SUBCASE("holes fall back to r0 and unit weights") {
        DepthMap depth(5, 5, 1.0);
        depth.values(2, 2) = 0.0;
        const auto g = sample_offsets(2, 2, depth, cfg);
        CHECK(g.spacing == 1.0);
        for (double w : g.weights) CHECK(w == 1.0);
    }
}

TEST_CASE("standard convolution") {
    SUBCASE("sum of window") {
        const auto y = standard_conv_forward(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 3, 3, 1}, 1.0),
                                             Tensor::zeros({1}));
        CHECK(y.data()[4] == 9.0);
        CHECK(y.data()[0] == 4.0);
    }
    SUBCASE("identity kernel") {
        std::mt19937_64 rng(1);
        const auto x = random_tensor({2, 3, 5, 4}, rng);
        auto w = Tensor::zeros({3, 3, 3, 3});
        for (int c = 0; c < 3; ++c) w.mutable_data()[((c * 3 + 1) * 3 + 1) * 3 + c] = 1.0;
        CHECK(vec(standard_conv_forward(x, w, Tensor::zeros({3})).data()) == vec(x.data()));
    }
    SUBCASE("random instances against the loop oracle") {
        std::mt19937_64 rng(2);
        for (int trial = 0; trial < 10; ++trial) {
            const int n = 1 + trial % 2, c = 1 + trial % 4, d = 1 + (trial + 1) % 3, h = 3 + trial % 6,
                      w = 4 + trial % 5, k = trial % 3 == 0 ? 1 : 3, dil = 1 + trial % 2;
            const auto x = random_tensor({n, c, h, w}, rng);
            const auto wt = random_tensor({d, k, k, c}, rng);
            const auto b = random_tensor({d}, rng);
            const auto got = standard_conv_forward(x, wt, b, dil);
            const auto want =
                oracle::conv(vec(x.data()), {n, c, h, w}, vec(wt.data()), vec(b.data()), k, dil);
            for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.data()[i] - want[i]) <= 1e-12);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(standard_conv_forward(Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 3, 3, 3}),
                                              Tensor::zeros({1})),
                        ShapeError);
        CHECK_THROWS_AS(standard_conv_forward(Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 2, 2, 2}),
                                              Tensor::zeros({1})),
                        ShapeError);
    }
}

TEST_CASE("dnconv reduces to standard convolution") {
    std::mt19937_64 rng(21);
    DnConvConfig cfg;
    cfg.d0 = 2.5;
    for (auto scale : {ScaleMode::off, ScaleMode::discretized, ScaleMode::bilinear}) {
        for (auto kind : {WindowKind::gaussian, WindowKind::step, WindowKind::exp_decay}) {
            cfg.scale = scale;
            cfg.window.kind = kind;
            auto layer = DnConvLayer::create(3, 4, cfg, rng);
            for (double& v : layer.bias.mutable_data()) v = oracle::random_values(1, rng)[0];
            const auto x = random_tensor({2, 3, 7, 6}, rng);
            const std::vector<DepthMap> depth(2, DepthMap(7, 6, cfg.d0));
            const auto y = dnconv_forward(x, depth, layer);
            const auto ref = standard_conv_forward(x, layer.weight, layer.bias, cfg.r0);
            CHECK(vec(y.data()) == vec(ref.data()));
        }
    }

    SUBCASE("infinite window with scale off") {
        cfg.scale = ScaleMode::off;
        cfg.window = {WindowKind::gaussian, 1e300, 1.0};
        const auto layer = DnConvLayer::create(2, 2, cfg, rng);
        const auto x = random_tensor({1, 2, 6, 6}, rng);
        const std::vector<DepthMap> depth{random_depth(6, 6, rng)};
        CHECK(vec(dnconv_forward(x, depth, layer).data()) ==
              vec(standard_conv_forward(x, layer.weight, layer.bias).data()));
    }
}

TEST_CASE("dnconv matches the loop oracle") {
    std::mt19937_64 rng(31);
    int trial = 0;
    for (auto scale : {ScaleMode::off, ScaleMode::discretized, ScaleMode::bilinear}) {
        for (auto kind : {WindowKind::gaussian, WindowKind::step, WindowKind::exp_decay}) {
            for (bool edge : {false, true}) {
                ++trial;
                DnConvConfig cfg;
                cfg.scale = scale;
                cfg.window = {kind, 0.4, 1.5};
                cfg.edge_branch = edge;
                cfg.d0 = 2.0;
                cfg.r0 = trial % 2 ? 1.0 : 2.0;
                cfg.locality = trial % 5 != 0;
                auto layer = DnConvLayer::create(2, 3, cfg, rng);
                for (double& v : layer.bias.mutable_data()) v = oracle::random_values(1, rng)[0];
                const auto x = random_tensor({1, 2, 6, 6}, rng);
                std::vector<DepthMap> depth{random_depth(6, 6, rng, 0.8, 4.0)};
                depth[0].values(1, 1) = 0.0;
                const auto got = dnconv_forward(x, depth, layer);
                const auto want = oracle::dnconv(vec(x.data()), {1, 2, 6, 6}, {plane_vector(depth[0])},
                                                 vec(layer.weight.data()), vec(layer.bias.data()),
                                                 edge ? vec(layer.edge_weight.data()) : std::vector<double>{},
                                                 to_oracle(cfg));
                for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.data()[i] - want[i]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("dnconv gradients") {
    std::mt19937_64 rng(41);
    SUBCASE("zero upstream gradient") {
        DnConvConfig cfg;
        cfg.edge_branch = true;
        const auto layer = DnConvLayer::create(2, 2, cfg, rng);
        const auto x = random_tensor({1, 2, 5, 5}, rng);
        const std::vector<DepthMap> depth{random_depth(5, 5, rng)};
        DnConvState state;
        dnconv_forward(x, depth, layer, state);
        const std::vector<double> zero(2 * 25, 0.0);
        const auto g = dnconv_backward(zero, state, layer, x);
        for (const auto* v : {&g.input, &g.weight, &g.edge_weight, &g.bias}) {
            for (double e : *v) CHECK(e == 0.0);
        }
    }
    SUBCASE("missing state") {
        const auto layer = DnConvLayer::create(2, 2, DnConvConfig{}, rng);
        const auto x = random_tensor({1, 2, 5, 5}, rng);
        CHECK_THROWS_AS(dnconv_backward(std::vector<double>(50, 0.0), DnConvState{}, layer, x), GraphError);
    }
    SUBCASE("constant depth gives standard convolution gradients") {
        DnConvConfig cfg;
        cfg.d0 = 1.7;
        const auto layer = DnConvLayer::create(3, 2, cfg, rng);
        const auto x = random_tensor({2, 3, 5, 6}, rng, true);
        const auto target = random_tensor({2, 2, 5, 6}, rng);
        const std::vector<DepthMap> depth(2, DepthMap(5, 6, 1.7));
        backward(sum(mul(dnconv_forward(x, depth, layer), target)));
        const auto gx = vec(x.grad()), gw = vec(layer.weight.grad()), gb = vec(layer.bias.grad());
        x.clear_grad();
        layer.weight.clear_grad();
        layer.bias.clear_grad();
        backward(sum(mul(standard_conv_forward(x, layer.weight, layer.bias), target)));
        CHECK(vec(x.grad()) == gx);
        CHECK(vec(layer.weight.grad()) == gw);
        CHECK(vec(layer.bias.grad()) == gb);
    }
    SUBCASE("finite differences on every path") {
        for (auto scale : {ScaleMode::off, ScaleMode::discretized, ScaleMode::bilinear}) {
            DnConvConfig cfg;
            cfg.scale = scale;
            cfg.edge_branch = true;
            cfg.window.sigma = 0.5;
            const auto layer = DnConvLayer::create(2, 3, cfg, rng);
            const auto x = random_tensor({1, 2, 5, 5}, rng, true);
            const auto target = random_tensor({1, 3, 5, 5}, rng);
            const std::vector<DepthMap> depth{random_depth(5, 5, rng)};
            auto f = [&] { return sum(mul(dnconv_forward(x, depth, layer), target)); };
            const auto r = grad_check(f, {x, layer.weight, layer.bias, layer.edge_weight});
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("dnconv validation") {
    std::mt19937_64 rng(51);
    DnConvConfig cfg;
    auto layer = DnConvLayer::create(2, 2, cfg, rng);
    const auto x = random_tensor({1, 2, 5, 5}, rng);
    const std::vector<DepthMap> wrong{DepthMap(4, 5, 1.0)};
    CHECK_THROWS_AS(dnconv_forward(x, wrong, layer), ShapeError);
    const std::vector<DepthMap> two(2, DepthMap(5, 5, 1.0));
    CHECK_THROWS_AS(dnconv_forward(x, two, layer), ShapeError);

    cfg.kernel = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    DnConvConfig edge;
    edge.edge_branch = true;
    const auto with_edge = DnConvLayer::create(2, 2, edge, rng);
    CHECK(with_edge.edge_weight.defined());
    CHECK(with_edge.edge_weight.data().data() != with_edge.weight.data().data());
    CHECK(with_edge.parameter_count() == 2 * (9 * 2 * 2) + 2);
}
