// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "depthconv/dnconv.hpp"
#include "depthconv/grad_check.hpp"
#include "depthconv/ops.hpp"
#include "depthconv/optim.hpp"
#include "depthconv/tns_io.hpp"
#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace depthconv;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool requires_grad = false) {
    return Tensor(shape, oracle::random_values(static_cast<std::size_t>(shape_numel(shape)), rng), requires_grad);
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("elementwise examples") {
    const Tensor x({3}, {-1.0, 0.0, 2.0});
    CHECK(vec(relu(x).data()) == std::vector<double>{0.0, 0.0, 2.0});
    CHECK(vec(add(x, Tensor::zeros({3})).data()) == vec(x.data()));

    Tensor a({1}, {2.0}, true), b({1}, {3.0}, true);
    backward(mul(a, b));
    CHECK(a.grad()[0] == 3.0);
    CHECK(b.grad()[0] == 2.0);

    CHECK(scale(x, 2.0).data()[2] == 4.0);
    CHECK(elementwise(ElementwiseKind::scale, x, Tensor::scalar(3.0)).data()[0] == -3.0);
    CHECK(elementwise(ElementwiseKind::add, x, Tensor::scalar(1.0)).data()[0] == 0.0);
}

TEST_CASE("elementwise errors") {
    CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
    CHECK_THROWS_AS(mul(Tensor::zeros({2, 1}), Tensor::zeros({2})), ShapeError);
    CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}), NonFiniteError);
    CHECK_THROWS_AS(add(Tensor::zeros({1}), std::numeric_limits<double>::infinity()), NonFiniteError);
}

TEST_CASE("pooling and upsampling") {
    const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    const auto p = maxpool2(x);
    CHECK(p.shape() == Shape{1, 1, 1, 1});
    CHECK(p.item() == 4.0);

    const auto up = upsample2(Tensor::full({2, 3, 3, 2}, 1.75));
    CHECK(up.shape() == Shape{2, 3, 6, 4});
    for (double v : up.data()) CHECK(v == 1.75);

    CHECK_THROWS_AS(maxpool2(Tensor::zeros({1, 1, 3, 2})), ShapeError);
}

TEST_CASE("maxpool backward routes to argmax") {
    std::mt19937_64 rng(11);
    const auto x = random_tensor({1, 1, 4, 4}, rng, true);
    backward(sum(maxpool2(x)));
    int ones = 0;
    for (double g : x.grad()) {
        CHECK((g == 0.0 || g == 1.0));
        ones += g == 1.0;
    }
    CHECK(ones == 4);
    x.clear_grad();
    const auto target = random_tensor({1, 1, 2, 2}, rng);
    const double err = grad_check([&](const Tensor& in) { return sum(mul(maxpool2(in), target)); }, x);
    CHECK(err < 1e-6);
}

TEST_CASE("upsample gradient") {
    std::mt19937_64 rng(12);
    const auto x = random_tensor({1, 2, 3, 4}, rng, true);
    const auto target = random_tensor({1, 2, 6, 8}, rng);
    CHECK(grad_check([&](const Tensor& in) { return sum(mul(upsample2(in), target)); }, x) < 1e-7);
}

TEST_CASE("softmax cross entropy") {
    SUBCASE("uniform logits") {
        std::vector<LabelMap> labels{LabelMap::Constant(2, 2, 3)};
        const auto loss = softmax_cross_entropy(Tensor::full({1, 4, 2, 2}, 0.7), labels);
        CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    }
    SUBCASE("margin drives the loss to zero") {
        std::vector<LabelMap> labels{LabelMap::Constant(1, 1, 1)};
        double previous = 1e9;
        for (double margin : {1.0, 5.0, 20.0, 50.0}) {
            const double loss = softmax_cross_entropy(Tensor({1, 3, 1, 1}, {0.0, margin, 0.0}), labels).item();
            CHECK(loss < previous);
            previous = loss;
        }
        CHECK(previous < 1e-20);
    }
    SUBCASE("random 2x2, K=3 against per-pixel evaluation") {
        std::mt19937_64 rng(3);
        const auto logits = random_tensor({1, 3, 2, 2}, rng, true);
        LabelMap lab(2, 2);
        lab << 0, 2, 1, kIgnoreLabel;
        double expected = 0.0;
        const auto v = logits.data();
        for (int p = 0; p < 3; ++p) {
            const int label = lab.data()[p];
            double z = 0.0;
            for (int c = 0; c < 3; ++c) z += std::exp(v[c * 4 + p]);
            expected += -std::log(std::exp(v[label * 4 + p]) / z);
        }
        expected /= 3.0;
        std::vector<LabelMap> labels{lab};
        CHECK(softmax_cross_entropy(logits, labels).item() == doctest::Approx(expected).epsilon(1e-13));
        CHECK(grad_check([&](const Tensor& in) { return softmax_cross_entropy(in, labels); }, logits) < 1e-7);
    }
    SUBCASE("out-of-range label") {
        std::vector<LabelMap> labels{LabelMap::Constant(1, 1, 3)};
        CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 3, 1, 1}), labels), std::out_of_range);
    }
}

TEST_CASE("backward examples") {
    Tensor x({4}, {1, 2, 3, 4}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor y({2}, {-1.0, 2.0}, true);
    backward(sum(relu(y)));
    CHECK(vec(y.grad()) == std::vector<double>{0.0, 1.0});

    Tensor z({1}, {0.0}, true);
    backward(sum(relu(z)));
    CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("backward errors") {
    Tensor x({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(relu(x)), GraphError);
    const auto loss = sum(square(x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), GraphError);
}

TEST_CASE("reverse sweep follows reverse execution order") {
    Tensor x({1}, {1.5}, true);
    std::vector<std::string> visited;
    auto a = square(x);
    auto b = make_result({1}, {a.item()}, {a}, "probe_b", [&, a](std::span<const double> g) {
        visited.push_back("b");
        grad_of(a)[0] += g[0];
    });
    auto c = make_result({1}, {b.item()}, {b, a}, "probe_c", [&, a, b](std::span<const double> g) {
        visited.push_back("c");
        grad_of(b)[0] += g[0];
        grad_of(a)[0] += g[0];
    });
    CHECK(graph_size(c) == 3);
    backward(c);
    CHECK(visited == std::vector<std::string>{"c", "b"});
    CHECK(x.grad()[0] == doctest::Approx(2.0 * 2.0 * 1.5));
    CHECK(graph_size(c) == 0);
}

TEST_CASE("backward is linear in the loss") {
    std::mt19937_64 rng(5);
    const auto w = random_tensor({2, 3, 3, 2}, rng, true);
    const auto b = random_tensor({2}, rng, true);
    const auto x = random_tensor({1, 2, 5, 5}, rng);
    auto loss1 = [&] { return sum(square(standard_conv_forward(x, w, b))); };
    auto loss2 = [&] { return sum(relu(standard_conv_forward(x, w, b))); };

    backward(loss1());
    auto g1 = vec(w.grad());
    w.clear_grad();
    b.clear_grad();
    backward(loss2());
    auto g2 = vec(w.grad());
    w.clear_grad();
    b.clear_grad();
    backward(add(loss1(), loss2()));
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(w.grad()[i] - (g1[i] + g2[i])) <= 1e-12);
}

TEST_CASE("forward evaluation is bit-reproducible") {
    std::mt19937_64 rng(8);
    const auto w = random_tensor({3, 3, 3, 2}, rng);
    const auto b = random_tensor({3}, rng);
    const auto x = random_tensor({2, 2, 6, 6}, rng);
    CHECK(vec(standard_conv_forward(x, w, b).data()) == vec(standard_conv_forward(x, w, b).data()));
}

TEST_CASE("grad_check examples") {
    Tensor x({3}, {1, 2, 3});
    CHECK(grad_check([](const Tensor& in) { return sum(square(in)); }, x) < 1e-8);
    Tensor x2({3}, {1, 2, 3});
    CHECK(grad_check([](const Tensor&) { return Tensor::scalar(4.0); }, x2) == 0.0);

    int calls = 0;
    Tensor x3({1}, {1.0});
    CHECK_THROWS_AS(grad_check([&](const Tensor& in) { return add(sum(in), static_cast<double>(++calls)); }, x3),
                    NonDeterministicError);
}

TEST_CASE("composed conv, relu and pool network passes grad_check") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const auto x = random_tensor({1, 2, 8, 8}, rng, true);
        const auto w1 = random_tensor({3, 3, 3, 2}, rng, true);
        const auto b1 = random_tensor({3}, rng, true);
        const auto w2 = random_tensor({2, 3, 3, 3}, rng, true);
        const auto b2 = random_tensor({2}, rng, true);
        const auto target = random_tensor({1, 2, 4, 4}, rng);
        auto f = [&] {
            auto h = relu(standard_conv_forward(x, w1, b1));
            h = maxpool2(h);
            return sum(mul(standard_conv_forward(h, w2, b2, 2.0), target));
        };
        const auto r = grad_check(f, {x, w1, b1, w2, b2}, 1e-5);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("sgd examples") {
    SUBCASE("plain step") {
        Tensor p({1}, {0.0}, true);
        p.mutable_grad()[0] = 1.0;
        Sgd opt({p}, 0.1, 0.0);
        opt.step();
        CHECK(p.data()[0] == doctest::Approx(-0.1));
        CHECK(p.grad()[0] == 0.0);
    }
    SUBCASE("momentum unrolled twice") {
        Tensor p({1}, {0.0}, true);
        Sgd opt({p}, 0.5, 0.9);
        const double g = 2.0;
        for (int i = 0; i < 2; ++i) {
            p.mutable_grad()[0] = g;
            opt.step();
        }
        CHECK(p.data()[0] == doctest::Approx(-0.5 * g * (1.0 + 1.9)).epsilon(1e-15));
    }
    SUBCASE("zero learning rate") {
        Tensor p({2}, {1.0, -2.0}, true);
        p.mutable_grad()[0] = 3.0;
        p.mutable_grad()[1] = 4.0;
        Sgd opt({p}, 0.0, 0.9);
        opt.step();
        CHECK(vec(p.data()) == std::vector<double>{1.0, -2.0});
    }
    SUBCASE("missing grad") {
        Tensor p({1}, {0.0}, true);
        Sgd opt({p}, 0.1, 0.0);
        CHECK_THROWS_AS(opt.step(), GraphError);
    }
}

TEST_CASE("tns codec") {
    const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6.5});
    const auto bytes = encode_tns(t);
    REQUIRE(bytes.size() == 7 + 2 * 4 + 6 * 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TNSR");
    CHECK(bytes[4] == 0x01);
    CHECK(bytes[5] == 0x01);
    CHECK(bytes[6] == 2);
    CHECK(bytes[7] == 2);
    CHECK(bytes[8] == 0);
    CHECK(bytes[11] == 3);
    // 1.0 as float64 LE: 00 00 00 00 00 00 f0 3f
    CHECK(bytes[15 + 6] == 0xf0);
    CHECK(bytes[15 + 7] == 0x3f);

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Shape shape;
        const int rank = static_cast<int>(rng() % 5);
        for (int i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(rng() % 4 + 1));
        const auto r = random_tensor(shape, rng);
        const auto back = decode_tns(encode_tns(r));
        CHECK(back.shape() == r.shape());
        CHECK(vec(back.data()) == vec(r.data()));
    }

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_tns(bad), FormatError);
    bad = bytes;
    bad[5] = 0x02;
    CHECK_THROWS_AS(decode_tns(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_tns(bad), FormatError);
}
