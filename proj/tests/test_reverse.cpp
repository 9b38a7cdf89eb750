// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include <doctest.h>

#include <cmath>

#include "racecar/errors.hpp"
#include "racecar/losses.hpp"
#include "racecar/network.hpp"
#include "racecar/reverse.hpp"
#include "test_helpers.hpp"

using namespace racecar;
using namespace racecar::testing;

namespace {

Tensor row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{1, n}, std::move(values));
}

}  // namespace

TEST_CASE("build_reverse: single dense stage is subtract-bias then transpose") {
    Network net = build_network({LayerSpec::dense(3, true)}, {4}, 1);
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);
    CHECK(describe(plan) == "-b1 -> Ft1");
}

TEST_CASE("build_reverse: three-conv chain mirrors with BN/AF shifted one stage") {
    // I(32,32,1) -> C1(5,20,1)+b -> BN -> relu -> MP -> C2(4,40,1)+b -> BN
    //   -> tanh -> MP -> C3(3,60,1)+b -> BN -> sigm
    Network net = build_network(
        {LayerSpec::conv2d(5, 20, 1), LayerSpec::batch_norm(), LayerSpec::activation(Act::Relu),
         LayerSpec::max_pool(), LayerSpec::conv2d(4, 40, 1), LayerSpec::batch_norm(),
         LayerSpec::activation(Act::Tanh), LayerSpec::max_pool(), LayerSpec::conv2d(3, 60, 1),
         LayerSpec::batch_norm(), LayerSpec::activation(Act::Sigmoid)},
        {1, 32, 32}, 5);
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Layerwise);
    CHECK(describe(plan) ==
          "-b3 -> D3(3,40,1) -> BN2 -> tanh -> UP -> "
          "-b2 -> D2(4,20,1) -> BN1 -> relu -> UP -> "
          "-b1 -> D1(5,1,1)");
}

TEST_CASE("build_reverse: full variant rejects max pooling") {
    Network net = build_network(
        {LayerSpec::conv2d(3, 4, 1), LayerSpec::max_pool(), LayerSpec::conv2d(3, 8, 1)},
        {1, 8, 8}, 2);
    CHECK_THROWS_AS(build_reverse(net, ReversePlan::Variant::Full), BuildError);
    CHECK_NOTHROW(build_reverse(net, ReversePlan::Variant::Layerwise));
}

TEST_CASE("reverse_full: an orthogonal layer inverts exactly") {
    Rng rng(3);
    Network net = build_network({LayerSpec::dense(4, false)}, {4}, 0);
    net.units[0].weight = random_orthogonal(4, rng);
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);

    Tensor x = row({0.3, -1.2, 0.5, 2.0});
    ForwardResult f = forward(net, x, {.record = true});
    ActivationTrace rev = reverse_full(plan, f.output);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(rev.d(1).data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
}

TEST_CASE("reverse_full: projection layer reconstructs only the kept direction") {
    Network net = build_network({LayerSpec::dense(2, false)}, {2}, 0);
    net.units[0].weight = Matrix(2, 2, {1, 0, 0, 0});
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);

    Tensor x = row({0, 1});
    ForwardResult f = forward(net, x, {.record = true});
    ActivationTrace rev = reverse_full(plan, f.output);
    CHECK(rev.d(1).data == std::vector<double>{0, 0});
    // The reconstruction residual is exactly the input here.
    RacecarConfig cfg = RacecarConfig::all_layers(1.0);
    std::vector<Tensor> recon{rev.d(1)};
    CHECK(racecar_loss(f.trace, recon, cfg) == doctest::Approx(1.0));
}

TEST_CASE("reverse_full: linear two-layer chain matches the explicit matrix product") {
    Rng rng(7);
    Network net =
        build_network({LayerSpec::dense(5, false), LayerSpec::dense(3, false)}, {4}, 9);
    const Matrix m1 = net.units[0].weight;
    const Matrix m2 = net.units[1].weight;

    Tensor x = row({0.1, -0.7, 1.3, 0.4});
    ForwardResult f = forward(net, x, {.record = true});
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);
    ActivationTrace rev = reverse_full(plan, f.output);

    // d'_1 = M1^T M2^T M2 M1 x
    std::vector<double> expect = matvec_t(
        m1, matvec_t(m2, matvec(m2, matvec(m1, std::vector<double>(x.data)))));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(rev.d(1).data[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    // d'_2 = M2^T M2 M1 x
    std::vector<double> expect2 = matvec_t(m2, matvec(m2, matvec(m1, std::vector<double>(x.data))));
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(rev.d(2).data[i] == doctest::Approx(expect2[i]).epsilon(1e-12));
}

TEST_CASE("reverse_layerwise: single layer coincides with the full variant") {
    Rng rng(13);
    Network net = build_network({LayerSpec::dense(3, true)}, {5}, 21);
    for (double& b : net.units[0].bias) b = rng.uniform(-1, 1);

    Tensor x = row({1, 2, 3, 4, 5});
    ForwardResult f = forward(net, x, {.record = true});
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);
    ActivationTrace full = reverse_full(plan, f.output);
    std::vector<Tensor> lw = reverse_layerwise(net, f.trace);
    REQUIRE(lw.size() == 1);
    CHECK(lw[0] == full.d(1));
}

TEST_CASE("reverse_layerwise: uses the forward activation, not the chained one") {
    Network net =
        build_network({LayerSpec::dense(5, false), LayerSpec::dense(3, false)}, {4}, 9);
    const Matrix m1 = net.units[0].weight;

    Tensor x = row({0.1, -0.7, 1.3, 0.4});
    ForwardResult f = forward(net, x, {.record = true});
    std::vector<Tensor> lw = reverse_layerwise(net, f.trace);

    // d'_1 = M1^T M1 x (from the forward d_2), not the full-chain value.
    std::vector<double> expect = matvec_t(m1, matvec(m1, std::vector<double>(x.data)));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(lw[0].data[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);
    ActivationTrace full = reverse_full(plan, f.output);
    double diff = 0.0;
    for (std::size_t i = 0; i < 4; ++i) diff += std::abs(lw[0].data[i] - full.d(1).data[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("reverse_layerwise: works on pooled nets where full errors") {
    Rng rng(4);
    Network net = build_network(
        {LayerSpec::conv2d(3, 4, 1), LayerSpec::activation(Act::Relu), LayerSpec::max_pool(),
         LayerSpec::conv2d(3, 8, 1)},
        {1, 8, 8}, 6);
    Tensor x(Shape{2, 1, 8, 8});
    for (double& v : x.data) v = rng.uniform(0, 1);
    ForwardResult f = forward(net, x, {.record = true});
    std::vector<Tensor> lw = reverse_layerwise(net, f.trace);
    REQUIRE(lw.size() == 2);
    // Shape contract: shape(d'_m) = shape(d_m).
    CHECK(lw[0].shape == f.trace.d(1).shape);
    CHECK(lw[1].shape == f.trace.d(2).shape);
}

TEST_CASE("reverse plan aliases forward weights (no rebuild after a step)") {
    Network net = build_network({LayerSpec::dense(4, false)}, {4}, 8);
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);
    Tensor x = row({1, 0, 0, 0});
    ForwardResult f1 = forward(net, x, {.record = true});
    ActivationTrace r1 = reverse_full(plan, f1.output);

    net.units[0].weight(0, 0) += 0.5;  // optimizer-style in-place update
    ForwardResult f2 = forward(net, x, {.record = true});
    ActivationTrace r2 = reverse_full(plan, f2.output);
    CHECK(r1.d(1).data != r2.d(1).data);
}

TEST_CASE("reverse pass: shape contract holds on a mixed conv/dense net") {
    Rng rng(15);
    Network net = build_network(
        {LayerSpec::conv2d(5, 6, 1), LayerSpec::batch_norm(), LayerSpec::activation(Act::Relu),
         LayerSpec::max_pool(), LayerSpec::conv2d(4, 12, 1), LayerSpec::batch_norm(),
         LayerSpec::activation(Act::Tanh), LayerSpec::max_pool(), LayerSpec::conv2d(3, 16, 1),
         LayerSpec::activation(Act::Sigmoid)},
        {1, 16, 16}, 10);
    Tensor x(Shape{2, 1, 16, 16});
    for (double& v : x.data) v = rng.uniform(0, 1);
    ForwardResult f = forward(net, x, {.record = true});
    std::vector<Tensor> lw = reverse_layerwise(net, f.trace);
    for (std::size_t m = 1; m <= 3; ++m) CHECK(lw[m - 1].shape == f.trace.d(m).shape);
}

TEST_CASE("variant equivalence at the loss optimum") {
    // Orthogonal square weights, no bias/activation: every layer satisfies
    // M^T M d = d, so both variants reproduce the forward trace exactly.
    Rng rng(19);
    Network net =
        build_network({LayerSpec::dense(4, false), LayerSpec::dense(4, false)}, {4}, 3);
    net.units[0].weight = random_orthogonal(4, rng);
    net.units[1].weight = random_orthogonal(4, rng);

    Tensor x(Shape{3, 4});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    ForwardResult f = forward(net, x, {.record = true});

    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Full);
    ActivationTrace full = reverse_full(plan, f.output);
    std::vector<Tensor> lw = reverse_layerwise(net, f.trace);

    RacecarConfig cfg = RacecarConfig::all_layers(1.0);
    std::vector<Tensor> full_recon{full.d(1), full.d(2)};
    CHECK(racecar_loss(f.trace, full_recon, cfg) < 1e-20);
    CHECK(racecar_loss(f.trace, lw, cfg) < 1e-20);
    for (std::size_t m = 1; m <= 2; ++m) {
        for (std::size_t i = 0; i < lw[m - 1].data.size(); ++i) {
            CHECK(lw[m - 1].data[i] ==
                  doctest::Approx(f.trace.d(m).data[i]).epsilon(1e-10));
            CHECK(full.d(m).data[i] ==
                  doctest::Approx(f.trace.d(m).data[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("reverse output activation is opt-in and applies only to the last stage") {
    Network net = build_network({LayerSpec::dense(3, false)}, {3}, 12);
    net.units[0].weight = Matrix::identity(3);
    Tensor x = row({-1.0, 0.5, -0.2});
    ForwardResult f = forward(net, x, {.record = true});

    ReversePlan off = build_reverse(net, ReversePlan::Variant::Full);
    CHECK(reverse_full(off, f.output).d(1).data == std::vector<double>{-1.0, 0.5, -0.2});

    ReversePlan on = build_reverse(net, ReversePlan::Variant::Full, true, Act::Relu);
    CHECK(describe(on) == "Ft1 -> out_relu");
    CHECK(reverse_full(on, f.output).d(1).data == std::vector<double>{0.0, 0.5, 0.0});
}
