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

ActivationTrace fake_trace(const std::vector<Tensor>& ds) {
    ActivationTrace t;
    for (std::size_t i = 0; i < ds.size(); ++i) t.entries.push_back({i + 1, ds[i]});
    return t;
}

Tensor row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{1, n}, std::move(values));
}

}  // namespace

TEST_CASE("racecar_loss: zero for perfect reconstruction") {
    Tensor d1 = row({1, 2}), d2 = row({3});
    ActivationTrace tr = fake_trace({d1, d2});
    RacecarConfig cfg = RacecarConfig::all_layers(1.0);
    CHECK(racecar_loss(tr, {d1}, cfg) == 0.0);
}

TEST_CASE("racecar_loss: hand L2 value and linearity in lambda") {
    ActivationTrace tr = fake_trace({row({0, 1}), row({0})});
    RacecarConfig cfg = RacecarConfig::all_layers(1.0);
    CHECK(racecar_loss(tr, {row({0, 0})}, cfg) == doctest::Approx(1.0));

    RacecarConfig doubled = RacecarConfig::all_layers(2.0);
    CHECK(racecar_loss(tr, {row({0, 0})}, doubled) == doctest::Approx(2.0));
}

TEST_CASE("racecar_loss: shape mismatch is a contract/shape error") {
    ActivationTrace tr = fake_trace({row({0, 1}), row({0})});
    RacecarConfig cfg = RacecarConfig::all_layers(1.0);
    CHECK_THROWS(racecar_loss(tr, {row({0, 0, 0})}, cfg));
}

TEST_CASE("RacecarConfig validation") {
    RacecarConfig zero;
    zero.lambdas = {0.0};
    CHECK_THROWS_AS(zero.validate(2), ContractError);

    RacecarConfig bad_idx = RacecarConfig::all_layers(1.0);
    bad_idx.constrained_layers = {5};
    CHECK_THROWS_AS(bad_idx.validate(2), ContractError);

    RacecarConfig rr1 = RacecarConfig::input_only(0.5);
    const auto l = rr1.resolve_lambdas(4);
    CHECK(l == std::vector<double>{0.5, 0, 0, 0});
}

TEST_CASE("ortho_loss_soft: orthogonal, scaled-identity and zero inputs") {
    Rng rng(2);
    const Matrix q = random_orthogonal(4, rng);
    CHECK(ortho_loss_soft({q}) < 1e-24);

    Matrix two_i = Matrix::identity(2);
    two_i *= 2.0;
    CHECK(ortho_loss_soft({two_i}) == doctest::Approx(18.0));

    CHECK(ortho_loss_soft({Matrix(5, 5)}) == doctest::Approx(5.0));
}

TEST_CASE("ortho_loss_soft gradient matches finite differences") {
    Rng rng(5);
    Matrix m = random_matrix(4, 3, rng);
    const Matrix g = ortho_loss_soft_grad(m);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double orig = m(i, j);
            m(i, j) = orig + eps;
            const double lp = ortho_loss_soft({m});
            m(i, j) = orig - eps;
            const double lm = ortho_loss_soft({m});
            m(i, j) = orig;
            CHECK(g(i, j) == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-5));
        }
}

TEST_CASE("srip_loss: orthogonal input, diagonal oracle and beta scaling") {
    Rng rng(3);
    const Matrix q = random_orthogonal(5, rng);
    CHECK(srip_loss({q}, 1.0) < 1e-10);

    // diag(3,2): M^T M - I = diag(8,3), largest magnitude 8.
    Matrix d(2, 2, {3, 0, 0, 2});
    CHECK(srip_loss({d}, 1.0) == doctest::Approx(8.0).epsilon(1e-6));
    CHECK(srip_loss({d}, 0.0) == 0.0);
    CHECK(srip_loss({d}, 0.5) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("srip gradient matches finite differences away from eigenvalue ties") {
    Rng rng(11);
    Matrix m = random_matrix(4, 3, rng, 1.5);
    const Matrix g = srip_grad(m);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double orig = m(i, j);
            m(i, j) = orig + eps;
            const double lp = srip_loss({m}, 1.0);
            m(i, j) = orig - eps;
            const double lm = srip_loss({m}, 1.0);
            m(i, j) = orig;
            const double fd = (lp - lm) / (2 * eps);
            CHECK(std::abs(g(i, j) - fd) < 1e-4 * std::max(1.0, std::abs(fd)));
        }
}

TEST_CASE("regularizer equivalence: soft orthogonality and SRIP share their zero set") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(5);
        Matrix m = random_orthogonal(n, rng);
        const bool perturb = trial % 2 == 1;
        if (perturb) m(rng.uniform_index(n), rng.uniform_index(n)) += 0.05;
        const double soft = ortho_loss_soft({m});
        const double srip = srip_loss({m}, 1.0);
        CHECK((soft < 1e-10) == (srip < 1e-10));
        CHECK((soft < 1e-10) == !perturb);
    }
}

TEST_CASE("cross_entropy: uniform, saturated and scalar-oracle logits") {
    Tensor uniform(Shape{1, 4});
    CHECK(cross_entropy(uniform, {2}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor hot(Shape{1, 3});
    hot.data = {20.0, 0.0, 0.0};
    CHECK(cross_entropy(hot, {0}) < 1e-6);

    Tensor two(Shape{1, 2});
    two.data = {1.0, 0.0};
    // -ln(e/(e+1)) = ln(1+e^-1)
    CHECK(cross_entropy(two, {0}) == doctest::Approx(0.31326168751822286).epsilon(1e-9));
}

TEST_CASE("cross_entropy: error paths") {
    Tensor empty(Shape{0, 2});
    CHECK_THROWS_AS(cross_entropy(empty, {}), ContractError);
    Tensor one(Shape{1, 2});
    CHECK_THROWS_AS(cross_entropy(one, {5}), ContractError);
}

TEST_CASE("total_loss is the plain sum") {
    CHECK(total_loss(1.0, 0.0) == 1.0);
    CHECK(total_loss(0.25, 0.5) == 0.75);
}

TEST_CASE("racecar layer loss vanishes exactly on the unit-eigenvalue eigenspace") {
    // With orthogonal M every datum satisfies M^T M x = x, so the loss is 0;
    // adding any component that M^T M does not preserve makes it positive.
    Rng rng(31);
    Network net = build_network({LayerSpec::dense(4, false)}, {4}, 1);
    net.units[0].weight = random_orthogonal(4, rng);

    Tensor x(Shape{6, 4});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    ForwardResult f = forward(net, x, {.record = true});
    std::vector<Tensor> lw = reverse_layerwise(net, f.trace);
    RacecarConfig cfg = RacecarConfig::all_layers(1.0);
    CHECK(racecar_loss(f.trace, lw, cfg) < 1e-24);

    net.units[0].weight(0, 0) += 0.3;
    ForwardResult f2 = forward(net, x, {.record = true});
    std::vector<Tensor> lw2 = reverse_layerwise(net, f2.trace);
    CHECK(racecar_loss(f2.trace, lw2, cfg) > 1e-6);
}

TEST_CASE("full-rank data: layerwise racecar loss and soft orthogonality vanish together") {
    Rng rng(41);
    const std::size_t n = 4;
    // Full-rank batch.
    Tensor x(Shape{8, n});
    for (double& v : x.data) v = rng.uniform(-1, 1);

    auto layer_loss = [&](const Matrix& w) {
        Network net = build_network({LayerSpec::dense(n, false)}, {n}, 0);
        net.units[0].weight = w;
        ForwardResult f = forward(net, x, {.record = true});
        std::vector<Tensor> lw = reverse_layerwise(net, f.trace);
        return racecar_loss(f.trace, lw, RacecarConfig::all_layers(1.0));
    };

    const Matrix q = random_orthogonal(n, rng);
    CHECK(layer_loss(q) < 1e-20);
    CHECK(ortho_loss_soft({q}) < 1e-20);

    Matrix p = q;
    p(1, 2) += 0.1;
    CHECK(layer_loss(p) > 1e-8);
    CHECK(ortho_loss_soft({p}) > 1e-8);
}
