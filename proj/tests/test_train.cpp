// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include <doctest.h>

#include <cmath>

#include "racecar/errors.hpp"
#include "racecar/train.hpp"
#include "test_helpers.hpp"

using namespace racecar;
using namespace racecar::testing;

namespace {

Dataset random_classification(std::size_t n, std::size_t dim, std::size_t classes, Rng& rng) {
    Dataset d;
    d.inputs = Tensor(Shape{n, dim});
    for (double& v : d.inputs.data) v = rng.uniform(-1, 1);
    d.labels.resize(n);
    for (auto& l : d.labels) l = static_cast<int>(rng.uniform_index(classes));
    d.num_classes = classes;
    d.split = "train";
    return d;
}

bool params_equal(const Network& a, const Network& b) {
    for (std::size_t i = 0; i < a.units.size(); ++i) {
        if (!(a.units[i].weight == b.units[i].weight)) return false;
        if (a.units[i].bias != b.units[i].bias) return false;
        if (a.units[i].has_bn &&
            (a.units[i].bn.gamma != b.units[i].bn.gamma ||
             a.units[i].bn.beta != b.units[i].bn.beta ||
             a.units[i].bn.run_mean != b.units[i].bn.run_mean ||
             a.units[i].bn.run_var != b.units[i].bn.run_var))
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("train: zero epochs leaves parameters unchanged") {
    Rng rng(1);
    Dataset data = random_classification(10, 4, 2, rng);
    Network net = build_network({LayerSpec::dense(2)}, {4}, 5);
    TrainConfig cfg;
    cfg.epochs = 0;
    TrainResult res = train(net, data, nullptr, cfg);
    CHECK(params_equal(res.net, net));
    REQUIRE(res.log.rows.size() == 1);
    CHECK(res.log.rows[0].epoch == 0);
}

TEST_CASE("train: identical seeds give bitwise-identical parameters and metrics") {
    Rng rng(2);
    Dataset data = random_classification(24, 6, 2, rng);
    Network net = build_network(
        {LayerSpec::dense(5), LayerSpec::activation(Act::Tanh), LayerSpec::dense(2)}, {6}, 3);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.seed = 3;
    cfg.learning_rate = 1e-2;
    TrainResult a = train(net, data, nullptr, cfg);
    TrainResult b = train(net, data, nullptr, cfg);
    CHECK(params_equal(a.net, b.net));
    CHECK(a.log.same_results(b.log));

    cfg.seed = 4;
    TrainResult c = train(net, data, nullptr, cfg);
    CHECK(!params_equal(a.net, c.net));
}

TEST_CASE("optimizers: a zero-gradient step is a no-op (including Adam step 1)") {
    Network net = build_network({LayerSpec::dense(3)}, {4}, 9);
    const Network before = net;
    ParamGrads zeros = ParamGrads::zeros_like(net);

    Optimizer adam;
    adam.kind = OptimizerKind::Adam;
    adam.init(net);
    adam.step(net, zeros);
    CHECK(params_equal(net, before));

    Optimizer sgd;
    sgd.kind = OptimizerKind::Sgd;
    sgd.init(net);
    sgd.step(net, zeros);
    CHECK(params_equal(net, before));
}

TEST_CASE("train: logged row reflects the state entering that epoch") {
    Rng rng(7);
    Dataset data = random_classification(16, 4, 2, rng);
    Network net = build_network({LayerSpec::dense(2)}, {4}, 21);

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.5;  // large so every epoch moves the loss
    cfg.seed = 1;

    TrainResult res = train(net, data, nullptr, cfg);
    REQUIRE(res.log.rows.size() == 4);  // epochs 0..3

    // Row 0 must equal the metrics of the untouched initial network.
    TrainConfig probe = cfg;
    probe.epochs = 0;
    TrainResult initial = train(net, data, nullptr, probe);
    CHECK(res.log.rows[0].base_loss == initial.log.rows[0].base_loss);

    // Row i equals the first row of a run stopped after i epochs.
    for (std::size_t i = 1; i <= 3; ++i) {
        TrainConfig partial = cfg;
        partial.epochs = i;
        TrainResult p = train(net, data, nullptr, partial);
        CHECK(res.log.rows[i].base_loss == doctest::Approx(p.log.rows.back().base_loss));
        CHECK(res.log.rows[i].epoch == p.log.rows.back().epoch);
    }
}

TEST_CASE("train: divergence raises TrainingError with the epoch index") {
    Rng rng(13);
    Dataset data = random_classification(8, 4, 2, rng);
    Network net = build_network({LayerSpec::dense(4), LayerSpec::dense(2)}, {4}, 2);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 1e200;  // both layers blow up, their product overflows
    cfg.optimizer = OptimizerKind::Sgd;
    bool threw = false;
    try {
        train(net, data, nullptr, cfg);
    } catch (const TrainingError& e) {
        threw = true;
        CHECK(e.epoch >= 0);
        CHECK(e.epoch < 50);
    }
    CHECK(threw);
}

TEST_CASE("finetune rejects active regularizers") {
    Rng rng(17);
    Dataset data = random_classification(8, 4, 2, rng);
    Network net = build_network({LayerSpec::dense(2)}, {4}, 2);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.racecar = RacecarConfig::all_layers(1e-4);
    CHECK_THROWS_AS(finetune(net, data, nullptr, cfg), ContractError);

    cfg.racecar.reset();
    cfg.epochs = 0;
    CHECK_NOTHROW(finetune(net, data, nullptr, cfg));
}

TEST_CASE("config exclusivity: racecar plus orthogonality is rejected") {
    TrainConfig cfg;
    cfg.racecar = RacecarConfig::all_layers(1e-4);
    cfg.ortho = OrthoMode::Soft;
    CHECK_THROWS_AS(cfg.validate(2), ContractError);
}

TEST_CASE("finite_diff_check: linear net with an L2 loss is exact to rounding") {
    Rng rng(19);
    Network net = build_network({LayerSpec::dense(3, true)}, {4}, 6);
    Tensor x(Shape{5, 4});
    for (double& v : x.data) v = rng.uniform(-1, 1);

    // loss = 0.5 sum ||y||^2 / batch
    LossProbe probe;
    probe.value = [x](Network& n) {
        ForwardResult f = forward(n, x);
        double s = 0.0;
        for (double v : f.output.data) s += v * v;
        return 0.5 * s / static_cast<double>(x.batch());
    };
    probe.gradient = [x](Network& n) {
        ForwardResult f = forward(n, x, {.training = true, .record = true});
        Tensor g = f.output;
        for (double& v : g.data) v /= static_cast<double>(x.batch());
        return backward(n, f.trace, g);
    };
    CHECK(finite_diff_check(net, probe, 1e-5) < 1e-6);
}

TEST_CASE("finite_diff_check: cross-entropy plus full racecar on a tanh net") {
    Rng rng(23);
    Network net = build_network({LayerSpec::dense(5, true), LayerSpec::activation(Act::Tanh),
                                 LayerSpec::dense(2, true)},
                                {6}, 7);
    Tensor x(Shape{6, 6});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    std::vector<int> labels = {0, 1, 1, 0, 1, 0};

    TrainConfig cfg;
    cfg.racecar = RacecarConfig::all_layers(0.05);
    const LossProbe probe = make_training_loss_probe(cfg, x, labels);
    CHECK(finite_diff_check(net, probe, 1e-5) < 1e-4);
    // Step-size robustness.
    CHECK(finite_diff_check(net, probe, 1e-6) < 1e-4);
}

TEST_CASE("finite_diff_check: layerwise racecar gradients") {
    Rng rng(29);
    Network net = build_network({LayerSpec::dense(5, true), LayerSpec::activation(Act::Tanh),
                                 LayerSpec::dense(3, true),
                                 LayerSpec::activation(Act::Sigmoid), LayerSpec::dense(2, true)},
                                {4}, 8);
    Tensor x(Shape{5, 4});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    std::vector<int> labels = {0, 1, 0, 1, 1};

    TrainConfig cfg;
    cfg.racecar = RacecarConfig::all_layers(0.1, ReversePlan::Variant::Layerwise);
    CHECK(finite_diff_check(net, make_training_loss_probe(cfg, x, labels), 1e-5) < 1e-4);
}

TEST_CASE("finite_diff_check: racecar through batch norm (running stats in reverse)") {
    Rng rng(31);
    Network net = build_network({LayerSpec::dense(6, true), LayerSpec::batch_norm(),
                                 LayerSpec::activation(Act::Tanh), LayerSpec::dense(3, true)},
                                {5}, 9);
    // Give the running stats some history so the reverse BN is not identity.
    Tensor warm(Shape{12, 5});
    for (double& v : warm.data) v = rng.uniform(-2, 2);
    forward(net, warm, {.training = true, .update_running_stats = true});

    Tensor x(Shape{6, 5});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    std::vector<int> labels = {0, 1, 2, 1, 0, 2};

    TrainConfig cfg;
    cfg.racecar = RacecarConfig::all_layers(0.05);
    CHECK(finite_diff_check(net, make_training_loss_probe(cfg, x, labels), 1e-5) < 1e-4);
}

TEST_CASE("finite_diff_check: constrained-subset racecar (input-only ablation)") {
    Rng rng(37);
    Network net = build_network({LayerSpec::dense(4, true), LayerSpec::activation(Act::Tanh),
                                 LayerSpec::dense(2, true)},
                                {4}, 10);
    Tensor x(Shape{4, 4});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    std::vector<int> labels = {0, 1, 1, 0};

    TrainConfig cfg;
    cfg.racecar = RacecarConfig::input_only(0.2);
    CHECK(finite_diff_check(net, make_training_loss_probe(cfg, x, labels), 1e-5) < 1e-4);
}

TEST_CASE("finite_diff_check: soft orthogonality and SRIP training gradients") {
    Rng rng(41);
    Network net = build_network({LayerSpec::dense(4, true), LayerSpec::activation(Act::Tanh),
                                 LayerSpec::dense(2, true)},
                                {5}, 11);
    Tensor x(Shape{4, 5});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    std::vector<int> labels = {0, 1, 0, 1};

    TrainConfig cfg;
    cfg.ortho = OrthoMode::Soft;
    cfg.ortho_weight = 0.05;
    CHECK(finite_diff_check(net, make_training_loss_probe(cfg, x, labels), 1e-5) < 1e-4);

    cfg.ortho = OrthoMode::Srip;
    cfg.ortho_weight = 0.05;
    CHECK(finite_diff_check(net, make_training_loss_probe(cfg, x, labels), 1e-5) < 1e-3);
}

TEST_CASE("stop-gradient ablation changes the racecar gradient") {
    Rng rng(43);
    Network net = build_network({LayerSpec::dense(4, false)}, {4}, 12);
    Tensor x(Shape{4, 4});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    std::vector<int> labels = {0, 1, 0, 1};

    TrainConfig tied;
    tied.base_loss = BaseLoss::None;
    tied.racecar = RacecarConfig::all_layers(1.0);
    TrainConfig untied = tied;
    untied.racecar->tied_gradients = false;

    ParamGrads ga = ParamGrads::zeros_like(net);
    ParamGrads gb = ParamGrads::zeros_like(net);
    eval_batch(net, x, labels, tied, &ga, false);
    eval_batch(net, x, labels, untied, &gb, false);
    double diff = 0.0;
    for (std::size_t i = 0; i < ga.units[0].weight.size(); ++i)
        diff += std::abs(ga.units[0].weight.raw()[i] - gb.units[0].weight.raw()[i]);
    CHECK(diff > 1e-8);
    // Loss values agree; only the gradient path differs.
    const double la = eval_batch(net, x, labels, tied, nullptr, false).reg;
    const double lb = eval_batch(net, x, labels, untied, nullptr, false).reg;
    CHECK(la == doctest::Approx(lb));
}

TEST_CASE("train: racecar-only training converges to the dominant-subspace floor") {
    // A rank-3 weight can at best make M^T M the projector onto the top-3
    // data directions; the loss floor is the residual energy outside them.
    Rng rng(47);
    Network net = build_network({LayerSpec::dense(3, false)}, {6}, 13);
    Dataset data;
    data.inputs = Tensor(Shape{32, 6});
    for (double& v : data.inputs.data) v = rng.uniform(-1, 1);
    data.split = "train";

    Matrix x(32, 6);
    std::copy(data.inputs.data.begin(), data.inputs.data.end(), x.raw().begin());
    const SvdResult s = svd(x);
    double floor = 0.0;
    for (int i = 3; i < 6; ++i) floor += s.sigma[i] * s.sigma[i];
    floor /= 32.0;

    TrainConfig cfg;
    cfg.base_loss = BaseLoss::None;
    cfg.racecar = RacecarConfig::all_layers(1.0);
    cfg.epochs = 500;
    cfg.batch_size = 32;
    cfg.learning_rate = 2e-2;
    cfg.log_every = 100;

    TrainResult res = train(net, data, nullptr, cfg);
    CHECK(res.log.rows.back().reg_loss < res.log.rows.front().reg_loss);
    CHECK(res.log.rows.back().reg_loss == doctest::Approx(floor).epsilon(1e-3));
}

TEST_CASE("metrics CSV has the documented header and LF endings") {
    MetricsLog log;
    log.rows.push_back({0, 1.5, 0.25, 0.5, 0.25, 0.1});
    const std::string csv = log.to_csv();
    CHECK(csv.rfind("epoch,base_loss,reg_loss,train_acc,test_acc,wall_seconds\n", 0) == 0);
    CHECK(csv.find("\r") == std::string::npos);
    CHECK(csv.find("0,1.5,0.25,0.5,0.25,0.1\n") != std::string::npos);
}
