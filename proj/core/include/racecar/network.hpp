// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "racecar/matrix.hpp"
#include "racecar/tensor.hpp"

namespace racecar {

enum class Act { None, Relu, LeakyRelu, Tanh, Sigmoid };

const char* act_name(Act a);

/// One entry of the declarative layer list.
struct LayerSpec {
    enum class Kind { Dense, Conv2d, BatchNorm, Activation, MaxPool, Upsample };

    Kind kind = Kind::Dense;
    std::size_t out_features = 0;  // Dense
    std::size_t kernel = 0;        // Conv2d
    std::size_t out_channels = 0;  // Conv2d
    std::size_t stride = 1;        // Conv2d
    bool has_bias = true;          // Dense / Conv2d
    Act act = Act::None;           // Activation; leaky slope fixed at 0.2

    static LayerSpec dense(std::size_t out_features, bool bias = true);
    static LayerSpec conv2d(std::size_t kernel, std::size_t out_channels,
                            std::size_t stride = 1, bool bias = true);
    static LayerSpec batch_norm();
    static LayerSpec activation(Act a);
    static LayerSpec max_pool();   // 2x2, stride 2
    static LayerSpec upsample();   // 2x nearest

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct BatchNormState {
    std::vector<double> gamma, beta, run_mean, run_var;
    double momentum = 0.99;
    double eps = 1e-5;
};

enum class Resample { None, MaxPool, Upsample };

/// A parametric layer together with the ops fused around it. The flat
/// LayerSpec list is grouped so that unit m maps d_m -> d_{m+1}:
///   d_m -> [resample] -> weight*x + b -> [batch norm] -> [activation] -> d_{m+1}
struct Unit {
    Resample pre = Resample::None;
    bool is_conv = false;

    // Dense: out x in. Conv2d: (k*k*cin) x cout, row index (u*k+v)*cin + ci.
    Matrix weight;
    bool has_bias = false;
    std::vector<double> bias;

    std::size_t kernel = 0, stride = 1, in_channels = 0, out_channels = 0;

    bool has_bn = false;
    BatchNormState bn;
    bool has_act = false;
    Act act = Act::None;

    Shape d_in_shape;    // shape of d_m (per sample)
    Shape lin_in_shape;  // after the pre-resample
    Shape out_shape;     // shape of d_{m+1}

    std::size_t fan_in() const;
    std::size_t fan_out() const;
};

struct Network {
    std::vector<LayerSpec> spec;
    Shape input_shape;  // per sample
    std::vector<Unit> units;
    std::uint64_t build_id = 0;

    std::size_t num_units() const { return units.size(); }
    Shape output_shape() const { return units.empty() ? input_shape : units.back().out_shape; }
};

/// Builds the parameter store for a layer list. Weights are seeded uniform
/// in +-sqrt(6/fan_in), biases zero, BN at identity; bitwise deterministic
/// for a fixed seed.
Network build_network(const std::vector<LayerSpec>& spec, const Shape& input_shape,
                      std::uint64_t seed);

struct ForwardOptions {
    bool training = false;             // BN uses batch statistics
    bool update_running_stats = false; // honored only when training
    bool record = false;               // capture the activation trace
};

/// Per-unit intermediates needed to run backward.
struct UnitCache {
    Tensor lin_in;                     // input to the linear op (post-resample)
    Tensor pre_bn;                     // linear output, kept when the unit has BN
    Tensor pre_act;                    // value entering the activation
    std::vector<double> mean, var;     // batch statistics used (BN, training)
    std::vector<std::uint32_t> argmax; // max-pool source indices
};

/// Ordered record of the post-activation intermediates d_1..d_{n+1} of one
/// forward pass (d_1 = input, d_{n+1} = output; d_m is taken after the
/// activation and before any pooling of the next unit).
struct ActivationTrace {
    struct Entry {
        std::size_t layer_index = 0;  // m, 1-based
        Tensor value;
    };
    std::vector<Entry> entries;
    std::uint64_t net_build_id = 0;
    bool training = false;
    std::vector<UnitCache> caches;  // one per unit when recorded for backward

    bool empty() const { return entries.empty(); }
    /// d_m, 1-based.
    const Tensor& d(std::size_t m) const;
};

struct ForwardResult {
    Tensor output;
    ActivationTrace trace;  // empty unless record was set
};

/// Applies the units in order. Throws NumericError naming the layer if an
/// intermediate goes non-finite; ShapeError if the input does not match.
ForwardResult forward(const Network& net, const Tensor& input, const ForwardOptions& opts = {});

struct UnitGrads {
    Matrix weight;
    std::vector<double> bias;
    std::vector<double> gamma, beta;
};

struct ParamGrads {
    std::vector<UnitGrads> units;

    static ParamGrads zeros_like(const Network& net);
    ParamGrads& operator+=(const ParamGrads& other);
    void scale(double s);
    double max_abs() const;
};

/// Reverse-mode gradients of a scalar loss with upstream gradient
/// `output_grad` at d_{n+1}. The trace must come from forward(record=true,
/// same net, same BN mode).
ParamGrads backward(const Network& net, const ActivationTrace& trace, const Tensor& output_grad);

/// backward() with extra gradient injections: adjoints[m-1], when non-empty,
/// is added to the gradient flowing through d_m. Returns the gradient at d_1
/// and accumulates parameter gradients into `grads`.
Tensor backward_with_adjoints(const Network& net, const ActivationTrace& trace,
                              const Tensor& output_grad, const std::vector<Tensor>* adjoints,
                              ParamGrads& grads);

/// Number of trainable scalars.
std::size_t param_count(const Network& net);

/// Visits every trainable scalar in a fixed declaration order.
template <typename Fn>
void for_each_param(Network& net, Fn&& fn) {
    for (auto& u : net.units) {
        for (double& w : u.weight.raw()) fn(w);
        if (u.has_bias)
            for (double& b : u.bias) fn(b);
        if (u.has_bn) {
            for (double& g : u.bn.gamma) fn(g);
            for (double& b : u.bn.beta) fn(b);
        }
    }
}

/// Visits (param, grad) pairs in the same order as for_each_param.
template <typename Fn>
void for_each_param_grad(Network& net, ParamGrads& grads, Fn&& fn) {
    for (std::size_t ui = 0; ui < net.units.size(); ++ui) {
        auto& u = net.units[ui];
        auto& g = grads.units[ui];
        for (std::size_t i = 0; i < u.weight.size(); ++i)
            fn(u.weight.raw()[i], g.weight.raw()[i]);
        if (u.has_bias)
            for (std::size_t i = 0; i < u.bias.size(); ++i) fn(u.bias[i], g.bias[i]);
        if (u.has_bn) {
            for (std::size_t i = 0; i < u.bn.gamma.size(); ++i) fn(u.bn.gamma[i], g.gamma[i]);
            for (std::size_t i = 0; i < u.bn.beta.size(); ++i) fn(u.bn.beta[i], g.beta[i]);
        }
    }
}

}  // namespace racecar
