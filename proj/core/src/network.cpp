// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/network.hpp"

#include <atomic>
#include <cmath>

#include "kernels.hpp"
#include "racecar/errors.hpp"
#include "racecar/rng.hpp"

namespace racecar {

namespace k = kernels;

const char* act_name(Act a) {
    switch (a) {
        case Act::None: return "none";
        case Act::Relu: return "relu";
        case Act::LeakyRelu: return "lrelu";
        case Act::Tanh: return "tanh";
        case Act::Sigmoid: return "sigm";
    }
    return "?";
}

LayerSpec LayerSpec::dense(std::size_t out_features, bool bias) {
    LayerSpec s;
    s.kind = Kind::Dense;
    s.out_features = out_features;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::conv2d(std::size_t kernel, std::size_t out_channels, std::size_t stride,
                            bool bias) {
    LayerSpec s;
    s.kind = Kind::Conv2d;
    s.kernel = kernel;
    s.out_channels = out_channels;
    s.stride = stride;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::batch_norm() {
    LayerSpec s;
    s.kind = Kind::BatchNorm;
    return s;
}

LayerSpec LayerSpec::activation(Act a) {
    LayerSpec s;
    s.kind = Kind::Activation;
    s.act = a;
    return s;
}

LayerSpec LayerSpec::max_pool() {
    LayerSpec s;
    s.kind = Kind::MaxPool;
    return s;
}

LayerSpec LayerSpec::upsample() {
    LayerSpec s;
    s.kind = Kind::Upsample;
    return s;
}

std::size_t Unit::fan_in() const {
    if (is_conv) return kernel * kernel * in_channels;
    return weight.cols();
}

std::size_t Unit::fan_out() const {
    if (is_conv) return out_channels;
    return weight.rows();
}

namespace {

std::atomic<std::uint64_t> g_build_counter{1};

[[noreturn]] void build_fail(std::size_t layer_idx, const std::string& why) {
    throw BuildError("layer " + std::to_string(layer_idx + 1) + ": " + why);
}

}  // namespace

Network build_network(const std::vector<LayerSpec>& spec, const Shape& input_shape,
                      std::uint64_t seed) {
    if (spec.empty()) throw BuildError("empty layer list");
    if (shape_numel(input_shape) == 0) throw BuildError("empty input shape");

    Network net;
    net.spec = spec;
    net.input_shape = input_shape;

    Shape cur = input_shape;  // shape of the running d_m
    Unit pending;             // unit under construction (pre-resample seen)
    bool pending_resample = false;
    Shape resampled = cur;

    auto validate_param = [&](std::size_t i, const LayerSpec& l) {
        if (l.kind == LayerSpec::Kind::Dense && l.out_features == 0)
            build_fail(i, "Dense needs out_features >= 1");
        if (l.kind == LayerSpec::Kind::Conv2d &&
            (l.kernel == 0 || l.out_channels == 0 || l.stride == 0))
            build_fail(i, "Conv2d needs kernel, out_channels and stride >= 1");
    };

    for (std::size_t i = 0; i < spec.size(); ++i) {
        const LayerSpec& l = spec[i];
        switch (l.kind) {
            case LayerSpec::Kind::MaxPool:
            case LayerSpec::Kind::Upsample: {
                if (pending_resample)
                    build_fail(i, "stacked resampling without a parametric layer in between");
                if (resampled.size() != 3)
                    build_fail(i, std::string(l.kind == LayerSpec::Kind::MaxPool
                                                  ? "MaxPool"
                                                  : "Upsample") +
                                      " needs a {C,H,W} input, got " + shape_to_string(resampled));
                if (l.kind == LayerSpec::Kind::MaxPool) {
                    if (resampled[1] % 2 != 0 || resampled[2] % 2 != 0)
                        build_fail(i, "MaxPool needs even spatial dims, got " +
                                          shape_to_string(resampled));
                    pending.pre = Resample::MaxPool;
                    resampled = {resampled[0], resampled[1] / 2, resampled[2] / 2};
                } else {
                    pending.pre = Resample::Upsample;
                    resampled = {resampled[0], resampled[1] * 2, resampled[2] * 2};
                }
                pending_resample = true;
                break;
            }
            case LayerSpec::Kind::Dense: {
                validate_param(i, l);
                Unit u = pending;
                u.is_conv = false;
                u.d_in_shape = cur;
                u.lin_in_shape = resampled;
                u.weight = Matrix(l.out_features, shape_numel(resampled));
                u.has_bias = l.has_bias;
                if (l.has_bias) u.bias.assign(l.out_features, 0.0);
                u.out_shape = {l.out_features};
                net.units.push_back(std::move(u));
                cur = net.units.back().out_shape;
                resampled = cur;
                pending = Unit{};
                pending_resample = false;
                break;
            }
            case LayerSpec::Kind::Conv2d: {
                validate_param(i, l);
                if (resampled.size() != 3)
                    build_fail(i, "Conv2d needs a {C,H,W} input, got " +
                                      shape_to_string(resampled));
                Unit u = pending;
                u.is_conv = true;
                u.d_in_shape = cur;
                u.lin_in_shape = resampled;
                u.kernel = l.kernel;
                u.stride = l.stride;
                u.in_channels = resampled[0];
                u.out_channels = l.out_channels;
                u.weight = Matrix(l.kernel * l.kernel * resampled[0], l.out_channels);
                u.has_bias = l.has_bias;
                if (l.has_bias) u.bias.assign(l.out_channels, 0.0);
                const auto g = k::ConvGeom::make(resampled, l.kernel, l.out_channels, l.stride);
                u.out_shape = {g.cout, g.ho, g.wo};
                net.units.push_back(std::move(u));
                cur = net.units.back().out_shape;
                resampled = cur;
                pending = Unit{};
                pending_resample = false;
                break;
            }
            case LayerSpec::Kind::BatchNorm: {
                if (net.units.empty() || pending_resample)
                    build_fail(i, "BatchNorm must directly follow Dense or Conv2d");
                Unit& u = net.units.back();
                if (u.has_bn || u.has_act)
                    build_fail(i, "BatchNorm must directly follow Dense or Conv2d");
                u.has_bn = true;
                const std::size_t c = u.is_conv ? u.out_channels : shape_numel(u.out_shape);
                u.bn.gamma.assign(c, 1.0);
                u.bn.beta.assign(c, 0.0);
                u.bn.run_mean.assign(c, 0.0);
                u.bn.run_var.assign(c, 1.0);
                break;
            }
            case LayerSpec::Kind::Activation: {
                if (net.units.empty() || pending_resample)
                    build_fail(i, "Activation must follow Dense, Conv2d or BatchNorm");
                Unit& u = net.units.back();
                if (u.has_act)
                    build_fail(i, "repeated Activation on one layer");
                u.has_act = true;
                u.act = l.act;
                break;
            }
        }
    }
    if (pending_resample)
        build_fail(spec.size() - 1, "trailing resampling op without a parametric layer");

    // Seeded uniform He-style init, declaration order.
    Rng rng(seed);
    for (auto& u : net.units) {
        const double bound = std::sqrt(6.0 / static_cast<double>(u.fan_in()));
        for (double& w : u.weight.raw()) w = rng.uniform(-bound, bound);
    }
    net.build_id = g_build_counter.fetch_add(1);
    return net;
}

const Tensor& ActivationTrace::d(std::size_t m) const {
    if (m == 0 || m > entries.size()) throw ContractError("ActivationTrace: bad layer index");
    return entries[m - 1].value;
}

namespace {

void check_finite(const Tensor& t, std::size_t unit_idx, const char* where) {
    if (!t.all_finite())
        throw NumericError("forward: non-finite value at layer " + std::to_string(unit_idx + 1) +
                           " (" + where + ")");
}

// y = x * W^T + b on flattened samples.
Tensor dense_forward(const Tensor& x, const Unit& u) {
    const std::size_t b = x.batch();
    const std::size_t in = u.weight.cols(), out = u.weight.rows();
    Tensor y(Shape{b, out});
    for (std::size_t s = 0; s < b; ++s) {
        const double* xs = x.sample(s);
        double* ys = y.sample(s);
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = u.weight.data() + o * in;
            double acc = u.has_bias ? u.bias[o] : 0.0;
            for (std::size_t j = 0; j < in; ++j) acc += wr[j] * xs[j];
            ys[o] = acc;
        }
    }
    return y;
}

}  // namespace

ForwardResult forward(const Network& net, const Tensor& input, const ForwardOptions& opts) {
    if (input.sample_shape() != net.input_shape)
        throw ShapeError("forward: input sample shape " + shape_to_string(input.sample_shape()) +
                         " does not match network input " + shape_to_string(net.input_shape));
    if (input.batch() == 0) throw ContractError("forward: empty batch");

    ForwardResult res;
    res.trace.net_build_id = net.build_id;
    res.trace.training = opts.training;
    if (opts.record) {
        res.trace.entries.push_back({1, input});
        res.trace.caches.resize(net.units.size());
    }

    Tensor cur = input;
    // Network holds mutable BN running stats; updating them is the only
    // forward side effect and happens only when explicitly requested.
    Network& mut = const_cast<Network&>(net);

    for (std::size_t ui = 0; ui < net.units.size(); ++ui) {
        const Unit& u = net.units[ui];
        UnitCache* cache = opts.record ? &res.trace.caches[ui] : nullptr;

        if (u.pre == Resample::MaxPool) {
            std::vector<std::uint32_t> argmax;
            cur = k::maxpool_forward(cur, argmax);
            if (cache) cache->argmax = std::move(argmax);
        } else if (u.pre == Resample::Upsample) {
            cur = k::upsample_forward(cur);
        }

        if (cache) cache->lin_in = cur;

        if (u.is_conv) {
            const auto g = k::ConvGeom::make(u.lin_in_shape, u.kernel, u.out_channels, u.stride);
            cur = k::conv2d_forward(cur, u.weight, u.has_bias ? &u.bias : nullptr, g);
        } else {
            // Dense flattens whatever sample shape arrives.
            cur = dense_forward(cur, u);
        }

        if (u.has_bn) {
            if (cache) cache->pre_bn = cur;
            const auto g = k::bn_geom_for(u.out_shape, u.is_conv);
            if (opts.training) {
                std::vector<double> mean, var;
                k::bn_forward_train(cur, g, mut.units[ui].bn, opts.update_running_stats, mean,
                                    var);
                if (cache) {
                    cache->mean = std::move(mean);
                    cache->var = std::move(var);
                }
            } else {
                k::bn_forward_eval(cur, g, u.bn);
            }
        }

        if (u.has_act) {
            if (cache) cache->pre_act = cur;
            k::act_forward(cur, u.act);
        }

        // Normalize the shape bookkeeping (dense flattens, conv reshapes).
        Shape full{cur.batch()};
        full.insert(full.end(), u.out_shape.begin(), u.out_shape.end());
        cur.shape = full;

        check_finite(cur, ui, "unit output");
        if (opts.record) res.trace.entries.push_back({ui + 2, cur});
    }
    res.output = std::move(cur);
    return res;
}

ParamGrads ParamGrads::zeros_like(const Network& net) {
    ParamGrads g;
    g.units.resize(net.units.size());
    for (std::size_t i = 0; i < net.units.size(); ++i) {
        const Unit& u = net.units[i];
        g.units[i].weight = Matrix(u.weight.rows(), u.weight.cols());
        if (u.has_bias) g.units[i].bias.assign(u.bias.size(), 0.0);
        if (u.has_bn) {
            g.units[i].gamma.assign(u.bn.gamma.size(), 0.0);
            g.units[i].beta.assign(u.bn.beta.size(), 0.0);
        }
    }
    return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
    if (units.size() != other.units.size()) throw ShapeError("ParamGrads +=: unit count mismatch");
    for (std::size_t i = 0; i < units.size(); ++i) {
        units[i].weight += other.units[i].weight;
        for (std::size_t j = 0; j < units[i].bias.size(); ++j)
            units[i].bias[j] += other.units[i].bias[j];
        for (std::size_t j = 0; j < units[i].gamma.size(); ++j) {
            units[i].gamma[j] += other.units[i].gamma[j];
            units[i].beta[j] += other.units[i].beta[j];
        }
    }
    return *this;
}

void ParamGrads::scale(double s) {
    for (auto& u : units) {
        u.weight *= s;
        for (double& x : u.bias) x *= s;
        for (double& x : u.gamma) x *= s;
        for (double& x : u.beta) x *= s;
    }
}

double ParamGrads::max_abs() const {
    double m = 0.0;
    for (const auto& u : units) {
        for (double x : u.weight.raw()) m = std::max(m, std::abs(x));
        for (double x : u.bias) m = std::max(m, std::abs(x));
        for (double x : u.gamma) m = std::max(m, std::abs(x));
        for (double x : u.beta) m = std::max(m, std::abs(x));
    }
    return m;
}

std::size_t param_count(const Network& net) {
    std::size_t n = 0;
    for (const auto& u : net.units) {
        n += u.weight.size();
        if (u.has_bias) n += u.bias.size();
        if (u.has_bn) n += u.bn.gamma.size() + u.bn.beta.size();
    }
    return n;
}

Tensor backward_with_adjoints(const Network& net, const ActivationTrace& trace,
                              const Tensor& output_grad, const std::vector<Tensor>* adjoints,
                              ParamGrads& grads) {
    if (trace.net_build_id != net.build_id)
        throw ContractError("backward: trace does not belong to this network");
    if (trace.caches.size() != net.units.size() ||
        trace.entries.size() != net.units.size() + 1)
        throw ContractError("backward: trace was not recorded with record=true");
    if (output_grad.shape != trace.entries.back().value.shape)
        throw ShapeError("backward: output_grad shape mismatch");
    if (adjoints && adjoints->size() != net.units.size() + 1)
        throw ContractError("backward: adjoint list must have one entry per trace entry");

    auto add_adjoint = [&](Tensor& g, std::size_t m /*1-based*/) {
        if (!adjoints) return;
        const Tensor& a = (*adjoints)[m - 1];
        if (a.numel() == 0) return;
        if (a.shape != g.shape) throw ShapeError("backward: adjoint shape mismatch at d_" +
                                                 std::to_string(m));
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += a.data[i];
    };

    Tensor g = output_grad;
    add_adjoint(g, net.units.size() + 1);

    for (std::size_t ui = net.units.size(); ui-- > 0;) {
        const Unit& u = net.units[ui];
        const UnitCache& cache = trace.caches[ui];
        auto& ug = grads.units[ui];

        if (u.has_act) k::act_backward(g, cache.pre_act, u.act);

        if (u.has_bn) {
            const auto geom = k::bn_geom_for(u.out_shape, u.is_conv);
            if (trace.training) {
                k::bn_backward_train(g, cache.pre_bn, geom, u.bn, cache.mean, cache.var,
                                     ug.gamma, ug.beta);
            } else {
                k::bn_backward_eval(g, cache.pre_bn, geom, u.bn, ug.gamma, ug.beta);
            }
        }

        if (u.is_conv) {
            const auto geom = k::ConvGeom::make(u.lin_in_shape, u.kernel, u.out_channels,
                                                u.stride);
            if (u.has_bias) {
                const auto bg = k::bias_grad_channels(g, u.out_channels);
                for (std::size_t c = 0; c < bg.size(); ++c) ug.bias[c] += bg[c];
            }
            k::conv2d_backward_kernel(cache.lin_in, g, geom, ug.weight);
            g = k::conv2d_backward_input(g, u.weight, geom, g.batch());
        } else {
            const std::size_t b = g.batch();
            const std::size_t out = u.weight.rows(), in = u.weight.cols();
            if (u.has_bias) {
                const auto bg = k::bias_grad_channels(g, out);
                for (std::size_t c = 0; c < out; ++c) ug.bias[c] += bg[c];
            }
            // dW += g^T * x ; gx = g * W
            const Tensor& x = cache.lin_in;
            for (std::size_t s = 0; s < b; ++s) {
                const double* gs = g.sample(s);
                const double* xs = x.sample(s);
                for (std::size_t o = 0; o < out; ++o) {
                    double* wr = ug.weight.data() + o * in;
                    const double gv = gs[o];
                    if (gv == 0.0) continue;
                    for (std::size_t j = 0; j < in; ++j) wr[j] += gv * xs[j];
                }
            }
            Tensor gx(x.shape);
            for (std::size_t s = 0; s < b; ++s) {
                const double* gs = g.sample(s);
                double* gxs = gx.sample(s);
                for (std::size_t o = 0; o < out; ++o) {
                    const double* wr = u.weight.data() + o * in;
                    const double gv = gs[o];
                    if (gv == 0.0) continue;
                    for (std::size_t j = 0; j < in; ++j) gxs[j] += gv * wr[j];
                }
            }
            g = std::move(gx);
        }

        if (u.pre == Resample::MaxPool) {
            Shape full{g.batch()};
            full.insert(full.end(), u.lin_in_shape.begin(), u.lin_in_shape.end());
            g.shape = full;
            g = k::maxpool_backward(g, cache.argmax, u.d_in_shape);
        } else if (u.pre == Resample::Upsample) {
            Shape full{g.batch()};
            full.insert(full.end(), u.lin_in_shape.begin(), u.lin_in_shape.end());
            g.shape = full;
            g = k::upsample_backward(g);
        }

        // Restore the d_m shape bookkeeping before adjoint injection.
        Shape full{g.batch()};
        const Shape& dm = (ui == 0) ? net.input_shape : net.units[ui - 1].out_shape;
        full.insert(full.end(), dm.begin(), dm.end());
        g.shape = full;
        add_adjoint(g, ui + 1);
    }
    return g;
}

ParamGrads backward(const Network& net, const ActivationTrace& trace, const Tensor& output_grad) {
    ParamGrads grads = ParamGrads::zeros_like(net);
    backward_with_adjoints(net, trace, output_grad, nullptr, grads);
    return grads;
}

}  // namespace racecar
