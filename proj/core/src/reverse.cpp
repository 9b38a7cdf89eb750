// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/reverse.hpp"

#include "kernels.hpp"
#include "racecar/errors.hpp"

namespace racecar {

namespace k = kernels;

ReversePlan build_reverse(const Network& net, ReversePlan::Variant variant,
                          bool output_activation, Act output_act) {
    if (net.units.empty()) throw BuildError("build_reverse: network has no layers");
    if (variant == ReversePlan::Variant::Full) {
        for (std::size_t ui = 0; ui < net.units.size(); ++ui) {
            if (net.units[ui].pre == Resample::MaxPool) {
                throw BuildError("build_reverse: MaxPool before layer " + std::to_string(ui + 1) +
                                 " is not bijective; use the layerwise variant");
            }
        }
    }
    ReversePlan plan;
    plan.variant = variant;
    plan.net = &net;
    plan.net_build_id = net.build_id;
    plan.output_activation = output_activation;
    plan.output_act = output_act;
    return plan;
}

std::string describe(const ReversePlan& plan) {
    const Network& net = *plan.net;
    std::string out;
    auto append = [&](const std::string& tok) {
        if (!out.empty()) out += " -> ";
        out += tok;
    };
    for (std::size_t ui = net.units.size(); ui-- > 0;) {
        const Unit& u = net.units[ui];
        const std::string m = std::to_string(ui + 1);
        if (u.has_bias) append("-b" + m);
        if (u.is_conv) {
            append("D" + m + "(" + std::to_string(u.kernel) + "," +
                   std::to_string(u.in_channels) + "," + std::to_string(u.stride) + ")");
        } else {
            append("Ft" + m);
        }
        if (ui > 0) {
            const Unit& prev = net.units[ui - 1];
            if (prev.has_bn) append("BN" + std::to_string(ui));
            if (prev.has_act) append(act_name(prev.act));
        }
        if (u.pre == Resample::MaxPool) append("UP");
        if (u.pre == Resample::Upsample) append("AP");
        if (ui == 0 && plan.output_activation) append(std::string("out_") + act_name(plan.output_act));
    }
    return out;
}

namespace {

void check_finite(const Tensor& t, std::size_t ui) {
    if (!t.all_finite())
        throw NumericError("reverse pass: non-finite value at stage " + std::to_string(ui + 1));
}

Tensor with_sample_shape(Tensor t, const Shape& sample) {
    Shape full{t.batch()};
    full.insert(full.end(), sample.begin(), sample.end());
    if (shape_numel(full) != t.numel())
        throw ShapeError("reverse pass: cannot view tensor as " + shape_to_string(full));
    t.shape = std::move(full);
    return t;
}

}  // namespace

Tensor reverse_stage_forward(const Network& net, std::size_t ui, const Tensor& input,
                             bool output_activation, Act output_act, ReverseStageCache* cache) {
    const Unit& u = net.units[ui];
    if (input.sample_shape() != u.out_shape)
        throw ShapeError("reverse stage " + std::to_string(ui + 1) + ": input shape " +
                         shape_to_string(input.sample_shape()) + " does not match d_" +
                         std::to_string(ui + 2) + " " + shape_to_string(u.out_shape));
    Tensor t = input;
    if (u.has_bias) k::sub_bias_channels(t, u.bias, u.is_conv ? u.out_channels : u.bias.size());
    if (cache) cache->sub_out = t;

    if (u.is_conv) {
        const auto geom = k::ConvGeom::make(u.lin_in_shape, u.kernel, u.out_channels, u.stride);
        t = k::conv2d_backward_input(t, u.weight, geom, t.batch());
    } else {
        // x * W: [B,out] x [out,in]
        const std::size_t b = t.batch();
        const std::size_t out = u.weight.rows(), in = u.weight.cols();
        Tensor y(Shape{b, in});
        for (std::size_t s = 0; s < b; ++s) {
            const double* ts = t.sample(s);
            double* ys = y.sample(s);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = u.weight.data() + o * in;
                const double tv = ts[o];
                if (tv == 0.0) continue;
                for (std::size_t j = 0; j < in; ++j) ys[j] += tv * wr[j];
            }
        }
        t = std::move(y);
    }
    t = with_sample_shape(std::move(t), u.lin_in_shape);

    if (ui > 0) {
        const Unit& prev = net.units[ui - 1];
        if (prev.has_bn) {
            if (cache) cache->lin_out = t;
            const auto geom = k::bn_geom_for(u.lin_in_shape, prev.is_conv);
            k::bn_forward_eval(t, geom, prev.bn);
        }
        if (prev.has_act) {
            if (cache) cache->act_in = t;
            k::act_forward(t, prev.act);
        }
    }

    if (u.pre == Resample::MaxPool) {
        t = k::upsample_forward(t);
    } else if (u.pre == Resample::Upsample) {
        t = k::avgpool_forward(t);
    }

    if (ui == 0 && output_activation) {
        if (cache) cache->out_act_in = t;
        k::act_forward(t, output_act);
    }
    t = with_sample_shape(std::move(t), u.d_in_shape);
    check_finite(t, ui);
    return t;
}

Tensor reverse_stage_backward(const Network& net, std::size_t ui, const ReverseStageCache& cache,
                              Tensor grad, bool output_activation, Act output_act,
                              ParamGrads& grads) {
    const Unit& u = net.units[ui];

    if (ui == 0 && output_activation) k::act_backward(grad, cache.out_act_in, output_act);

    if (u.pre == Resample::MaxPool) {
        grad = with_sample_shape(std::move(grad), u.d_in_shape);
        grad = k::upsample_backward(grad);
    } else if (u.pre == Resample::Upsample) {
        grad = with_sample_shape(std::move(grad), u.d_in_shape);
        grad = k::avgpool_backward(grad);
    }
    grad = with_sample_shape(std::move(grad), u.lin_in_shape);

    if (ui > 0) {
        const Unit& prev = net.units[ui - 1];
        if (prev.has_act) k::act_backward(grad, cache.act_in, prev.act);
        if (prev.has_bn) {
            const auto geom = k::bn_geom_for(u.lin_in_shape, prev.is_conv);
            k::bn_backward_eval(grad, cache.lin_out, geom, prev.bn, grads.units[ui - 1].gamma,
                                grads.units[ui - 1].beta);
        }
    }

    Tensor gin;
    if (u.is_conv) {
        const auto geom = k::ConvGeom::make(u.lin_in_shape, u.kernel, u.out_channels, u.stride);
        // Transposed conv is conv2d_backward_input, so its adjoint w.r.t. the
        // stage input is the forward conv, and the kernel gradient pairs the
        // upstream grad (input role) with sub_out (output role).
        k::conv2d_backward_kernel(grad, cache.sub_out, geom, grads.units[ui].weight);
        gin = k::conv2d_forward(grad, u.weight, nullptr, geom);
    } else {
        const std::size_t b = grad.batch();
        const std::size_t out = u.weight.rows(), in = u.weight.cols();
        const Tensor& x = cache.sub_out;  // [B,out]
        // y = x*W  =>  dW += x^T g ; gin = g W^T
        for (std::size_t s = 0; s < b; ++s) {
            const double* gs = grad.sample(s);
            const double* xs = x.sample(s);
            for (std::size_t o = 0; o < out; ++o) {
                const double xv = xs[o];
                if (xv == 0.0) continue;
                double* wr = grads.units[ui].weight.data() + o * in;
                for (std::size_t j = 0; j < in; ++j) wr[j] += xv * gs[j];
            }
        }
        Tensor y(Shape{b, out});
        for (std::size_t s = 0; s < b; ++s) {
            const double* gs = grad.sample(s);
            double* ys = y.sample(s);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = u.weight.data() + o * in;
                double acc = 0.0;
                for (std::size_t j = 0; j < in; ++j) acc += wr[j] * gs[j];
                ys[o] = acc;
            }
        }
        gin = std::move(y);
    }
    gin = with_sample_shape(std::move(gin), u.out_shape);

    if (u.has_bias) {
        const std::size_t channels = u.is_conv ? u.out_channels : u.bias.size();
        const auto bg = k::bias_grad_channels(gin, channels);
        for (std::size_t c = 0; c < channels; ++c) grads.units[ui].bias[c] -= bg[c];
    }
    return gin;
}

ReverseResult reverse_full_recorded(const ReversePlan& plan, const Tensor& output,
                                    bool record_cache) {
    const Network& net = *plan.net;
    if (plan.net_build_id != net.build_id)
        throw ContractError("reverse_full: plan does not match the network");
    if (plan.variant != ReversePlan::Variant::Full)
        throw ContractError("reverse_full: plan was built for the layerwise variant");
    if (output.sample_shape() != net.output_shape())
        throw ShapeError("reverse_full: output shape mismatch");

    const std::size_t n = net.units.size();
    ReverseResult res;
    if (record_cache) res.caches.resize(n);
    std::vector<Tensor> primed(n + 1);
    primed[n] = output;
    for (std::size_t ui = n; ui-- > 0;) {
        primed[ui] = reverse_stage_forward(net, ui, primed[ui + 1], plan.output_activation,
                                           plan.output_act,
                                           record_cache ? &res.caches[ui] : nullptr);
    }
    res.trace.net_build_id = net.build_id;
    for (std::size_t m = 0; m <= n; ++m) {
        res.trace.entries.push_back({m + 1, std::move(primed[m])});
    }
    return res;
}

ActivationTrace reverse_full(const ReversePlan& plan, const Tensor& output) {
    return reverse_full_recorded(plan, output, false).trace;
}

ReverseResult reverse_layerwise_recorded(const ReversePlan& plan, const ActivationTrace& trace,
                                         bool record_cache) {
    const Network& net = *plan.net;
    if (plan.net_build_id != net.build_id || trace.net_build_id != net.build_id)
        throw ContractError("reverse_layerwise: plan/trace do not match the network");
    const std::size_t n = net.units.size();
    if (trace.entries.size() != n + 1)
        throw ContractError("reverse_layerwise: trace does not cover every layer");

    ReverseResult res;
    if (record_cache) res.caches.resize(n);
    res.trace.net_build_id = net.build_id;
    for (std::size_t ui = 0; ui < n; ++ui) {
        Tensor r = reverse_stage_forward(net, ui, trace.d(ui + 2), plan.output_activation,
                                         plan.output_act,
                                         record_cache ? &res.caches[ui] : nullptr);
        res.trace.entries.push_back({ui + 1, std::move(r)});
    }
    res.trace.entries.push_back({n + 1, trace.d(n + 1)});
    return res;
}

std::vector<Tensor> reverse_layerwise(const Network& net, const ActivationTrace& trace) {
    ReversePlan plan = build_reverse(net, ReversePlan::Variant::Layerwise);
    ReverseResult res = reverse_layerwise_recorded(plan, trace, false);
    std::vector<Tensor> out;
    out.reserve(net.units.size());
    for (std::size_t m = 0; m < net.units.size(); ++m)
        out.push_back(std::move(res.trace.entries[m].value));
    return out;
}

}  // namespace racecar
