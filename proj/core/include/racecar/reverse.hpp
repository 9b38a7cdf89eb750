// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <string>
#include <vector>

#include "racecar/network.hpp"

namespace racecar {

/// Mirror of a network that reuses every forward weight in transposed form.
/// Owns no parameters: evaluation always reads through the aliased network,
/// so stepping the forward weights moves the reverse pass with no rebuild.
///
/// Stage m undoes unit m: subtract b_m, multiply by the transposed weight,
/// then apply the batch norm and activation of unit m-1 (running statistics),
/// then undo the resampling of unit m. An optional extra activation can be
/// placed on the final reverse output for value-range-constrained inputs.
struct ReversePlan {
    enum class Variant { Full, Layerwise };

    Variant variant = Variant::Full;
    const Network* net = nullptr;
    std::uint64_t net_build_id = 0;
    bool output_activation = false;
    Act output_act = Act::Relu;
};

/// Validates the network/variant pairing. Full requires every inter-layer
/// connection to be bijective; MaxPool breaks that, so nets containing it
/// must use the layerwise variant.
ReversePlan build_reverse(const Network& net, ReversePlan::Variant variant,
                          bool output_activation = false, Act output_act = Act::Relu);

/// Op listing of the reverse chain, last stage to first, for inspection.
/// Example: "-b2 -> D2(4,20,1) -> BN1 -> relu -> UP -> -b1 -> D1(5,1,1)".
std::string describe(const ReversePlan& plan);

/// Intermediates of one reverse stage, kept when gradients are needed.
struct ReverseStageCache {
    Tensor sub_out;     // stage input minus b_m
    Tensor lin_out;     // after the transposed linear op
    Tensor act_in;      // input of the previous unit's activation
    Tensor out_act_in;  // input of the optional output activation (stage 1)
};

struct ReverseResult {
    /// d'_1..d'_{n+1} with the same indexing convention as the forward trace
    /// (d'_{n+1} is the chain input).
    ActivationTrace trace;
    std::vector<ReverseStageCache> caches;  // per unit, when recorded
};

/// Full reverse pass d'_{n+1} = output, chained back to d'_1.
ActivationTrace reverse_full(const ReversePlan& plan, const Tensor& output);
ReverseResult reverse_full_recorded(const ReversePlan& plan, const Tensor& output,
                                    bool record_cache);

/// Layer-wise reconstructions: d'_m computed from the forward d_{m+1}.
/// Returns d'_1..d'_n (index m-1).
std::vector<Tensor> reverse_layerwise(const Network& net, const ActivationTrace& trace);
ReverseResult reverse_layerwise_recorded(const ReversePlan& plan, const ActivationTrace& trace,
                                         bool record_cache);

/// One reverse stage (unit index ui, i.e. stage m = ui + 1).
Tensor reverse_stage_forward(const Network& net, std::size_t ui, const Tensor& input,
                             bool output_activation, Act output_act, ReverseStageCache* cache);

/// Adjoint of reverse_stage_forward: maps the upstream gradient at d'_m back
/// to the stage input and accumulates gradients of the tied parameters.
Tensor reverse_stage_backward(const Network& net, std::size_t ui, const ReverseStageCache& cache,
                              Tensor grad, bool output_activation, Act output_act,
                              ParamGrads& grads);

}  // namespace racecar
