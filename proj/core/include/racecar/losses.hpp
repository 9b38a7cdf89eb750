// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstddef>
#include <vector>

#include "racecar/matrix.hpp"
#include "racecar/network.hpp"
#include "racecar/reverse.hpp"

namespace racecar {

/// Configuration of the reverse-pass reconstruction loss
/// sum_m lambda_m * ||d_m - d'_m||_F^2 (mean over the batch).
struct RacecarConfig {
    /// One weight per constrained layer, aligned with constrained_layers.
    std::vector<double> lambdas;
    ReversePlan::Variant variant = ReversePlan::Variant::Full;
    /// 1-based layer indices m with a loss term; empty means all of 1..n.
    std::vector<std::size_t> constrained_layers;
    /// When false the reverse pass is treated as a constant (stop-gradient
    /// ablation); by default gradients flow through both weight uses.
    bool tied_gradients = true;
    bool output_activation = false;
    Act output_act = Act::Relu;
    /// Weight of the base task loss in the combined objective.
    double base_blend = 1.0;

    /// Uniform weights on all layers.
    static RacecarConfig all_layers(double lambda,
                                    ReversePlan::Variant v = ReversePlan::Variant::Full);
    /// Only the input reconstruction d'_1 is constrained.
    static RacecarConfig input_only(double lambda);

    /// Resolved per-layer weights (index m-1), zero where unconstrained.
    std::vector<double> resolve_lambdas(std::size_t num_units) const;
    /// Throws ContractError on malformed weights/indices.
    void validate(std::size_t num_units) const;
};

/// sum_m lambda_m ||d_m - d'_m||_F^2 / batch over the constrained layers.
/// `recon` holds d'_1..d'_n (layerwise output or leading reverse-trace
/// entries); shapes must pair with the forward trace.
double racecar_loss(const ActivationTrace& trace, const std::vector<Tensor>& recon,
                    const RacecarConfig& cfg);
double racecar_loss(const ActivationTrace& trace, const ActivationTrace& reverse_trace,
                    const RacecarConfig& cfg);

/// sum_m ||M^T M - I||_F^2. Conv kernels enter in their (k*k*cin) x cout form.
double ortho_loss_soft(const std::vector<Matrix>& weights);
/// d/dM ||M^T M - I||_F^2 = 4 M (M^T M - I).
Matrix ortho_loss_soft_grad(const Matrix& weight);

/// beta * sum_m sigma_max(M^T M - I), spectral norms via power iteration
/// (100 iterations).
double srip_loss(const std::vector<Matrix>& weights, double beta);
/// Gradient of sigma_max(M^T M - I) w.r.t. M (eigenvector held fixed).
Matrix srip_grad(const Matrix& weight);

/// Mean over the batch of -log softmax(logits)[label]. Stable log-sum-exp.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// Loss plus gradient w.r.t. the logits (softmax - onehot, mean-scaled).
double cross_entropy_with_grad(const Tensor& logits, const std::vector<int>& labels,
                               Tensor& grad);
/// argmax(logits) == label fraction.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

/// Combined objective value. Gradients of the reconstruction term flow
/// through the shared weights in both the forward and the reverse use; that
/// tied differentiation lives in the training step, not here.
inline double total_loss(double base, double racecar) { return base + racecar; }

}  // namespace racecar
