// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "racecar/datasets.hpp"
#include "racecar/losses.hpp"
#include "racecar/network.hpp"

namespace racecar {

enum class OptimizerKind { Sgd, Adam };
enum class BaseLoss { None, CrossEntropy };
enum class OrthoMode { Off, Soft, Srip };

struct TrainConfig {
    std::size_t epochs = 0;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;  // beta1 0.9, beta2 0.999, eps 1e-8
    std::uint64_t seed = 0;
    BaseLoss base_loss = BaseLoss::CrossEntropy;
    std::optional<RacecarConfig> racecar;  // disabled when unset
    OrthoMode ortho = OrthoMode::Off;
    double ortho_weight = 1e-4;  // soft-orthogonality weight or SRIP beta
    std::size_t log_every = 1;

    /// Throws ContractError when racecar and an orthogonality regularizer
    /// are both enabled, or the racecar config is malformed.
    void validate(std::size_t num_units) const;
    bool has_regularizer() const { return racecar.has_value() || ortho != OrthoMode::Off; }
};

struct MetricsRow {
    std::size_t epoch = 0;
    double base_loss = 0.0, reg_loss = 0.0, train_acc = 0.0, test_acc = 0.0, wall_seconds = 0.0;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;

    std::string to_csv() const;
    /// Equality over everything except wall_seconds (wall time is the one
    /// column a rerun cannot reproduce).
    bool same_results(const MetricsLog& other) const;
};

struct TrainResult {
    Network net;
    MetricsLog log;
};

struct LossBreakdown {
    double base = 0.0;
    double reg = 0.0;
    double total() const { return base + reg; }
};

/// Combined objective on one batch: blended base loss plus the configured
/// regularizer (reverse-pass reconstruction, soft orthogonality or SRIP).
/// When `grads` is non-null, accumulates the analytic gradient; racecar
/// gradients flow through the shared weights in both passes unless the
/// config asks for the stop-gradient ablation. Running BN statistics are
/// updated only when `update_running_stats` is set, so loss evaluation is
/// repeatable.
LossBreakdown eval_batch(Network& net, const Tensor& inputs, const std::vector<int>& labels,
                         const TrainConfig& cfg, ParamGrads* grads, bool update_running_stats);

/// Row logged at `epoch` reflects the parameter state entering that epoch;
/// the final row is logged at epoch == cfg.epochs. Deterministic for a fixed
/// seed (up to wall_seconds). Throws TrainingError with the epoch index when
/// the loss goes non-finite.
TrainResult train(const Network& net, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& cfg);

/// train() for the regularizer-free phase; rejects configs with an active
/// racecar or orthogonality term.
TrainResult finetune(const Network& net, const Dataset& train_data, const Dataset* test_data,
                     const TrainConfig& cfg);

/// A loss with its analytic gradient, as checked by finite_diff_check.
struct LossProbe {
    std::function<double(Network&)> value;
    std::function<ParamGrads(Network&)> gradient;
};

/// Central-difference verification over every parameter (or, when
/// sample_limit > 0 and the net is larger, a seeded subsample of at least
/// that many). Returns the max relative error with denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(Network& net, const LossProbe& probe, double eps,
                         std::size_t sample_limit = 0, std::uint64_t seed = 0);

/// The training objective on a fixed batch as a LossProbe.
LossProbe make_training_loss_probe(const TrainConfig& cfg, const Tensor& inputs,
                                   const std::vector<int>& labels);

/// Per-parameter optimizer state shared by train(); exposed for step-level
/// tests.
struct Optimizer {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    std::size_t t = 0;

    void init(const Network& net);
    void step(Network& net, ParamGrads& grads);
};

}  // namespace racecar
