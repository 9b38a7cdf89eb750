// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "racecar/analysis.hpp"
#include "racecar/datasets.hpp"
#include "racecar/train.hpp"

namespace racecar {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Flat key = value experiment description (one experiment per file,
/// '#' comments). Unknown keys are rejected with their line number.
struct ExperimentConfig {
    std::string experiment;           // peak | mnist2 | mi | gradcheck
    std::vector<std::string> models;  // std | ort | srip | rr | rr1 | lrr
    std::vector<int> seeds;
    std::string out_dir = "runs/out";

    // Optional overrides; zero/empty means "experiment default".
    std::size_t epochs = 0;
    std::size_t finetune_epochs = 0;
    double lr = 0.0;
    double lambda = 0.0;
    std::size_t batch_size = 0;
    std::string optimizer;  // "adam" | "sgd"
    double ortho_weight = 0.0;
    double srip_beta = 0.0;
    std::size_t bins = 0;
    std::string mnist_images, mnist_labels;
    std::size_t threads = 0;  // 0 = hardware concurrency
};

/// Parses a config file. Throws ParseError carrying the offending line
/// number for unknown keys, bad values or a missing experiment.
ExperimentConfig parse_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config_text(const std::string& text);

/// Fully resolved per-run settings after defaults and overrides.
struct ResolvedSettings {
    std::size_t epochs = 0, finetune_epochs = 0, batch_size = 0, bins = 30;
    double lr = 0.0, lambda = 0.0, ortho_weight = 0.0, srip_beta = 0.0;
    OptimizerKind optimizer = OptimizerKind::Adam;
};
ResolvedSettings resolve_settings(const ExperimentConfig& cfg);

/// Training config for one model name on top of the resolved settings.
TrainConfig model_train_config(const std::string& model, const ResolvedSettings& s,
                               std::uint64_t seed);

/// The net used by the SVD experiments: one fully connected layer mapping
/// the image to the two class logits.
std::vector<LayerSpec> svd_test_net();
/// Six fully connected tanh layers 12 -> 10 -> 7 -> 5 -> 4 -> 3 -> 2.
std::vector<LayerSpec> bitsphere_net();

/// Two synthetic digit-like 28x28 images (labels 0 and 7); the offline
/// stand-in for user-supplied MNIST files.
Dataset mnist_fixture();

struct PeakRun {
    Network net;
    MetricsLog log;
    FeatureReport features;     // layer 1, scored against the clean templates
    double similarity_top2 = 0.0;  // mean best score of the top-2 vectors
};
PeakRun run_peak_model(const std::string& model, int seed, const ResolvedSettings& s);

struct Mnist2Run {
    Network net;
    MetricsLog log;
    FeatureReport features;
    double similarity_top2 = 0.0;
    std::vector<std::vector<double>> exemplars;  // the two training images
};
Mnist2Run run_mnist2_model(const std::string& model, int seed, const ResolvedSettings& s,
                           const Dataset& two_digit_train);

struct MiRun {
    Network phase1;
    MetricsLog log_phase1, log_aa, log_ab;
    std::vector<MIPlanePoint> plane;  // of the phase-1 model, on the train split
    double phase1_test_acc = 0.0, aa_test_acc = 0.0, ab_test_acc = 0.0;
    double min_ix = 0.0, min_iy = 0.0;
};
MiRun run_mi_model(const std::string& model, int seed, const ResolvedSettings& s);

/// Runs every (model, seed) combination of the config, writing metrics CSVs,
/// feature PGMs / MI-plane CSVs, summary.csv and manifest.txt into out_dir.
/// Returns a process exit status (0 ok, 1 runtime failure).
int run_experiment(const ExperimentConfig& cfg);

/// Plain-text comparison of two summary.csv files (mean differences and
/// per-seed win counts). Throws ContractError when the column sets differ.
void compare_summaries(const std::string& summary_a_path, const std::string& summary_b_path,
                       std::ostream& out);

}  // namespace racecar
