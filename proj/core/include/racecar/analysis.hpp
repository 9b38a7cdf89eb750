// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "racecar/datasets.hpp"
#include "racecar/linalg.hpp"
#include "racecar/network.hpp"

namespace racecar {

/// Right-singular-vector report of one weight matrix. The columns of V
/// carry the input-space structures the layer responds to.
struct FeatureReport {
    std::size_t layer_index = 0;  // m, 1-based
    std::vector<std::vector<double>> right_singular_vectors;  // min(s_in,s_out) vectors
    std::vector<double> sigma;
    std::vector<double> similarity;  // per-vector best-match score, once scored
};

/// SVD of unit m's weight matrix (conv kernels in (k*k*cin) x cout form).
FeatureReport extract_features(const Network& net, std::size_t layer_m);

/// Max over exemplars and sign of the cosine similarity between mean-centered,
/// L2-normalized flattened images. 1 = perfect match, 0 for a zero vector.
double similarity_score(const std::vector<double>& v,
                        const std::vector<std::vector<double>>& exemplars);

/// Fills report.similarity against the exemplar set.
void score_features(FeatureReport& report, const std::vector<std::vector<double>>& exemplars);

struct MiOptions {
    /// Bin over a fixed interval instead of the empirical min/max (used for
    /// tanh layers so models stay comparable).
    std::optional<std::pair<double, double>> fixed_range;
    /// Joint histograms use at most this many activation dimensions; wider
    /// layers are reduced to a seeded random subset.
    std::size_t max_joint_dims = 12;
    std::uint64_t subset_seed = 0x51b5eedull;
};

/// Plug-in mutual information estimate in bits between a discrete variable
/// and per-dimension equal-width-binned activations (rows of t_samples).
/// Constant dimensions collapse to a single bin.
double mi_estimate(const std::vector<int>& x_samples, const Matrix& t_samples, std::size_t bins,
                   const MiOptions& opts = {});

struct MIPlanePoint {
    std::size_t layer_index = 0;  // m of d_m
    double i_x = 0.0;             // I(X; d_m) in bits
    double i_y = 0.0;             // I(d_m; Y) in bits
};

/// One point per recorded activation d_1..d_{n+1}. X is the sample's index
/// in the set of distinct input patterns; Y is the class label. Layers whose
/// unit ends in tanh are binned over [-1,1].
std::vector<MIPlanePoint> mi_plane(const Network& net, const Dataset& data, std::size_t bins,
                                   const MiOptions& opts = {});

/// Distinct-pattern index per sample (first-occurrence order).
std::vector<int> pattern_ids(const Tensor& inputs);

/// Batch tensor flattened to an N x D matrix.
Matrix to_matrix(const Tensor& batch);

}  // namespace racecar
