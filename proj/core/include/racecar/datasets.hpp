// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "racecar/tensor.hpp"

namespace racecar {

struct Dataset {
    Tensor inputs;            // {N, ...sample}
    std::vector<int> labels;  // class indices; may be empty for unlabeled data
    std::size_t num_classes = 0;
    std::string split;        // "train" or "test"
    std::string provenance;   // generator name + seed

    std::size_t size() const { return inputs.batch(); }
};

struct DatasetPair {
    Dataset train, test;
};

/// Knobs of the synthetic two-peak image set. Defaults match the reference
/// experiments; exposed so the noise level can be varied.
struct PeakParams {
    std::size_t image_size = 28;
    double peak_sigma = 2.5;
    int scribble_count = 3;
    int scribble_steps = 20;
    double scribble_intensity = 0.5;
};

/// 110 grayscale images, 28x28: 55 with a Gaussian peak centered in the
/// upper-left quadrant (class 0) and 55 in the lower-right quadrant
/// (class 1), each overlaid with seeded random-walk scribbles. Stratified
/// split into 100 train / 10 test.
DatasetPair gen_peak_dataset(std::uint64_t seed, const PeakParams& params = {});

/// The two clean peak images (no scribbles), class 0 then class 1.
std::vector<std::vector<double>> peak_templates(const PeakParams& params = {});

/// 12-bit binary classification task on the vertices of an icosahedron.
/// Labels follow p(y=1|x) = 1/(1+exp(-gamma*(f(x)-theta))) with f a
/// rotation-invariant pairwise-distance sum over the active vertices.
/// gamma/theta <= 0 request automatic calibration.
struct BitSphereTaskConfig {
    double gamma = 0.0;
    double theta = 0.0;
};

/// Calibrated rule together with its exactly enumerated statistics.
struct BitSphereTask {
    double gamma = 0.0;
    double theta = 0.0;
    std::vector<double> f_values;    // per pattern, 4096 entries
    double p_y1 = 0.0;               // exact P(y=1), must be in [0.45, 0.55]
    double mutual_information = 0.0; // exact I(X;Y) in bits, in [0.95, 1.0]
};

/// Enumerates all 4096 patterns and picks (gamma, theta) so that
/// p(y=1) is in [0.45,0.55] and I(X;Y) is in [0.95,1.0] bits. Throws
/// ContractError when the requested config cannot reach those bounds.
BitSphereTask calibrate_bitsphere(const BitSphereTaskConfig& cfg = {});

/// All 4096 patterns with sampled labels, split 3277 train / 819 test by a
/// seeded shuffle.
DatasetPair gen_bitsphere_task(const BitSphereTaskConfig& cfg, std::uint64_t seed);

/// The unit-sphere icosahedron vertex coordinates backing f(x).
std::vector<std::array<double, 3>> bitsphere_vertices();

/// Vertex permutations generating (a subgroup of) the rotation symmetries;
/// f is invariant under them.
std::vector<std::vector<std::size_t>> bitsphere_symmetry_generators();

/// Same inputs, one-hot label entries swapped (binary task only).
Dataset swap_labels(const Dataset& d);

/// IDX container parsing: big-endian magic 0x00000803 for images and
/// 0x00000801 for labels, pixels scaled to [0,1]. Parse failures carry the
/// byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset (pixel values clamped to [0,1], scaled by 255) as an IDX
/// image/label file pair. Sample shape must be {H,W}.
void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& d);

/// Two seeded random images with distinct labels, drawn from `mnist`.
Dataset select_two_digits(const Dataset& mnist, std::uint64_t seed);

/// Versioned, checksummed binary cache; round-trips bit-exactly.
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

}  // namespace racecar
