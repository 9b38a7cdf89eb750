// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace racecar {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_to_string(const Shape& s);

/// Row-major dense value tensor. The first axis is the batch axis wherever a
/// batch is implied; per-sample shapes are handled as trailing axes.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d);

    std::size_t numel() const { return data.size(); }
    std::size_t batch() const { return shape.empty() ? 0 : shape[0]; }
    /// Elements per sample (product of axes past the first).
    std::size_t sample_numel() const { return shape.empty() ? 0 : numel() / shape[0]; }
    /// Shape with the batch axis dropped.
    Shape sample_shape() const;

    double* sample(std::size_t b) { return data.data() + b * sample_numel(); }
    const double* sample(std::size_t b) const { return data.data() + b * sample_numel(); }

    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape == b.shape && a.data == b.data;
    }
};

/// Sum of squares of (a - b). Shapes must agree.
double squared_distance(const Tensor& a, const Tensor& b);

}  // namespace racecar
