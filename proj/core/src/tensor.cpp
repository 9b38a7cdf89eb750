// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/tensor.hpp"

#include <cmath>
#include <utility>

#include "racecar/errors.hpp"

namespace racecar {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
}

std::string shape_to_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) {
        throw ShapeError("Tensor: data length does not match shape " + shape_to_string(shape));
    }
}

Shape Tensor::sample_shape() const {
    return shape.empty() ? Shape{} : Shape(shape.begin() + 1, shape.end());
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

double squared_distance(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw ShapeError("squared_distance: shape mismatch " + shape_to_string(a.shape) +
                         " vs " + shape_to_string(b.shape));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s;
}

}  // namespace racecar
