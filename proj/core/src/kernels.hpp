// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.
//
// Internal elementwise / conv / pooling / batch-norm kernels. Not installed.

#pragma once

#include <cstdint>
#include <vector>

#include "racecar/network.hpp"
#include "racecar/tensor.hpp"

namespace racecar::kernels {

double apply_act(Act a, double x);
double act_grad(Act a, double pre);  // derivative at the pre-activation value

void act_forward(Tensor& t, Act a);
void act_backward(Tensor& g, const Tensor& pre, Act a);

struct ConvGeom {
    std::size_t cin, h, w;     // input plane
    std::size_t cout, k, stride;
    std::size_t pad_lo, pad_hi;  // same-style padding, total k-1
    std::size_t ho, wo;          // output plane

    static ConvGeom make(const Shape& in, std::size_t k, std::size_t cout, std::size_t stride);
};

// y[b,co,i,j] = sum_{ci,u,v} x[b,ci,i*s+u-pad_lo, j*s+v-pad_lo] * K[(u*k+v)*cin+ci, co]
Tensor conv2d_forward(const Tensor& x, const Matrix& kernel, const std::vector<double>* bias,
                      const ConvGeom& g);
// Adjoint of conv2d_forward w.r.t. x; also the transposed-convolution forward.
Tensor conv2d_backward_input(const Tensor& gy, const Matrix& kernel, const ConvGeom& g,
                             std::size_t batch);
// Kernel gradient: pairs x (forward-input role) with gy (forward-output role).
void conv2d_backward_kernel(const Tensor& x, const Tensor& gy, const ConvGeom& g, Matrix& dk);

// channels/spatial decomposition for batch norm: dense features have
// spatial = 1, conv channels normalize over batch * H * W.
struct BnGeom {
    std::size_t channels, spatial;
};
BnGeom bn_geom_for(const Shape& sample_shape, bool is_conv_features);

void bn_forward_train(Tensor& t, const BnGeom& g, BatchNormState& bn, bool update_running,
                      std::vector<double>& mean_out, std::vector<double>& var_out);
void bn_forward_eval(Tensor& t, const BnGeom& g, const BatchNormState& bn);
void bn_backward_train(Tensor& grad, const Tensor& pre_bn, const BnGeom& g,
                       const BatchNormState& bn, const std::vector<double>& mean,
                       const std::vector<double>& var, std::vector<double>& dgamma,
                       std::vector<double>& dbeta);
void bn_backward_eval(Tensor& grad, const Tensor& pre_bn, const BnGeom& g,
                      const BatchNormState& bn, std::vector<double>& dgamma,
                      std::vector<double>& dbeta);

// 2x2 stride-2 pooling and 2x nearest upsampling on {B,C,H,W} tensors.
Tensor maxpool_forward(const Tensor& x, std::vector<std::uint32_t>& argmax);
Tensor maxpool_backward(const Tensor& gy, const std::vector<std::uint32_t>& argmax,
                        const Shape& in_sample_shape);
Tensor upsample_forward(const Tensor& x);
Tensor upsample_backward(const Tensor& gy);
// Exact left inverse of nearest upsampling; used to reverse a forward Upsample.
Tensor avgpool_forward(const Tensor& x);
Tensor avgpool_backward(const Tensor& gy);

void add_bias_channels(Tensor& t, const std::vector<double>& bias, std::size_t channels);
void sub_bias_channels(Tensor& t, const std::vector<double>& bias, std::size_t channels);
std::vector<double> bias_grad_channels(const Tensor& g, std::size_t channels);

}  // namespace racecar::kernels
