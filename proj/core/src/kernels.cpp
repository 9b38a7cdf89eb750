// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "kernels.hpp"

#include <cmath>

#include "racecar/errors.hpp"

namespace racecar::kernels {

double apply_act(Act a, double x) {
    switch (a) {
        case Act::None: return x;
        case Act::Relu: return x > 0.0 ? x : 0.0;
        case Act::LeakyRelu: return x > 0.0 ? x : 0.2 * x;
        case Act::Tanh: return std::tanh(x);
        case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

double act_grad(Act a, double pre) {
    switch (a) {
        case Act::None: return 1.0;
        case Act::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Act::LeakyRelu: return pre > 0.0 ? 1.0 : 0.2;
        case Act::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Act::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-pre));
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

void act_forward(Tensor& t, Act a) {
    if (a == Act::None) return;
    for (double& x : t.data) x = apply_act(a, x);
}

void act_backward(Tensor& g, const Tensor& pre, Act a) {
    if (a == Act::None) return;
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= act_grad(a, pre.data[i]);
}

ConvGeom ConvGeom::make(const Shape& in, std::size_t k, std::size_t cout, std::size_t stride) {
    if (in.size() != 3) throw ShapeError("conv2d expects a {C,H,W} input");
    ConvGeom g;
    g.cin = in[0];
    g.h = in[1];
    g.w = in[2];
    g.cout = cout;
    g.k = k;
    g.stride = stride;
    g.pad_lo = (k - 1) / 2;  // "same" padding; even kernels pad one more on the high side
    g.pad_hi = (k - 1) - g.pad_lo;
    g.ho = (g.h - 1) / stride + 1;
    g.wo = (g.w - 1) / stride + 1;
    return g;
}

Tensor conv2d_forward(const Tensor& x, const Matrix& kernel, const std::vector<double>* bias,
                      const ConvGeom& g) {
    const std::size_t b = x.batch();
    Tensor y(Shape{b, g.cout, g.ho, g.wo});
    for (std::size_t n = 0; n < b; ++n) {
        const double* xs = x.sample(n);
        double* ys = y.sample(n);
        for (std::size_t co = 0; co < g.cout; ++co) {
            for (std::size_t i = 0; i < g.ho; ++i) {
                for (std::size_t j = 0; j < g.wo; ++j) {
                    double acc = bias ? (*bias)[co] : 0.0;
                    for (std::size_t u = 0; u < g.k; ++u) {
                        const long hi = static_cast<long>(i * g.stride + u) -
                                        static_cast<long>(g.pad_lo);
                        if (hi < 0 || hi >= static_cast<long>(g.h)) continue;
                        for (std::size_t v = 0; v < g.k; ++v) {
                            const long wi = static_cast<long>(j * g.stride + v) -
                                            static_cast<long>(g.pad_lo);
                            if (wi < 0 || wi >= static_cast<long>(g.w)) continue;
                            const std::size_t krow = (u * g.k + v) * g.cin;
                            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                acc += xs[(ci * g.h + hi) * g.w + wi] *
                                       kernel(krow + ci, co);
                            }
                        }
                    }
                    ys[(co * g.ho + i) * g.wo + j] = acc;
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Matrix& kernel, const ConvGeom& g,
                             std::size_t batch) {
    Tensor gx(Shape{batch, g.cin, g.h, g.w});
    for (std::size_t n = 0; n < batch; ++n) {
        const double* gys = gy.sample(n);
        double* gxs = gx.sample(n);
        for (std::size_t co = 0; co < g.cout; ++co) {
            for (std::size_t i = 0; i < g.ho; ++i) {
                for (std::size_t j = 0; j < g.wo; ++j) {
                    const double gv = gys[(co * g.ho + i) * g.wo + j];
                    if (gv == 0.0) continue;
                    for (std::size_t u = 0; u < g.k; ++u) {
                        const long hi = static_cast<long>(i * g.stride + u) -
                                        static_cast<long>(g.pad_lo);
                        if (hi < 0 || hi >= static_cast<long>(g.h)) continue;
                        for (std::size_t v = 0; v < g.k; ++v) {
                            const long wi = static_cast<long>(j * g.stride + v) -
                                            static_cast<long>(g.pad_lo);
                            if (wi < 0 || wi >= static_cast<long>(g.w)) continue;
                            const std::size_t krow = (u * g.k + v) * g.cin;
                            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                gxs[(ci * g.h + hi) * g.w + wi] +=
                                    gv * kernel(krow + ci, co);
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

void conv2d_backward_kernel(const Tensor& x, const Tensor& gy, const ConvGeom& g, Matrix& dk) {
    const std::size_t b = x.batch();
    for (std::size_t n = 0; n < b; ++n) {
        const double* xs = x.sample(n);
        const double* gys = gy.sample(n);
        for (std::size_t co = 0; co < g.cout; ++co) {
            for (std::size_t i = 0; i < g.ho; ++i) {
                for (std::size_t j = 0; j < g.wo; ++j) {
                    const double gv = gys[(co * g.ho + i) * g.wo + j];
                    if (gv == 0.0) continue;
                    for (std::size_t u = 0; u < g.k; ++u) {
                        const long hi = static_cast<long>(i * g.stride + u) -
                                        static_cast<long>(g.pad_lo);
                        if (hi < 0 || hi >= static_cast<long>(g.h)) continue;
                        for (std::size_t v = 0; v < g.k; ++v) {
                            const long wi = static_cast<long>(j * g.stride + v) -
                                            static_cast<long>(g.pad_lo);
                            if (wi < 0 || wi >= static_cast<long>(g.w)) continue;
                            const std::size_t krow = (u * g.k + v) * g.cin;
                            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                dk(krow + ci, co) += gv * xs[(ci * g.h + hi) * g.w + wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

BnGeom bn_geom_for(const Shape& sample_shape, bool is_conv_features) {
    BnGeom g;
    if (is_conv_features && sample_shape.size() == 3) {
        g.channels = sample_shape[0];
        g.spatial = sample_shape[1] * sample_shape[2];
    } else {
        g.channels = shape_numel(sample_shape);
        g.spatial = 1;
    }
    return g;
}

void bn_forward_train(Tensor& t, const BnGeom& g, BatchNormState& bn, bool update_running,
                      std::vector<double>& mean_out, std::vector<double>& var_out) {
    const std::size_t b = t.batch();
    const double n = static_cast<double>(b * g.spatial);
    mean_out.assign(g.channels, 0.0);
    var_out.assign(g.channels, 0.0);
    for (std::size_t s = 0; s < b; ++s) {
        const double* p = t.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t k = 0; k < g.spatial; ++k) mean_out[c] += p[c * g.spatial + k];
    }
    for (double& m : mean_out) m /= n;
    for (std::size_t s = 0; s < b; ++s) {
        const double* p = t.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t k = 0; k < g.spatial; ++k) {
                const double d = p[c * g.spatial + k] - mean_out[c];
                var_out[c] += d * d;
            }
    }
    for (double& v : var_out) v /= n;
    if (update_running) {
        for (std::size_t c = 0; c < g.channels; ++c) {
            bn.run_mean[c] = bn.momentum * bn.run_mean[c] + (1.0 - bn.momentum) * mean_out[c];
            bn.run_var[c] = bn.momentum * bn.run_var[c] + (1.0 - bn.momentum) * var_out[c];
        }
    }
    for (std::size_t s = 0; s < b; ++s) {
        double* p = t.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c) {
            const double inv = 1.0 / std::sqrt(var_out[c] + bn.eps);
            for (std::size_t k = 0; k < g.spatial; ++k) {
                const double xh = (p[c * g.spatial + k] - mean_out[c]) * inv;
                p[c * g.spatial + k] = bn.gamma[c] * xh + bn.beta[c];
            }
        }
    }
}

void bn_forward_eval(Tensor& t, const BnGeom& g, const BatchNormState& bn) {
    const std::size_t b = t.batch();
    for (std::size_t s = 0; s < b; ++s) {
        double* p = t.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c) {
            const double inv = 1.0 / std::sqrt(bn.run_var[c] + bn.eps);
            for (std::size_t k = 0; k < g.spatial; ++k) {
                const double xh = (p[c * g.spatial + k] - bn.run_mean[c]) * inv;
                p[c * g.spatial + k] = bn.gamma[c] * xh + bn.beta[c];
            }
        }
    }
}

void bn_backward_train(Tensor& grad, const Tensor& pre_bn, const BnGeom& g,
                       const BatchNormState& bn, const std::vector<double>& mean,
                       const std::vector<double>& var, std::vector<double>& dgamma,
                       std::vector<double>& dbeta) {
    const std::size_t b = grad.batch();
    const double n = static_cast<double>(b * g.spatial);
    std::vector<double> sum_g(g.channels, 0.0), sum_gxh(g.channels, 0.0);
    for (std::size_t s = 0; s < b; ++s) {
        const double* gp = grad.sample(s);
        const double* xp = pre_bn.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + bn.eps);
            for (std::size_t k = 0; k < g.spatial; ++k) {
                const double xh = (xp[c * g.spatial + k] - mean[c]) * inv;
                sum_g[c] += gp[c * g.spatial + k];
                sum_gxh[c] += gp[c * g.spatial + k] * xh;
            }
        }
    }
    for (std::size_t c = 0; c < g.channels; ++c) {
        dbeta[c] += sum_g[c];
        dgamma[c] += sum_gxh[c];
    }
    for (std::size_t s = 0; s < b; ++s) {
        double* gp = grad.sample(s);
        const double* xp = pre_bn.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + bn.eps);
            const double scale = bn.gamma[c] * inv;
            for (std::size_t k = 0; k < g.spatial; ++k) {
                const double xh = (xp[c * g.spatial + k] - mean[c]) * inv;
                gp[c * g.spatial + k] =
                    scale * (gp[c * g.spatial + k] - sum_g[c] / n - xh * sum_gxh[c] / n);
            }
        }
    }
}

void bn_backward_eval(Tensor& grad, const Tensor& pre_bn, const BnGeom& g,
                      const BatchNormState& bn, std::vector<double>& dgamma,
                      std::vector<double>& dbeta) {
    const std::size_t b = grad.batch();
    for (std::size_t s = 0; s < b; ++s) {
        double* gp = grad.sample(s);
        const double* xp = pre_bn.sample(s);
        for (std::size_t c = 0; c < g.channels; ++c) {
            const double inv = 1.0 / std::sqrt(bn.run_var[c] + bn.eps);
            for (std::size_t k = 0; k < g.spatial; ++k) {
                const double xh = (xp[c * g.spatial + k] - bn.run_mean[c]) * inv;
                dgamma[c] += gp[c * g.spatial + k] * xh;
                dbeta[c] += gp[c * g.spatial + k];
                gp[c * g.spatial + k] *= bn.gamma[c] * inv;
            }
        }
    }
}

namespace {
Shape pooled_shape(const Shape& s, bool halve) {
    if (s.size() != 4) throw ShapeError("pooling expects a {B,C,H,W} tensor");
    if (halve) return {s[0], s[1], s[2] / 2, s[3] / 2};
    return {s[0], s[1], s[2] * 2, s[3] * 2};
}
}  // namespace

Tensor maxpool_forward(const Tensor& x, std::vector<std::uint32_t>& argmax) {
    Tensor y(pooled_shape(x.shape, true));
    argmax.assign(y.numel(), 0);
    const std::size_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = h / 2, wo = w / 2;
    std::size_t oi = 0;
    for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* plane = x.data.data() + (n * c + ch) * h * w;
            for (std::size_t i = 0; i < ho; ++i) {
                for (std::size_t j = 0; j < wo; ++j, ++oi) {
                    double best = plane[(2 * i) * w + 2 * j];
                    std::uint32_t bi = static_cast<std::uint32_t>((2 * i) * w + 2 * j);
                    for (int du = 0; du < 2; ++du)
                        for (int dv = 0; dv < 2; ++dv) {
                            const std::size_t idx = (2 * i + du) * w + 2 * j + dv;
                            if (plane[idx] > best) {
                                best = plane[idx];
                                bi = static_cast<std::uint32_t>(idx);
                            }
                        }
                    y.data[oi] = best;
                    argmax[oi] = bi;
                }
            }
        }
    }
    return y;
}

Tensor maxpool_backward(const Tensor& gy, const std::vector<std::uint32_t>& argmax,
                        const Shape& in_sample_shape) {
    Shape full{gy.shape[0]};
    full.insert(full.end(), in_sample_shape.begin(), in_sample_shape.end());
    Tensor gx(full);
    const std::size_t b = gy.shape[0], c = gy.shape[1];
    const std::size_t h = in_sample_shape[1], w = in_sample_shape[2];
    const std::size_t per_out_plane = gy.shape[2] * gy.shape[3];
    std::size_t oi = 0;
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* plane = gx.data.data() + (n * c + ch) * h * w;
            for (std::size_t p = 0; p < per_out_plane; ++p, ++oi) plane[argmax[oi]] += gy.data[oi];
        }
    return gx;
}

Tensor upsample_forward(const Tensor& x) {
    Tensor y(pooled_shape(x.shape, false));
    const std::size_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* in = x.data.data() + (n * c + ch) * h * w;
            double* out = y.data.data() + (n * c + ch) * 4 * h * w;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double v = in[i * w + j];
                    out[(2 * i) * 2 * w + 2 * j] = v;
                    out[(2 * i) * 2 * w + 2 * j + 1] = v;
                    out[(2 * i + 1) * 2 * w + 2 * j] = v;
                    out[(2 * i + 1) * 2 * w + 2 * j + 1] = v;
                }
        }
    return y;
}

Tensor upsample_backward(const Tensor& gy) {
    Tensor gx(pooled_shape(gy.shape, true));
    const std::size_t b = gx.shape[0], c = gx.shape[1], h = gx.shape[2], w = gx.shape[3];
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* out = gx.data.data() + (n * c + ch) * h * w;
            const double* in = gy.data.data() + (n * c + ch) * 4 * h * w;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    out[i * w + j] = in[(2 * i) * 2 * w + 2 * j] +
                                     in[(2 * i) * 2 * w + 2 * j + 1] +
                                     in[(2 * i + 1) * 2 * w + 2 * j] +
                                     in[(2 * i + 1) * 2 * w + 2 * j + 1];
                }
        }
    return gx;
}

Tensor avgpool_forward(const Tensor& x) {
    Tensor y(pooled_shape(x.shape, true));
    const std::size_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = h / 2, wo = w / 2;
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* in = x.data.data() + (n * c + ch) * h * w;
            double* out = y.data.data() + (n * c + ch) * ho * wo;
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    out[i * wo + j] = 0.25 * (in[(2 * i) * w + 2 * j] +
                                              in[(2 * i) * w + 2 * j + 1] +
                                              in[(2 * i + 1) * w + 2 * j] +
                                              in[(2 * i + 1) * w + 2 * j + 1]);
                }
        }
    return y;
}

Tensor avgpool_backward(const Tensor& gy) {
    Tensor gx(pooled_shape(gy.shape, false));
    const std::size_t b = gy.shape[0], c = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3];
    const std::size_t w = 2 * wo;
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* in = gy.data.data() + (n * c + ch) * ho * wo;
            double* out = gx.data.data() + (n * c + ch) * 4 * ho * wo;
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    const double v = 0.25 * in[i * wo + j];
                    out[(2 * i) * w + 2 * j] = v;
                    out[(2 * i) * w + 2 * j + 1] = v;
                    out[(2 * i + 1) * w + 2 * j] = v;
                    out[(2 * i + 1) * w + 2 * j + 1] = v;
                }
        }
    return gx;
}

void add_bias_channels(Tensor& t, const std::vector<double>& bias, std::size_t channels) {
    const std::size_t b = t.batch();
    const std::size_t spatial = t.sample_numel() / channels;
    for (std::size_t s = 0; s < b; ++s) {
        double* p = t.sample(s);
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < spatial; ++k) p[c * spatial + k] += bias[c];
    }
}

void sub_bias_channels(Tensor& t, const std::vector<double>& bias, std::size_t channels) {
    const std::size_t b = t.batch();
    const std::size_t spatial = t.sample_numel() / channels;
    for (std::size_t s = 0; s < b; ++s) {
        double* p = t.sample(s);
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < spatial; ++k) p[c * spatial + k] -= bias[c];
    }
}

std::vector<double> bias_grad_channels(const Tensor& g, std::size_t channels) {
    std::vector<double> out(channels, 0.0);
    const std::size_t b = g.batch();
    const std::size_t spatial = g.sample_numel() / channels;
    for (std::size_t s = 0; s < b; ++s) {
        const double* p = g.sample(s);
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < spatial; ++k) out[c] += p[c * spatial + k];
    }
    return out;
}

}  // namespace racecar::kernels
