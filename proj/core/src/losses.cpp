// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/losses.hpp"

#include <algorithm>
#include <cmath>

#include "racecar/errors.hpp"
#include "racecar/linalg.hpp"
#include "racecar/rng.hpp"

namespace racecar {

RacecarConfig RacecarConfig::all_layers(double lambda, ReversePlan::Variant v) {
    RacecarConfig c;
    c.variant = v;
    c.lambdas.assign(1, lambda);  // broadcast over all layers by resolve_lambdas
    return c;
}

RacecarConfig RacecarConfig::input_only(double lambda) {
    RacecarConfig c;
    c.lambdas = {lambda};
    c.constrained_layers = {1};
    return c;
}

std::vector<double> RacecarConfig::resolve_lambdas(std::size_t num_units) const {
    validate(num_units);
    std::vector<double> out(num_units, 0.0);
    if (constrained_layers.empty()) {
        for (std::size_t m = 0; m < num_units; ++m)
            out[m] = lambdas.size() == 1 ? lambdas[0] : lambdas[m];
    } else {
        for (std::size_t i = 0; i < constrained_layers.size(); ++i)
            out[constrained_layers[i] - 1] = lambdas.size() == 1 ? lambdas[0] : lambdas[i];
    }
    return out;
}

void RacecarConfig::validate(std::size_t num_units) const {
    if (lambdas.empty()) throw ContractError("RacecarConfig: no lambdas");
    const std::size_t constrained =
        constrained_layers.empty() ? num_units : constrained_layers.size();
    if (lambdas.size() != 1 && lambdas.size() != constrained)
        throw ContractError("RacecarConfig: lambdas must be scalar or one per constrained layer");
    bool any = false;
    for (double l : lambdas) {
        if (l < 0.0) throw ContractError("RacecarConfig: negative lambda");
        if (l > 0.0) any = true;
    }
    if (!any) throw ContractError("RacecarConfig: at least one lambda must be positive");
    for (std::size_t m : constrained_layers) {
        if (m == 0 || m > num_units)
            throw ContractError("RacecarConfig: constrained layer " + std::to_string(m) +
                                " out of range");
    }
}

double racecar_loss(const ActivationTrace& trace, const std::vector<Tensor>& recon,
                    const RacecarConfig& cfg) {
    if (trace.entries.empty()) throw ContractError("racecar_loss: empty trace");
    const std::size_t n = trace.entries.size() - 1;
    if (recon.size() < n) throw ContractError("racecar_loss: missing reconstructions");
    const auto lambdas = cfg.resolve_lambdas(n);
    const double b = static_cast<double>(trace.d(1).batch());
    double loss = 0.0;
    for (std::size_t m = 1; m <= n; ++m) {
        if (lambdas[m - 1] == 0.0) continue;
        loss += lambdas[m - 1] * squared_distance(trace.d(m), recon[m - 1]);
    }
    return loss / b;
}

double racecar_loss(const ActivationTrace& trace, const ActivationTrace& reverse_trace,
                    const RacecarConfig& cfg) {
    std::vector<Tensor> recon;
    recon.reserve(reverse_trace.entries.size());
    for (const auto& e : reverse_trace.entries) recon.push_back(e.value);
    if (!recon.empty()) recon.pop_back();  // drop d'_{n+1}
    return racecar_loss(trace, recon, cfg);
}

double ortho_loss_soft(const std::vector<Matrix>& weights) {
    if (weights.empty()) throw ContractError("ortho_loss_soft: no weights");
    double loss = 0.0;
    for (const Matrix& w : weights) {
        // ||W^T W - I||_F^2 = tr((W^T W)^2) - 2 tr(W^T W) + in. The traces are
        // computed on the small-side Gram matrix, which is exact and avoids
        // materializing an in x in product for wide layers.
        if (w.rows() < w.cols()) {
            const Matrix p = matmul_nt(w, w);  // W W^T, rows x rows
            double tr_p = 0.0, tr_p2 = 0.0;
            for (std::size_t i = 0; i < p.rows(); ++i) {
                tr_p += p(i, i);
                for (std::size_t j = 0; j < p.rows(); ++j) tr_p2 += p(i, j) * p(j, i);
            }
            loss += tr_p2 - 2.0 * tr_p + static_cast<double>(w.cols());
        } else {
            Matrix g = matmul_tn(w, w);
            for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
            const double f = g.frobenius_norm();
            loss += f * f;
        }
    }
    return loss;
}

Matrix ortho_loss_soft_grad(const Matrix& weight) {
    // 4 W (W^T W - I) = 4 ((W W^T) W - W); associate on the cheaper side.
    Matrix out(weight.rows(), weight.cols());
    if (weight.rows() < weight.cols()) {
        const Matrix p = matmul_nt(weight, weight);
        out = matmul(p, weight);
        out -= weight;
    } else {
        Matrix g = matmul_tn(weight, weight);
        for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
        out = matmul(weight, g);
    }
    out *= 4.0;
    return out;
}

namespace {

// Gram residual on the small side: M^T M - I when cols <= rows, else
// M M^T - I. The eigenvalues of M^T M - I are those of M M^T - I plus
// (cols - rows) copies of -1, so the spectral norm transfers as
// max(sigma_small, 1) for wide matrices.
Matrix gram_residual_small(const Matrix& w, bool& wide) {
    wide = w.cols() > w.rows();
    Matrix a = wide ? matmul_nt(w, w) : matmul_tn(w, w);
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) -= 1.0;
    return a;
}

// Dominant eigenpair of a symmetric matrix by power iteration.
// Returns the signed eigenvalue; v holds the eigenvector.
double dominant_eigen(const Matrix& a, std::vector<double>& v, int iters = 100) {
    Rng rng(0xab5eedu);
    v.assign(a.rows(), 0.0);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    double nv = norm2(v);
    if (nv == 0.0) return 0.0;
    for (double& x : v) x /= nv;
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> w = matvec(a, v);
        const double nw = norm2(w);
        if (nw == 0.0) return 0.0;
        lambda = dot(v, w);  // Rayleigh quotient
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / nw;
    }
    lambda = dot(v, matvec(a, v));
    return lambda;
}

}  // namespace

double srip_loss(const std::vector<Matrix>& weights, double beta) {
    if (beta < 0.0) throw ContractError("srip_loss: beta must be >= 0");
    if (beta == 0.0) return 0.0;
    double loss = 0.0;
    for (const Matrix& w : weights) {
        bool wide = false;
        const Matrix a = gram_residual_small(w, wide);
        const double s = spectral_norm(a, 100, 1e-6);
        loss += wide ? std::max(s, 1.0) : s;
    }
    return beta * loss;
}

Matrix srip_grad(const Matrix& weight) {
    bool wide = false;
    const Matrix a = gram_residual_small(weight, wide);
    std::vector<double> v;
    const double lambda = dominant_eigen(a, v);
    Matrix out(weight.rows(), weight.cols());
    if (lambda == 0.0) return out;
    // For wide matrices the null-space eigenvalue -1 may dominate; it is
    // insensitive to W, so the subgradient there is zero.
    if (wide && std::abs(lambda) <= 1.0) return out;
    const double sign = lambda >= 0.0 ? 1.0 : -1.0;
    if (wide) {
        // d v^T (M M^T - I) v / dM = 2 v (M^T v)^T
        const std::vector<double> mtv = matvec_t(weight, v);
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < out.cols(); ++j)
                out(i, j) = sign * 2.0 * v[i] * mtv[j];
    } else {
        // d v^T (M^T M - I) v / dM = 2 (M v) v^T
        const std::vector<double> mv = matvec(weight, v);
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < out.cols(); ++j)
                out(i, j) = sign * 2.0 * mv[i] * v[j];
    }
    return out;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    Tensor scratch;
    return cross_entropy_with_grad(logits, labels, scratch);
}

double cross_entropy_with_grad(const Tensor& logits, const std::vector<int>& labels,
                               Tensor& grad) {
    const std::size_t b = logits.batch();
    if (b == 0) throw ContractError("cross_entropy: empty batch");
    if (labels.size() != b) throw ContractError("cross_entropy: batch/label count mismatch");
    const std::size_t k = logits.sample_numel();
    grad = Tensor(logits.shape);
    double loss = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        const int y = labels[s];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw ContractError("cross_entropy: label out of range");
        const double* z = logits.sample(s);
        double* g = grad.sample(s);
        double zmax = z[0];
        for (std::size_t j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
        const double log_denom = std::log(denom);
        loss += -(z[y] - zmax - log_denom);
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(z[j] - zmax) / denom;
            g[j] = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(b);
        }
    }
    return loss / static_cast<double>(b);
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t b = logits.batch();
    if (b == 0 || labels.size() != b) return 0.0;
    const std::size_t k = logits.sample_numel();
    std::size_t hits = 0;
    for (std::size_t s = 0; s < b; ++s) {
        const double* z = logits.sample(s);
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (z[j] > z[best]) best = j;
        if (static_cast<int>(best) == labels[s]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(b);
}

}  // namespace racecar
