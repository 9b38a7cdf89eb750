// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "racecar/errors.hpp"
#include "racecar/rng.hpp"

namespace racecar {

FeatureReport extract_features(const Network& net, std::size_t layer_m) {
    if (layer_m == 0 || layer_m > net.units.size())
        throw ContractError("extract_features: layer " + std::to_string(layer_m) +
                            " has no weight matrix");
    const Matrix& w = net.units[layer_m - 1].weight;
    const SvdResult s = svd(w);
    const std::size_t k = std::min(w.rows(), w.cols());

    FeatureReport report;
    report.layer_index = layer_m;
    report.sigma.assign(s.sigma.begin(), s.sigma.begin() + k);
    report.right_singular_vectors.reserve(k);
    for (std::size_t j = 0; j < k; ++j) report.right_singular_vectors.push_back(s.v.col(j));
    return report;
}

namespace {

// x minus its mean, L2-normalized; false when the result is (numerically) zero.
bool center_normalize(std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double n2 = 0.0;
    for (double& v : x) {
        v -= mean;
        n2 += v * v;
    }
    if (n2 <= 0.0) return false;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : x) v *= inv;
    return true;
}

}  // namespace

double similarity_score(const std::vector<double>& v,
                        const std::vector<std::vector<double>>& exemplars) {
    std::vector<double> vc = v;
    if (!center_normalize(vc)) return 0.0;
    double best = 0.0;
    for (const auto& e : exemplars) {
        if (e.size() != v.size()) throw ShapeError("similarity_score: exemplar size mismatch");
        std::vector<double> ec = e;
        if (!center_normalize(ec)) continue;
        double d = 0.0;
        for (std::size_t i = 0; i < vc.size(); ++i) d += vc[i] * ec[i];
        best = std::max(best, std::abs(d));  // singular vectors carry no sign
    }
    return std::min(best, 1.0);
}

void score_features(FeatureReport& report, const std::vector<std::vector<double>>& exemplars) {
    report.similarity.clear();
    for (const auto& v : report.right_singular_vectors)
        report.similarity.push_back(similarity_score(v, exemplars));
}

double mi_estimate(const std::vector<int>& x_samples, const Matrix& t_samples, std::size_t bins,
                   const MiOptions& opts) {
    const std::size_t n = t_samples.rows();
    if (n == 0 || x_samples.size() != n)
        throw ContractError("mi_estimate: sample counts must match and be positive");
    if (bins < 2) throw ContractError("mi_estimate: bins must be >= 2");

    // Dimension subset for wide layers.
    std::vector<std::size_t> dims(t_samples.cols());
    std::iota(dims.begin(), dims.end(), 0);
    if (dims.size() > opts.max_joint_dims) {
        Rng rng(opts.subset_seed);
        rng.shuffle(dims);
        dims.resize(opts.max_joint_dims);
        std::sort(dims.begin(), dims.end());
    }
    if (static_cast<double>(dims.size()) * std::log2(static_cast<double>(bins)) > 62.0)
        throw ContractError("mi_estimate: bins^dims exceeds the 64-bit key space");

    // Per-dimension binning ranges.
    std::vector<double> lo(dims.size()), width(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
        double l, h;
        if (opts.fixed_range) {
            l = opts.fixed_range->first;
            h = opts.fixed_range->second;
        } else {
            l = h = t_samples(0, dims[k]);
            for (std::size_t i = 1; i < n; ++i) {
                l = std::min(l, t_samples(i, dims[k]));
                h = std::max(h, t_samples(i, dims[k]));
            }
        }
        lo[k] = l;
        width[k] = (h > l) ? (h - l) / static_cast<double>(bins) : 0.0;
    }

    std::vector<std::pair<std::uint64_t, int>> keyed(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t key = 0;
        for (std::size_t k = 0; k < dims.size(); ++k) {
            std::size_t idx = 0;
            if (width[k] > 0.0) {
                const double rel = (t_samples(i, dims[k]) - lo[k]) / width[k];
                const long b = static_cast<long>(std::floor(rel));
                idx = static_cast<std::size_t>(
                    std::clamp(b, 0l, static_cast<long>(bins) - 1));
            }
            key = key * bins + idx;
        }
        keyed[i] = {key, x_samples[i]};
    }
    std::sort(keyed.begin(), keyed.end());

    std::unordered_map<int, std::size_t> cx;
    for (int x : x_samples) ++cx[x];

    const double dn = static_cast<double>(n);
    double mi = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && keyed[j].first == keyed[i].first) ++j;
        const double ct = static_cast<double>(j - i);
        std::size_t a = i;
        while (a < j) {
            std::size_t b = a;
            while (b < j && keyed[b].second == keyed[a].second) ++b;
            const double cxt = static_cast<double>(b - a);
            const double cxv = static_cast<double>(cx[keyed[a].second]);
            mi += (cxt / dn) * std::log2(cxt * dn / (ct * cxv));
            a = b;
        }
        i = j;
    }
    return std::max(mi, 0.0);
}

std::vector<int> pattern_ids(const Tensor& inputs) {
    const std::size_t n = inputs.batch();
    const std::size_t d = inputs.sample_numel();
    std::map<std::vector<double>, int> seen;
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(inputs.sample(i), inputs.sample(i) + d);
        auto [it, inserted] = seen.emplace(std::move(row), static_cast<int>(seen.size()));
        ids[i] = it->second;
    }
    return ids;
}

Matrix to_matrix(const Tensor& batch) {
    Matrix m(batch.batch(), batch.sample_numel());
    std::copy(batch.data.begin(), batch.data.end(), m.raw().begin());
    return m;
}

std::vector<MIPlanePoint> mi_plane(const Network& net, const Dataset& data, std::size_t bins,
                                   const MiOptions& opts) {
    if (data.labels.empty()) throw ContractError("mi_plane: dataset has no labels");
    ForwardOptions fopts;
    fopts.record = true;
    const ForwardResult fwd = forward(net, data.inputs, fopts);

    const std::vector<int> xid = pattern_ids(data.inputs);
    std::vector<MIPlanePoint> out;
    out.reserve(fwd.trace.entries.size());
    for (std::size_t m = 1; m <= fwd.trace.entries.size(); ++m) {
        const Matrix t = to_matrix(fwd.trace.d(m));
        MiOptions layer_opts = opts;
        if (m >= 2) {
            const Unit& u = net.units[m - 2];
            if (u.has_act && u.act == Act::Tanh)
                layer_opts.fixed_range = std::make_pair(-1.0, 1.0);
        }
        MIPlanePoint p;
        p.layer_index = m;
        p.i_x = mi_estimate(xid, t, bins, layer_opts);
        p.i_y = mi_estimate(data.labels, t, bins, layer_opts);
        out.push_back(p);
    }
    return out;
}

}  // namespace racecar
