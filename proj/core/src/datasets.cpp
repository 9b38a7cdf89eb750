// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "racecar/errors.hpp"
#include "racecar/io.hpp"
#include "racecar/rng.hpp"

namespace racecar {

namespace {

void add_peak(std::vector<double>& img, std::size_t n, double cy, double cx, double sigma) {
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double dy = static_cast<double>(r) - cy;
            const double dx = static_cast<double>(c) - cx;
            img[r * n + c] += std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
}

void add_scribbles(std::vector<double>& img, std::size_t n, const PeakParams& p, Rng& rng) {
    for (int s = 0; s < p.scribble_count; ++s) {
        std::size_t r = rng.uniform_index(n);
        std::size_t c = rng.uniform_index(n);
        for (int step = 0; step <= p.scribble_steps; ++step) {
            img[r * n + c] = std::max(img[r * n + c], p.scribble_intensity);
            switch (rng.uniform_index(4)) {
                case 0: r = (r + 1) % n; break;
                case 1: r = (r + n - 1) % n; break;
                case 2: c = (c + 1) % n; break;
                default: c = (c + n - 1) % n; break;
            }
        }
    }
}

Dataset make_image_dataset(const std::vector<std::vector<double>>& images,
                           const std::vector<int>& labels, std::size_t n,
                           std::size_t num_classes, std::string split, std::string provenance) {
    Dataset d;
    d.inputs = Tensor(Shape{images.size(), n, n});
    for (std::size_t i = 0; i < images.size(); ++i)
        std::copy(images[i].begin(), images[i].end(), d.inputs.sample(i));
    d.labels = labels;
    d.num_classes = num_classes;
    d.split = std::move(split);
    d.provenance = std::move(provenance);
    return d;
}

}  // namespace

std::vector<std::vector<double>> peak_templates(const PeakParams& params) {
    const std::size_t n = params.image_size;
    const double q = static_cast<double>(n) / 4.0;  // quadrant center offset
    std::vector<std::vector<double>> out(2, std::vector<double>(n * n, 0.0));
    add_peak(out[0], n, q, q, params.peak_sigma);                          // upper left
    add_peak(out[1], n, 3.0 * q - 1.0, 3.0 * q - 1.0, params.peak_sigma);  // lower right
    for (auto& t : out)
        for (double& v : t) v = std::min(1.0, v);
    return out;
}

DatasetPair gen_peak_dataset(std::uint64_t seed, const PeakParams& params) {
    const std::size_t n = params.image_size;
    const auto templates = peak_templates(params);
    Rng rng(seed);

    std::vector<std::vector<double>> images(110);
    std::vector<int> labels(110);
    for (std::size_t i = 0; i < 110; ++i) {
        const int cls = i < 55 ? 0 : 1;
        images[i] = templates[cls];
        add_scribbles(images[i], n, params, rng);
        for (double& v : images[i]) v = std::clamp(v, 0.0, 1.0);
        labels[i] = cls;
    }

    // Stratified 50/5 per class, then a seeded shuffle of the train order.
    std::vector<std::size_t> train_idx, test_idx;
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < 110; ++i)
            if (labels[i] == cls) idx.push_back(i);
        rng.shuffle(idx);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + 50);
        test_idx.insert(test_idx.end(), idx.begin() + 50, idx.end());
    }
    rng.shuffle(train_idx);

    auto gather = [&](const std::vector<std::size_t>& idx, const char* split) {
        std::vector<std::vector<double>> im;
        std::vector<int> lb;
        for (std::size_t i : idx) {
            im.push_back(images[i]);
            lb.push_back(labels[i]);
        }
        return make_image_dataset(im, lb, n, 2, split, "peak seed=" + std::to_string(seed));
    };
    return {gather(train_idx, "train"), gather(test_idx, "test")};
}

std::vector<std::array<double, 3>> bitsphere_vertices() {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const double s = 1.0 / std::sqrt(1.0 + phi * phi);
    std::vector<std::array<double, 3>> v;
    for (double a : {1.0, -1.0})
        for (double b : {phi, -phi}) {
            v.push_back({0.0, a * s, b * s});
            v.push_back({a * s, b * s, 0.0});
            v.push_back({b * s, 0.0, a * s});
        }
    return v;
}

namespace {

double vertex_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// f(x) = sum over active vertex pairs of their chord distance; invariant
// under any distance-preserving permutation of the vertices.
std::vector<double> bitsphere_f_values() {
    const auto verts = bitsphere_vertices();
    const std::size_t n = verts.size();
    std::vector<double> pairw(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) pairw[i * n + j] = vertex_distance(verts[i], verts[j]);

    std::vector<double> f(std::size_t{1} << n, 0.0);
    for (std::size_t pat = 0; pat < f.size(); ++pat) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(pat & (std::size_t{1} << i))) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (pat & (std::size_t{1} << j)) acc += pairw[i * n + j];
            }
        }
        f[pat] = acc;
    }
    return f;
}

double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

struct RuleStats {
    double p_y1, mi;
};

RuleStats rule_stats(const std::vector<double>& f, double gamma, double theta) {
    double p_sum = 0.0, h_sum = 0.0;
    for (double fv : f) {
        const double p = 1.0 / (1.0 + std::exp(-gamma * (fv - theta)));
        p_sum += p;
        h_sum += binary_entropy(p);
    }
    const double n = static_cast<double>(f.size());
    const double p_bar = p_sum / n;
    return {p_bar, binary_entropy(p_bar) - h_sum / n};
}

}  // namespace

BitSphereTask calibrate_bitsphere(const BitSphereTaskConfig& cfg) {
    BitSphereTask task;
    task.f_values = bitsphere_f_values();
    const std::size_t n = task.f_values.size();

    if (cfg.theta > 0.0) {
        task.theta = cfg.theta;
    } else {
        // Median-balancing threshold between two distinct f values.
        std::vector<double> sorted = task.f_values;
        std::sort(sorted.begin(), sorted.end());
        double best_theta = 0.0;
        double best_gap = 1e9;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (sorted[i + 1] <= sorted[i]) continue;
            const double frac_above = static_cast<double>(n - i - 1) / static_cast<double>(n);
            const double gap = std::abs(frac_above - 0.5);
            if (gap < best_gap) {
                best_gap = gap;
                best_theta = 0.5 * (sorted[i] + sorted[i + 1]);
            }
        }
        task.theta = best_theta;
    }

    if (cfg.gamma > 0.0) {
        task.gamma = cfg.gamma;
    } else {
        double gamma = 1.0;
        RuleStats st{};
        bool ok = false;
        for (int it = 0; it < 100; ++it) {
            st = rule_stats(task.f_values, gamma, task.theta);
            if (st.mi >= 0.951 && st.mi <= 1.0 && st.p_y1 >= 0.45 && st.p_y1 <= 0.55) {
                ok = true;
                break;
            }
            gamma *= 1.6;
        }
        if (!ok) throw ContractError("bitsphere calibration failed to reach the target bounds");
        task.gamma = gamma;
    }

    const RuleStats st = rule_stats(task.f_values, task.gamma, task.theta);
    task.p_y1 = st.p_y1;
    task.mutual_information = st.mi;
    if (st.p_y1 < 0.45 || st.p_y1 > 0.55 || st.mi < 0.95 || st.mi > 1.0)
        throw ContractError("bitsphere config violates the p(y=1)/I(X;Y) bounds");
    return task;
}

DatasetPair gen_bitsphere_task(const BitSphereTaskConfig& cfg, std::uint64_t seed) {
    const BitSphereTask task = calibrate_bitsphere(cfg);
    const std::size_t bits = 12;
    const std::size_t n = std::size_t{1} << bits;
    Rng rng(seed);

    std::vector<int> labels(n);
    for (std::size_t pat = 0; pat < n; ++pat) {
        const double p =
            1.0 / (1.0 + std::exp(-task.gamma * (task.f_values[pat] - task.theta)));
        labels[pat] = rng.uniform() < p ? 1 : 0;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::size_t n_train = 3277;

    auto gather = [&](std::size_t lo, std::size_t hi, const char* split) {
        Dataset d;
        d.inputs = Tensor(Shape{hi - lo, bits});
        d.labels.resize(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t pat = order[i];
            double* row = d.inputs.sample(i - lo);
            for (std::size_t b = 0; b < bits; ++b)
                row[b] = (pat & (std::size_t{1} << b)) ? 1.0 : 0.0;
            d.labels[i - lo] = labels[pat];
        }
        d.num_classes = 2;
        d.split = split;
        d.provenance = "bitsphere seed=" + std::to_string(seed);
        return d;
    };
    return {gather(0, n_train, "train"), gather(n_train, n, "test")};
}

std::vector<std::vector<std::size_t>> bitsphere_symmetry_generators() {
    const auto verts = bitsphere_vertices();
    const std::size_t n = verts.size();

    auto rotation_perm = [&](const std::array<double, 3>& axis, double angle) {
        const double na = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        const std::array<double, 3> u{axis[0] / na, axis[1] / na, axis[2] / na};
        const double c = std::cos(angle), s = std::sin(angle);
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Rodrigues rotation of vertex i.
            const auto& v = verts[i];
            const double d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            std::array<double, 3> cr{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                                     u[0] * v[1] - u[1] * v[0]};
            std::array<double, 3> r;
            for (int k = 0; k < 3; ++k) r[k] = v[k] * c + cr[k] * s + u[k] * d * (1.0 - c);
            std::size_t best = 0;
            double best_d = 1e9;
            for (std::size_t j = 0; j < n; ++j) {
                const double dist = vertex_distance({r[0], r[1], r[2]}, verts[j]);
                if (dist < best_d) {
                    best_d = dist;
                    best = j;
                }
            }
            if (best_d > 1e-9)
                throw NumericError("bitsphere symmetry: rotation does not map vertices");
            perm[i] = best;
        }
        return perm;
    };

    const double two_pi_5 = 2.0 * 3.14159265358979323846 / 5.0;
    return {rotation_perm(verts[0], two_pi_5), rotation_perm(verts[3], two_pi_5)};
}

Dataset swap_labels(const Dataset& d) {
    if (d.num_classes != 2) throw ContractError("swap_labels: needs a binary task");
    Dataset out = d;
    for (int& l : out.labels) l = 1 - l;
    out.provenance += " labels-swapped";
    return out;
}

namespace {

std::uint32_t read_be_u32(const std::string& buf, std::size_t off, const std::string& path) {
    if (off + 4 > buf.size())
        throw ParseError("idx: truncated file " + path, static_cast<long>(off));
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 3]));
}

void put_be_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string ib = read_text_file(images_path);
    if (read_be_u32(ib, 0, images_path) != 0x00000803u)
        throw ParseError("idx: bad image magic in " + images_path, 0);
    const std::uint32_t count = read_be_u32(ib, 4, images_path);
    const std::uint32_t rows = read_be_u32(ib, 8, images_path);
    const std::uint32_t cols = read_be_u32(ib, 12, images_path);
    const std::size_t need = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (ib.size() < need)
        throw ParseError("idx: truncated image data in " + images_path,
                         static_cast<long>(ib.size()));

    const std::string lb = read_text_file(labels_path);
    if (read_be_u32(lb, 0, labels_path) != 0x00000801u)
        throw ParseError("idx: bad label magic in " + labels_path, 0);
    const std::uint32_t lcount = read_be_u32(lb, 4, labels_path);
    if (lcount != count)
        throw ParseError("idx: image/label count mismatch (" + std::to_string(count) + " vs " +
                             std::to_string(lcount) + ")",
                         4);
    if (lb.size() < 8 + static_cast<std::size_t>(lcount))
        throw ParseError("idx: truncated label data in " + labels_path,
                         static_cast<long>(lb.size()));

    Dataset d;
    d.inputs = Tensor(Shape{count, rows, cols});
    for (std::size_t i = 0; i < static_cast<std::size_t>(count) * rows * cols; ++i)
        d.inputs.data[i] = static_cast<unsigned char>(ib[16 + i]) / 255.0;
    d.labels.resize(count);
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        d.labels[i] = static_cast<unsigned char>(lb[8 + i]);
        max_label = std::max(max_label, d.labels[i]);
    }
    d.num_classes = static_cast<std::size_t>(max_label) + 1;
    d.split = "train";
    d.provenance = "idx " + images_path;
    return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& d) {
    if (d.inputs.sample_shape().size() != 2)
        throw ContractError("write_idx: sample shape must be {H,W}");
    const std::size_t n = d.size();
    const std::size_t rows = d.inputs.shape[1], cols = d.inputs.shape[2];

    std::string ib;
    put_be_u32(ib, 0x00000803u);
    put_be_u32(ib, static_cast<std::uint32_t>(n));
    put_be_u32(ib, static_cast<std::uint32_t>(rows));
    put_be_u32(ib, static_cast<std::uint32_t>(cols));
    for (double v : d.inputs.data) {
        const int b = static_cast<int>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
        ib.push_back(static_cast<char>(b));
    }
    write_text_file(images_path, ib);

    std::string lb;
    put_be_u32(lb, 0x00000801u);
    put_be_u32(lb, static_cast<std::uint32_t>(n));
    for (int l : d.labels) lb.push_back(static_cast<char>(l));
    write_text_file(labels_path, lb);
}

Dataset select_two_digits(const Dataset& mnist, std::uint64_t seed) {
    if (mnist.size() < 2) throw ContractError("select_two_digits: dataset too small");
    bool multi = false;
    for (std::size_t i = 1; i < mnist.labels.size(); ++i)
        if (mnist.labels[i] != mnist.labels[0]) {
            multi = true;
            break;
        }
    if (!multi) throw ContractError("select_two_digits: needs at least two distinct labels");

    Rng rng(seed);
    const std::size_t a = rng.uniform_index(mnist.size());
    std::size_t b = a;
    while (mnist.labels[b] == mnist.labels[a]) b = rng.uniform_index(mnist.size());

    Dataset d;
    Shape s{2};
    const Shape sample = mnist.inputs.sample_shape();
    s.insert(s.end(), sample.begin(), sample.end());
    d.inputs = Tensor(s);
    std::copy(mnist.inputs.sample(a), mnist.inputs.sample(a) + mnist.inputs.sample_numel(),
              d.inputs.sample(0));
    std::copy(mnist.inputs.sample(b), mnist.inputs.sample(b) + mnist.inputs.sample_numel(),
              d.inputs.sample(1));
    d.labels = {mnist.labels[a], mnist.labels[b]};
    d.num_classes = mnist.num_classes;
    d.split = mnist.split;
    d.provenance = "two-digits seed=" + std::to_string(seed) + " of (" + mnist.provenance + ")";
    return d;
}

namespace {

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64le(const std::string& buf, std::size_t& pos) {
    if (pos + 8 > buf.size()) throw ParseError("dataset cache: truncated", (long)pos);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

void put_str(std::string& out, const std::string& s) {
    put_u64le(out, s.size());
    out += s;
}

std::string get_str(const std::string& buf, std::size_t& pos) {
    const std::uint64_t n = get_u64le(buf, pos);
    if (pos + n > buf.size()) throw ParseError("dataset cache: truncated string", (long)pos);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& d) {
    std::string payload;
    put_str(payload, d.split);
    put_str(payload, d.provenance);
    put_u64le(payload, d.num_classes);
    put_u64le(payload, d.inputs.shape.size());
    for (std::size_t s : d.inputs.shape) put_u64le(payload, s);
    put_u64le(payload, d.inputs.data.size());
    for (double v : d.inputs.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64le(payload, bits);
    }
    put_u64le(payload, d.labels.size());
    for (int l : d.labels) put_u64le(payload, static_cast<std::uint64_t>(static_cast<long>(l)));

    std::string out = "RCDS";
    put_u64le(out, 1);  // version
    put_u64le(out, fnv1a(payload.data(), payload.size()));
    out += payload;
    write_text_file(path, out);
}

Dataset load_dataset(const std::string& path) {
    const std::string buf = read_text_file(path);
    if (buf.size() < 20 || buf.compare(0, 4, "RCDS") != 0)
        throw ParseError("dataset cache: bad magic in " + path, 0);
    std::size_t pos = 4;
    const std::uint64_t version = get_u64le(buf, pos);
    if (version != 1) throw ParseError("dataset cache: unsupported version", 4);
    const std::uint64_t checksum = get_u64le(buf, pos);
    if (fnv1a(buf.data() + pos, buf.size() - pos) != checksum)
        throw ParseError("dataset cache: checksum mismatch in " + path, 12);

    Dataset d;
    d.split = get_str(buf, pos);
    d.provenance = get_str(buf, pos);
    d.num_classes = get_u64le(buf, pos);
    Shape shape(get_u64le(buf, pos));
    for (auto& s : shape) s = get_u64le(buf, pos);
    std::vector<double> data(get_u64le(buf, pos));
    for (auto& v : data) {
        const std::uint64_t bits = get_u64le(buf, pos);
        std::memcpy(&v, &bits, 8);
    }
    d.inputs = Tensor(shape, std::move(data));
    d.labels.resize(get_u64le(buf, pos));
    for (auto& l : d.labels) l = static_cast<int>(static_cast<long>(get_u64le(buf, pos)));
    return d;
}

}  // namespace racecar
