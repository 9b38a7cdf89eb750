// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "racecar/errors.hpp"

namespace racecar {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

constexpr char kNetMagic[8] = {'R', 'C', 'N', 'E', 'T', '0', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    std::uint64_t u64() {
        if (pos + 8 > buf.size()) throw ParseError("checkpoint: truncated", (long)pos);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

void put_doubles(std::string& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double x : v) put_f64(out, x);
}

std::vector<double> get_doubles(Reader& r) {
    const std::uint64_t n = r.u64();
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

}  // namespace

void save_network(const std::string& path, const Network& net) {
    std::string out(kNetMagic, sizeof(kNetMagic));
    put_u64(out, net.spec.size());
    for (const auto& l : net.spec) {
        put_u64(out, static_cast<std::uint64_t>(l.kind));
        put_u64(out, l.out_features);
        put_u64(out, l.kernel);
        put_u64(out, l.out_channels);
        put_u64(out, l.stride);
        put_u64(out, l.has_bias ? 1 : 0);
        put_u64(out, static_cast<std::uint64_t>(l.act));
    }
    put_u64(out, net.input_shape.size());
    for (std::size_t d : net.input_shape) put_u64(out, d);
    put_u64(out, net.units.size());
    for (const auto& u : net.units) {
        put_doubles(out, u.weight.raw());
        put_doubles(out, u.bias);
        put_u64(out, u.has_bn ? 1 : 0);
        if (u.has_bn) {
            put_doubles(out, u.bn.gamma);
            put_doubles(out, u.bn.beta);
            put_doubles(out, u.bn.run_mean);
            put_doubles(out, u.bn.run_var);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("save_network: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Network load_network(const std::string& path) {
    const std::string buf = read_text_file(path);
    if (buf.size() < sizeof(kNetMagic) ||
        std::memcmp(buf.data(), kNetMagic, sizeof(kNetMagic)) != 0)
        throw ParseError("load_network: bad magic in " + path, 0);
    Reader r{buf, sizeof(kNetMagic)};

    const std::uint64_t nspec = r.u64();
    std::vector<LayerSpec> spec(nspec);
    for (auto& l : spec) {
        l.kind = static_cast<LayerSpec::Kind>(r.u64());
        l.out_features = r.u64();
        l.kernel = r.u64();
        l.out_channels = r.u64();
        l.stride = r.u64();
        l.has_bias = r.u64() != 0;
        l.act = static_cast<Act>(r.u64());
    }
    Shape input_shape(r.u64());
    for (auto& d : input_shape) d = r.u64();

    // Rebuild the structure, then overwrite every parameter array.
    Network net = build_network(spec, input_shape, 0);
    const std::uint64_t nunits = r.u64();
    if (nunits != net.units.size()) throw ParseError("load_network: unit count mismatch");
    for (auto& u : net.units) {
        auto w = get_doubles(r);
        if (w.size() != u.weight.size()) throw ParseError("load_network: weight size mismatch");
        u.weight.raw() = std::move(w);
        u.bias = get_doubles(r);
        const bool has_bn = r.u64() != 0;
        if (has_bn != u.has_bn) throw ParseError("load_network: BN flag mismatch");
        if (has_bn) {
            u.bn.gamma = get_doubles(r);
            u.bn.beta = get_doubles(r);
            u.bn.run_mean = get_doubles(r);
            u.bn.run_var = get_doubles(r);
        }
    }
    return net;
}

void write_pgm(const std::string& path, const std::vector<double>& pixels, std::size_t height,
               std::size_t width) {
    if (pixels.size() != height * width) throw ShapeError("write_pgm: pixel count mismatch");
    double lo = pixels.empty() ? 0.0 : pixels[0], hi = lo;
    for (double p : pixels) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    const double scale = (hi > lo) ? 255.0 / (hi - lo) : 0.0;
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.reserve(out.size() + pixels.size());
    for (double p : pixels) {
        const int v = static_cast<int>((p - lo) * scale + 0.5);
        out.push_back(static_cast<char>(std::clamp(v, 0, 255)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("write_pgm: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    out += '\n';
    return out;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("write_text_file: cannot open " + path);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace racecar
