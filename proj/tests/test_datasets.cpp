// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <set>

#include "racecar/analysis.hpp"
#include "racecar/datasets.hpp"
#include "racecar/errors.hpp"
#include "racecar/io.hpp"

using namespace racecar;

TEST_CASE("peak dataset: class balance, split sizes and value range") {
    const DatasetPair p = gen_peak_dataset(3);
    CHECK(p.train.size() == 100);
    CHECK(p.test.size() == 10);
    CHECK(p.train.inputs.sample_shape() == Shape{28, 28});

    int train_c0 = std::count(p.train.labels.begin(), p.train.labels.end(), 0);
    int test_c0 = std::count(p.test.labels.begin(), p.test.labels.end(), 0);
    CHECK(train_c0 == 50);
    CHECK(test_c0 == 5);  // 55 per class in total

    for (double v : p.train.inputs.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("peak dataset: clean template peaks sit in their quadrants") {
    const auto templates = peak_templates();
    REQUIRE(templates.size() == 2);
    for (int cls = 0; cls < 2; ++cls) {
        std::size_t argmax = 0;
        for (std::size_t i = 0; i < templates[cls].size(); ++i)
            if (templates[cls][i] > templates[cls][argmax]) argmax = i;
        const std::size_t r = argmax / 28, c = argmax % 28;
        if (cls == 0) {
            CHECK(r < 14);
            CHECK(c < 14);
        } else {
            CHECK(r >= 14);
            CHECK(c >= 14);
        }
    }
}

TEST_CASE("peak dataset: seeded generation is bitwise deterministic") {
    const DatasetPair a = gen_peak_dataset(9);
    const DatasetPair b = gen_peak_dataset(9);
    CHECK(a.train.inputs == b.train.inputs);
    CHECK(a.train.labels == b.train.labels);
    CHECK(a.test.inputs == b.test.inputs);

    const DatasetPair c = gen_peak_dataset(10);
    CHECK(!(a.train.inputs == c.train.inputs));
}

TEST_CASE("bitsphere: enumerates all 4096 patterns across the split") {
    const DatasetPair p = gen_bitsphere_task({}, 1);
    CHECK(p.train.size() == 3277);
    CHECK(p.test.size() == 819);

    std::set<std::vector<double>> seen;
    auto collect = [&](const Dataset& d) {
        for (std::size_t i = 0; i < d.size(); ++i)
            seen.insert(std::vector<double>(d.inputs.sample(i), d.inputs.sample(i) + 12));
    };
    collect(p.train);
    collect(p.test);
    CHECK(seen.size() == 4096);
}

TEST_CASE("bitsphere: calibrated rule hits the balance and information targets") {
    const BitSphereTask task = calibrate_bitsphere();
    CHECK(task.p_y1 >= 0.45);
    CHECK(task.p_y1 <= 0.55);
    CHECK(task.mutual_information >= 0.95);
    CHECK(task.mutual_information <= 1.0);
    CHECK(task.f_values.size() == 4096);
}

TEST_CASE("bitsphere: miscalibrated config is rejected") {
    BitSphereTaskConfig cfg;
    cfg.gamma = 1e-4;  // nearly flat sigmoid: I(X;Y) collapses
    cfg.theta = 1.0;
    CHECK_THROWS_AS(calibrate_bitsphere(cfg), ContractError);
}

TEST_CASE("bitsphere: f is invariant under the icosahedral generators") {
    const BitSphereTask task = calibrate_bitsphere();
    const auto gens = bitsphere_symmetry_generators();
    REQUIRE(gens.size() >= 2);
    for (const auto& perm : gens) {
        // perm must be a bijection on the 12 vertices.
        std::set<std::size_t> img(perm.begin(), perm.end());
        CHECK(img.size() == 12);
        for (std::size_t pat = 0; pat < 4096; ++pat) {
            std::size_t mapped = 0;
            for (std::size_t i = 0; i < 12; ++i)
                if (pat & (std::size_t{1} << i)) mapped |= std::size_t{1} << perm[i];
            CHECK(task.f_values[mapped] == doctest::Approx(task.f_values[pat]).epsilon(1e-9));
        }
    }
}

TEST_CASE("bitsphere: empirical label balance and determinism") {
    const DatasetPair a = gen_bitsphere_task({}, 5);
    const DatasetPair b = gen_bitsphere_task({}, 5);
    CHECK(a.train.inputs == b.train.inputs);
    CHECK(a.train.labels == b.train.labels);

    std::size_t ones = 0;
    for (int l : a.train.labels) ones += static_cast<std::size_t>(l);
    for (int l : a.test.labels) {}
    const double frac = static_cast<double>(ones) / static_cast<double>(a.train.size());
    CHECK(frac > 0.42);
    CHECK(frac < 0.58);
}

TEST_CASE("swap_labels flips the binary one-hot assignment and keeps inputs") {
    const DatasetPair p = gen_bitsphere_task({}, 2);
    const Dataset b = swap_labels(p.train);
    CHECK(b.inputs == p.train.inputs);
    for (std::size_t i = 0; i < b.labels.size(); ++i)
        CHECK(b.labels[i] == 1 - p.train.labels[i]);
}

TEST_CASE("idx: hand-built one-image fixture round-trips") {
    Dataset d;
    d.inputs = Tensor(Shape{1, 28, 28});  // all zeros
    d.labels = {7};
    d.num_classes = 10;
    write_idx("/tmp/rc_fix_images.idx", "/tmp/rc_fix_labels.idx", d);

    const Dataset back = load_idx("/tmp/rc_fix_images.idx", "/tmp/rc_fix_labels.idx");
    CHECK(back.size() == 1);
    CHECK(back.labels == std::vector<int>{7});
    CHECK(back.inputs.sample_shape() == Shape{28, 28});
    for (double v : back.inputs.data) CHECK(v == 0.0);
    std::remove("/tmp/rc_fix_images.idx");
    std::remove("/tmp/rc_fix_labels.idx");
}

TEST_CASE("idx: bad magic fails at offset zero") {
    std::string bad;
    for (unsigned char c : {0x00, 0x00, 0x08, 0x02}) bad.push_back(static_cast<char>(c));
    bad += std::string(16, '\0');
    write_text_file("/tmp/rc_bad.idx", bad);
    try {
        load_idx("/tmp/rc_bad.idx", "/tmp/rc_bad.idx");
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.offset == 0);
    }
    std::remove("/tmp/rc_bad.idx");
}

TEST_CASE("idx: image/label count mismatch and truncation are parse errors") {
    Dataset d;
    d.inputs = Tensor(Shape{2, 4, 4});
    d.labels = {1, 2};
    d.num_classes = 3;
    write_idx("/tmp/rc_im.idx", "/tmp/rc_lb.idx", d);

    Dataset d1;
    d1.inputs = Tensor(Shape{1, 4, 4});
    d1.labels = {1};
    d1.num_classes = 3;
    write_idx("/tmp/rc_im1.idx", "/tmp/rc_lb1.idx", d1);

    CHECK_THROWS_AS(load_idx("/tmp/rc_im.idx", "/tmp/rc_lb1.idx"), ParseError);

    // Truncated image payload.
    std::string full = read_text_file("/tmp/rc_im.idx");
    write_text_file("/tmp/rc_tr.idx", full.substr(0, full.size() - 5));
    CHECK_THROWS_AS(load_idx("/tmp/rc_tr.idx", "/tmp/rc_lb.idx"), ParseError);

    for (const char* f : {"/tmp/rc_im.idx", "/tmp/rc_lb.idx", "/tmp/rc_im1.idx",
                          "/tmp/rc_lb1.idx", "/tmp/rc_tr.idx"})
        std::remove(f);
}

TEST_CASE("select_two_digits: distinct labels, seeded, needs two classes") {
    Dataset mnist;
    mnist.inputs = Tensor(Shape{6, 4, 4});
    for (std::size_t i = 0; i < mnist.inputs.data.size(); ++i)
        mnist.inputs.data[i] = static_cast<double>(i % 7) / 7.0;
    mnist.labels = {3, 3, 1, 4, 1, 9};
    mnist.num_classes = 10;

    const Dataset two = select_two_digits(mnist, 11);
    CHECK(two.size() == 2);
    CHECK(two.labels[0] != two.labels[1]);
    const Dataset again = select_two_digits(mnist, 11);
    CHECK(two.inputs == again.inputs);

    Dataset mono = mnist;
    mono.labels = {2, 2, 2, 2, 2, 2};
    CHECK_THROWS_AS(select_two_digits(mono, 1), ContractError);
}

TEST_CASE("dataset cache: bit-exact round trip with checksum validation") {
    const DatasetPair p = gen_peak_dataset(4);
    save_dataset("/tmp/rc_cache.bin", p.train);
    const Dataset back = load_dataset("/tmp/rc_cache.bin");
    CHECK(back.inputs == p.train.inputs);
    CHECK(back.labels == p.train.labels);
    CHECK(back.num_classes == p.train.num_classes);
    CHECK(back.split == p.train.split);
    CHECK(back.provenance == p.train.provenance);

    // Corrupt one payload byte: the checksum must catch it.
    std::string raw = read_text_file("/tmp/rc_cache.bin");
    raw[raw.size() / 2] = static_cast<char>(raw[raw.size() / 2] ^ 0x40);
    write_text_file("/tmp/rc_cache.bin", raw);
    CHECK_THROWS_AS(load_dataset("/tmp/rc_cache.bin"), ParseError);
    std::remove("/tmp/rc_cache.bin");
}

TEST_CASE("pattern_ids: distinct rows get distinct ids in first-seen order") {
    Tensor t(Shape{4, 2}, {0, 0, 1, 0, 0, 0, 1, 1});
    const auto ids = pattern_ids(t);
    CHECK(ids == std::vector<int>{0, 1, 0, 2});
}
