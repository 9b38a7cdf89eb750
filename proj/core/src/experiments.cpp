// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "racecar/errors.hpp"
#include "racecar/io.hpp"
#include "racecar/reverse.hpp"
#include "racecar/rng.hpp"

namespace fs = std::filesystem;

namespace racecar {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t c = s.find(',', pos);
        if (c == std::string::npos) c = s.size();
        const std::string item = trim(s.substr(pos, c - pos));
        if (!item.empty()) out.push_back(item);
        pos = c + 1;
    }
    return out;
}

[[noreturn]] void config_fail(std::size_t line, const std::string& why) {
    throw ParseError("config line " + std::to_string(line) + ": " + why,
                     static_cast<long>(line));
}

double parse_real(const std::string& v, std::size_t line) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) config_fail(line, "bad number '" + v + "'");
        return x;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        config_fail(line, "bad number '" + v + "'");
    }
}

std::size_t parse_count(const std::string& v, std::size_t line) {
    const double x = parse_real(v, line);
    if (x < 0 || x != std::floor(x)) config_fail(line, "expected a non-negative integer");
    return static_cast<std::size_t>(x);
}

std::vector<int> parse_seeds(const std::string& v, std::size_t line) {
    std::vector<int> out;
    const std::size_t dots = v.find("..");
    if (dots != std::string::npos) {
        const int lo = static_cast<int>(parse_real(trim(v.substr(0, dots)), line));
        const int hi = static_cast<int>(parse_real(trim(v.substr(dots + 2)), line));
        if (hi < lo) config_fail(line, "seed range is empty");
        for (int s = lo; s <= hi; ++s) out.push_back(s);
        return out;
    }
    for (const auto& item : split_list(v)) out.push_back(static_cast<int>(parse_real(item, line)));
    if (out.empty()) config_fail(line, "no seeds given");
    return out;
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text) {
    ExperimentConfig cfg;
    cfg.models = {"std", "rr"};
    cfg.seeds = {0, 1, 2, 3, 4};

    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    bool saw_experiment = false;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) config_fail(line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty()) config_fail(line_no, "empty value for '" + key + "'");

        if (key == "experiment") {
            if (value != "peak" && value != "mnist2" && value != "mi" && value != "gradcheck")
                config_fail(line_no, "unknown experiment '" + value + "'");
            cfg.experiment = value;
            saw_experiment = true;
        } else if (key == "model") {
            cfg.models = split_list(value);
            for (const auto& m : cfg.models) {
                if (m != "std" && m != "ort" && m != "srip" && m != "rr" && m != "rr1" &&
                    m != "lrr")
                    config_fail(line_no, "unknown model '" + m + "'");
            }
        } else if (key == "seeds") {
            cfg.seeds = parse_seeds(value, line_no);
        } else if (key == "out") {
            cfg.out_dir = value;
        } else if (key == "epochs") {
            cfg.epochs = parse_count(value, line_no);
        } else if (key == "finetune_epochs") {
            cfg.finetune_epochs = parse_count(value, line_no);
        } else if (key == "lr") {
            cfg.lr = parse_real(value, line_no);
        } else if (key == "lambda") {
            cfg.lambda = parse_real(value, line_no);
        } else if (key == "batch_size") {
            cfg.batch_size = parse_count(value, line_no);
        } else if (key == "optimizer") {
            if (value != "adam" && value != "sgd")
                config_fail(line_no, "optimizer must be adam or sgd");
            cfg.optimizer = value;
        } else if (key == "ortho_weight") {
            cfg.ortho_weight = parse_real(value, line_no);
        } else if (key == "srip_beta") {
            cfg.srip_beta = parse_real(value, line_no);
        } else if (key == "bins") {
            cfg.bins = parse_count(value, line_no);
        } else if (key == "mnist_images") {
            cfg.mnist_images = value;
        } else if (key == "mnist_labels") {
            cfg.mnist_labels = value;
        } else if (key == "threads") {
            cfg.threads = parse_count(value, line_no);
        } else {
            config_fail(line_no, "unknown key '" + key + "'");
        }
    }
    if (!saw_experiment) throw ParseError("config: missing required key 'experiment'", 0);
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
    return parse_experiment_config_text(read_text_file(path));
}

ResolvedSettings resolve_settings(const ExperimentConfig& cfg) {
    ResolvedSettings s;
    if (cfg.experiment == "peak") {
        s.epochs = 5000;
        s.lr = 1e-4;
        s.lambda = 1e-6;
        s.batch_size = 10;
    } else if (cfg.experiment == "mnist2") {
        s.epochs = 1000;
        s.lr = 1e-4;
        s.lambda = 1e-5;
        s.batch_size = 2;
    } else if (cfg.experiment == "mi") {
        s.epochs = 600;
        s.finetune_epochs = 150;
        s.lr = 1e-3;
        s.lambda = 0.1;
        s.batch_size = 256;
    } else {  // gradcheck
        s.epochs = 0;
        s.lr = 1e-4;
        s.lambda = 1e-2;
        s.batch_size = 16;
    }
    s.ortho_weight = 1e-4;
    s.srip_beta = 1e-2;
    s.bins = 30;

    if (cfg.epochs) s.epochs = cfg.epochs;
    if (cfg.finetune_epochs) s.finetune_epochs = cfg.finetune_epochs;
    if (cfg.lr > 0) s.lr = cfg.lr;
    if (cfg.lambda > 0) s.lambda = cfg.lambda;
    if (cfg.batch_size) s.batch_size = cfg.batch_size;
    if (cfg.ortho_weight > 0) s.ortho_weight = cfg.ortho_weight;
    if (cfg.srip_beta > 0) s.srip_beta = cfg.srip_beta;
    if (cfg.bins) s.bins = cfg.bins;
    if (cfg.optimizer == "sgd") s.optimizer = OptimizerKind::Sgd;
    return s;
}

TrainConfig model_train_config(const std::string& model, const ResolvedSettings& s,
                               std::uint64_t seed) {
    TrainConfig c;
    c.epochs = s.epochs;
    c.batch_size = s.batch_size;
    c.learning_rate = s.lr;
    c.optimizer = s.optimizer;
    c.seed = seed;
    c.log_every = std::max<std::size_t>(1, s.epochs / 10);
    if (model == "std") {
        // base loss only
    } else if (model == "ort") {
        c.ortho = OrthoMode::Soft;
        c.ortho_weight = s.ortho_weight;
    } else if (model == "srip") {
        c.ortho = OrthoMode::Srip;
        c.ortho_weight = s.srip_beta;
    } else if (model == "rr") {
        c.racecar = RacecarConfig::all_layers(s.lambda, ReversePlan::Variant::Full);
    } else if (model == "rr1") {
        c.racecar = RacecarConfig::input_only(s.lambda);
    } else if (model == "lrr") {
        c.racecar = RacecarConfig::all_layers(s.lambda, ReversePlan::Variant::Layerwise);
    } else {
        throw ContractError("unknown model '" + model + "'");
    }
    return c;
}

std::vector<LayerSpec> svd_test_net() { return {LayerSpec::dense(2, false)}; }

std::vector<LayerSpec> bitsphere_net() {
    std::vector<LayerSpec> net;
    for (std::size_t width : {10u, 7u, 5u, 4u, 3u}) {
        net.push_back(LayerSpec::dense(width, true));
        net.push_back(LayerSpec::activation(Act::Tanh));
    }
    net.push_back(LayerSpec::dense(2, true));
    return net;
}

Dataset mnist_fixture() {
    Dataset d;
    d.inputs = Tensor(Shape{2, 28, 28});
    // A ring for "0".
    for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
            const double dist = std::sqrt((r - 14.0) * (r - 14.0) + (c - 14.0) * (c - 14.0));
            d.inputs.sample(0)[r * 28 + c] =
                std::exp(-(dist - 8.0) * (dist - 8.0) / (2.0 * 1.5 * 1.5));
        }
    // A top bar plus diagonal stroke for "7".
    auto put = [&](int r, int c, double v) {
        if (r >= 0 && r < 28 && c >= 0 && c < 28) {
            double& px = d.inputs.sample(1)[r * 28 + c];
            px = std::max(px, v);
        }
    };
    for (int c = 6; c <= 21; ++c)
        for (int w = -1; w <= 1; ++w) put(5 + w, c, w == 0 ? 1.0 : 0.6);
    for (int t = 0; t <= 16; ++t) {
        const int r = 6 + t;
        const int c = 21 - t / 2 - t / 4;
        for (int w = -1; w <= 1; ++w) put(r, c + w, w == 0 ? 1.0 : 0.6);
    }
    d.labels = {0, 7};
    d.num_classes = 10;
    d.split = "train";
    d.provenance = "builtin two-image fixture";
    return d;
}

namespace {

std::uint64_t mix_seed(int seed, std::uint64_t salt) {
    std::uint64_t z = static_cast<std::uint64_t>(seed) + salt * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    return z ^ (z >> 31);
}

double top2_similarity(FeatureReport& report,
                       const std::vector<std::vector<double>>& exemplars) {
    score_features(report, exemplars);
    const std::size_t k = std::min<std::size_t>(2, report.similarity.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += report.similarity[i];
    return k ? sum / static_cast<double>(k) : 0.0;
}

}  // namespace

PeakRun run_peak_model(const std::string& model, int seed, const ResolvedSettings& s) {
    const DatasetPair data = gen_peak_dataset(static_cast<std::uint64_t>(seed));
    Network net = build_network(svd_test_net(), {28, 28}, mix_seed(seed, 11));
    TrainConfig cfg = model_train_config(model, s, static_cast<std::uint64_t>(seed));
    TrainResult r = train(net, data.train, &data.test, cfg);

    PeakRun out;
    out.net = std::move(r.net);
    out.log = std::move(r.log);
    out.features = extract_features(out.net, 1);
    out.similarity_top2 = top2_similarity(out.features, peak_templates());
    return out;
}

Mnist2Run run_mnist2_model(const std::string& model, int seed, const ResolvedSettings& s,
                           const Dataset& two_digit_train) {
    Mnist2Run out;
    // Remap the two (distinct) source labels onto classes 0/1.
    Dataset pair = two_digit_train;
    const int first = pair.labels[0];
    for (int& l : pair.labels) l = (l == first) ? 0 : 1;
    pair.num_classes = 2;
    for (std::size_t i = 0; i < pair.size(); ++i)
        out.exemplars.emplace_back(pair.inputs.sample(i),
                                   pair.inputs.sample(i) + pair.inputs.sample_numel());

    // The training set holds only the two distinct images, cycled so that an
    // epoch is 50 passes over the pair. Repetition leaves the loss and its
    // optimum untouched; Adam's second moment needs the extra steps to hand
    // the small reconstruction gradients their full step size.
    const std::size_t repeats = 50;
    Dataset cycled;
    Shape shape{pair.size() * repeats};
    const Shape sample = pair.inputs.sample_shape();
    shape.insert(shape.end(), sample.begin(), sample.end());
    cycled.inputs = Tensor(shape);
    cycled.labels.resize(pair.size() * repeats);
    for (std::size_t i = 0; i < cycled.labels.size(); ++i) {
        const std::size_t src = i % pair.size();
        std::copy(pair.inputs.sample(src), pair.inputs.sample(src) + pair.inputs.sample_numel(),
                  cycled.inputs.sample(i));
        cycled.labels[i] = pair.labels[src];
    }
    cycled.num_classes = pair.num_classes;
    cycled.split = pair.split;
    cycled.provenance = pair.provenance + " x" + std::to_string(repeats);

    Network net = build_network(svd_test_net(), pair.inputs.sample_shape(), mix_seed(seed, 13));
    TrainConfig cfg = model_train_config(model, s, static_cast<std::uint64_t>(seed));
    TrainResult r = train(net, cycled, nullptr, cfg);

    out.net = std::move(r.net);
    out.log = std::move(r.log);
    out.features = extract_features(out.net, 1);
    out.similarity_top2 = top2_similarity(out.features, out.exemplars);
    return out;
}

MiRun run_mi_model(const std::string& model, int seed, const ResolvedSettings& s) {
    const DatasetPair data = gen_bitsphere_task({}, static_cast<std::uint64_t>(seed));
    Network net = build_network(bitsphere_net(), {12}, mix_seed(seed, 17));

    TrainConfig cfg = model_train_config(model, s, static_cast<std::uint64_t>(seed));
    TrainResult phase1 = train(net, data.train, &data.test, cfg);

    MiRun out;
    out.phase1 = std::move(phase1.net);
    out.log_phase1 = std::move(phase1.log);
    out.phase1_test_acc = out.log_phase1.rows.back().test_acc;

    out.plane = mi_plane(out.phase1, data.train, s.bins);
    out.min_ix = out.plane.front().i_x;
    out.min_iy = out.plane.front().i_y;
    for (const auto& p : out.plane) {
        out.min_ix = std::min(out.min_ix, p.i_x);
        out.min_iy = std::min(out.min_iy, p.i_y);
    }

    TrainConfig ft;
    ft.epochs = s.finetune_epochs;
    ft.batch_size = s.batch_size;
    ft.learning_rate = s.lr;
    ft.optimizer = s.optimizer;
    ft.log_every = std::max<std::size_t>(1, s.finetune_epochs / 5);

    ft.seed = mix_seed(seed, 19);
    TrainResult aa = finetune(out.phase1, data.train, &data.test, ft);
    out.log_aa = std::move(aa.log);
    out.aa_test_acc = out.log_aa.rows.back().test_acc;

    const Dataset btrain = swap_labels(data.train);
    const Dataset btest = swap_labels(data.test);
    ft.seed = mix_seed(seed, 23);
    TrainResult ab = finetune(out.phase1, btrain, &btest, ft);
    out.log_ab = std::move(ab.log);
    out.ab_test_acc = out.log_ab.rows.back().test_acc;
    return out;
}

namespace {

struct SummaryTable {
    // metric -> seed -> value
    std::map<std::string, std::map<int, double>> cells;
    std::mutex mu;

    void put(const std::string& metric, int seed, double value) {
        std::lock_guard<std::mutex> lock(mu);
        cells[metric][seed] = value;
    }

    std::string to_csv(const std::vector<int>& seeds) const {
        std::vector<std::string> header = {"metric", "mean", "stddev"};
        for (int s : seeds) header.push_back("s" + std::to_string(s));
        std::string out = csv_row(header);
        for (const auto& [metric, by_seed] : cells) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& [seed, v] : by_seed) {
                sum += v;
                ++n;
            }
            const double mean = n ? sum / static_cast<double>(n) : 0.0;
            double var = 0.0;
            for (const auto& [seed, v] : by_seed) var += (v - mean) * (v - mean);
            const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
            std::vector<std::string> row = {metric, format_double(mean), format_double(sd)};
            for (int s : seeds) {
                auto it = by_seed.find(s);
                row.push_back(it == by_seed.end() ? "" : format_double(it->second));
            }
            out += csv_row(row);
        }
        return out;
    }
};

std::string pgm_name(std::size_t layer, std::size_t k, double sigma) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "layer%zu_sv%zu_sigma%.4e.pgm", layer, k, sigma);
    return buf;
}

void dump_features(const std::string& dir, const FeatureReport& report, const Shape& geometry) {
    fs::create_directories(dir);
    const std::size_t h = geometry.size() == 2 ? geometry[0] : 1;
    const std::size_t w = geometry.size() == 2 ? geometry[1]
                                               : report.right_singular_vectors.front().size();
    for (std::size_t k = 0; k < report.right_singular_vectors.size(); ++k) {
        write_pgm(dir + "/" + pgm_name(report.layer_index, k + 1, report.sigma[k]),
                  report.right_singular_vectors[k], h, w);
    }
}

std::string miplane_csv(const std::vector<MIPlanePoint>& plane, const std::string& model,
                        int seed) {
    std::string out = "layer,i_x_bits,i_y_bits,model,seed\n";
    for (const auto& p : plane) {
        out += csv_row({std::to_string(p.layer_index), format_double(p.i_x),
                        format_double(p.i_y), model, std::to_string(seed)});
    }
    return out;
}

void run_jobs(std::size_t threads, std::size_t count,
              const std::function<void(std::size_t)>& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::exception_ptr first_error;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t dataset_checksum(const Dataset& d) {
    std::uint64_t h = fnv1a(d.inputs.data.data(), d.inputs.data.size() * sizeof(double));
    if (!d.labels.empty()) h = fnv1a(d.labels.data(), d.labels.size() * sizeof(int), h);
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
    const ResolvedSettings s = resolve_settings(cfg);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    if (cfg.experiment == "peak" || cfg.experiment == "mnist2")
        fs::create_directories(out / "features");

    std::ostringstream manifest;
    manifest << "library_version = " << kLibraryVersion << "\n";
    manifest << "experiment = " << cfg.experiment << "\n";
    manifest << "models =";
    for (const auto& m : cfg.models) manifest << " " << m;
    manifest << "\nseeds =";
    for (int sd : cfg.seeds) manifest << " " << sd;
    manifest << "\nepochs = " << s.epochs << "\nfinetune_epochs = " << s.finetune_epochs
             << "\nlr = " << format_double(s.lr) << "\nlambda = " << format_double(s.lambda)
             << "\nbatch_size = " << s.batch_size << "\noptimizer = "
             << (s.optimizer == OptimizerKind::Adam ? "adam" : "sgd")
             << "\northo_weight = " << format_double(s.ortho_weight)
             << "\nsrip_beta = " << format_double(s.srip_beta) << "\nbins = " << s.bins << "\n";

    SummaryTable summary;
    std::mutex manifest_mu;

    try {
        if (cfg.experiment == "gradcheck") {
            // One verification run per seed; models do not apply here.
            for (int seed : cfg.seeds) {
                Network net = build_network(
                    {LayerSpec::dense(6), LayerSpec::batch_norm(),
                     LayerSpec::activation(Act::Tanh), LayerSpec::dense(4),
                     LayerSpec::batch_norm(), LayerSpec::activation(Act::Tanh),
                     LayerSpec::dense(2)},
                    {8}, mix_seed(seed, 29));
                Rng rng(mix_seed(seed, 31));
                Tensor x(Shape{s.batch_size, 8});
                for (double& v : x.data) v = rng.uniform(-1, 1);
                std::vector<int> labels(s.batch_size);
                for (auto& l : labels) l = static_cast<int>(rng.uniform_index(2));
                forward(net, x, {.training = true, .update_running_stats = true});

                TrainConfig tc;
                tc.racecar = RacecarConfig::all_layers(s.lambda);
                const double err =
                    finite_diff_check(net, make_training_loss_probe(tc, x, labels), 1e-5);
                summary.put("gradcheck.max_rel_error", seed, err);
            }
        } else if (cfg.experiment == "mnist2") {
            Dataset source;
            bool used_fixture = false;
            if (!cfg.mnist_images.empty()) {
                source = load_idx(cfg.mnist_images, cfg.mnist_labels);
            } else {
                source = mnist_fixture();
                used_fixture = true;
            }
            {
                std::lock_guard<std::mutex> lock(manifest_mu);
                manifest << "mnist_source = "
                         << (used_fixture ? "builtin-fixture" : cfg.mnist_images) << "\n";
                manifest << "mnist_images_count = " << source.size() << "\n";
                manifest << "mnist_checksum = " << hex64(dataset_checksum(source)) << "\n";
            }
            std::vector<std::pair<std::string, int>> jobs;
            for (const auto& m : cfg.models)
                for (int seed : cfg.seeds) jobs.emplace_back(m, seed);
            run_jobs(cfg.threads, jobs.size(), [&](std::size_t j) {
                const auto& [model, seed] = jobs[j];
                const Dataset two = select_two_digits(source, static_cast<std::uint64_t>(seed));
                Mnist2Run run = run_mnist2_model(model, seed, s, two);
                const std::string tag = model + "_" + std::to_string(seed);
                write_text_file((out / ("metrics_" + tag + ".csv")).string(),
                                run.log.to_csv());
                dump_features((out / "features" / tag).string(), run.features,
                              {28, 28});
                summary.put(model + ".similarity_top2", seed, run.similarity_top2);
                summary.put(model + ".final_train_acc", seed, run.log.rows.back().train_acc);
                summary.put(model + ".final_base_loss", seed, run.log.rows.back().base_loss);
            });
        } else if (cfg.experiment == "peak") {
            {
                const DatasetPair probe = gen_peak_dataset(cfg.seeds.empty() ? 0 : cfg.seeds[0]);
                std::lock_guard<std::mutex> lock(manifest_mu);
                manifest << "data_checksum_seed" << (cfg.seeds.empty() ? 0 : cfg.seeds[0])
                         << " = " << hex64(dataset_checksum(probe.train)) << "\n";
            }
            std::vector<std::pair<std::string, int>> jobs;
            for (const auto& m : cfg.models)
                for (int seed : cfg.seeds) jobs.emplace_back(m, seed);
            run_jobs(cfg.threads, jobs.size(), [&](std::size_t j) {
                const auto& [model, seed] = jobs[j];
                PeakRun run = run_peak_model(model, seed, s);
                const std::string tag = model + "_" + std::to_string(seed);
                write_text_file((out / ("metrics_" + tag + ".csv")).string(),
                                run.log.to_csv());
                dump_features((out / "features" / tag).string(), run.features, {28, 28});
                summary.put(model + ".similarity_top2", seed, run.similarity_top2);
                summary.put(model + ".final_test_acc", seed, run.log.rows.back().test_acc);
                summary.put(model + ".final_train_acc", seed, run.log.rows.back().train_acc);
                summary.put(model + ".final_reg_loss", seed, run.log.rows.back().reg_loss);
            });
        } else {  // mi
            std::vector<std::pair<std::string, int>> jobs;
            for (const auto& m : cfg.models)
                for (int seed : cfg.seeds) jobs.emplace_back(m, seed);
            run_jobs(cfg.threads, jobs.size(), [&](std::size_t j) {
                const auto& [model, seed] = jobs[j];
                MiRun run = run_mi_model(model, seed, s);
                const std::string tag = model + "_" + std::to_string(seed);
                write_text_file((out / ("metrics_" + tag + ".csv")).string(),
                                run.log_phase1.to_csv());
                write_text_file((out / ("metrics_" + model + "_aa_" + std::to_string(seed) +
                                        ".csv")).string(),
                                run.log_aa.to_csv());
                write_text_file((out / ("metrics_" + model + "_ab_" + std::to_string(seed) +
                                        ".csv")).string(),
                                run.log_ab.to_csv());
                write_text_file((out / ("miplane_" + tag + ".csv")).string(),
                                miplane_csv(run.plane, model, seed));
                summary.put(model + ".final_test_acc", seed, run.phase1_test_acc);
                summary.put(model + ".aa_test_acc", seed, run.aa_test_acc);
                summary.put(model + ".ab_test_acc", seed, run.ab_test_acc);
                summary.put(model + ".min_ix", seed, run.min_ix);
                summary.put(model + ".min_iy", seed, run.min_iy);
            });
            {
                const DatasetPair probe =
                    gen_bitsphere_task({}, cfg.seeds.empty() ? 0 : cfg.seeds[0]);
                std::lock_guard<std::mutex> lock(manifest_mu);
                manifest << "data_checksum_seed" << (cfg.seeds.empty() ? 0 : cfg.seeds[0])
                         << " = " << hex64(dataset_checksum(probe.train)) << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "experiment '%s' failed: %s\n", cfg.experiment.c_str(), e.what());
        return 1;
    }

    write_text_file((out / "summary.csv").string(), summary.to_csv(cfg.seeds));
    write_text_file((out / "manifest.txt").string(), manifest.str());
    return 0;
}

namespace {

struct ParsedSummary {
    std::vector<std::string> header;
    std::map<std::string, std::vector<std::string>> rows;  // metric -> remaining cells
};

ParsedSummary parse_summary(const std::string& path) {
    ParsedSummary ps;
    std::istringstream in(read_text_file(path));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t c = line.find(',', pos);
            if (c == std::string::npos) c = line.size();
            cells.push_back(line.substr(pos, c - pos));
            pos = c + 1;
        }
        if (first) {
            ps.header = cells;
            first = false;
        } else if (!cells.empty()) {
            ps.rows[cells[0]] = std::vector<std::string>(cells.begin() + 1, cells.end());
        }
    }
    return ps;
}

}  // namespace

void compare_summaries(const std::string& summary_a_path, const std::string& summary_b_path,
                       std::ostream& os) {
    const ParsedSummary a = parse_summary(summary_a_path);
    const ParsedSummary b = parse_summary(summary_b_path);
    if (a.header != b.header)
        throw ContractError("compare: summaries do not share metric columns");
    if (a.header.size() < 3) throw ContractError("compare: malformed summary header");

    os << "comparison of\n  A: " << summary_a_path << "\n  B: " << summary_b_path << "\n\n";
    const std::size_t seed_cols = a.header.size() - 3;
    for (const auto& [metric, cells_a] : a.rows) {
        auto it = b.rows.find(metric);
        if (it == b.rows.end()) {
            os << metric << ": only in A\n";
            continue;
        }
        const auto& cells_b = it->second;
        const double mean_a = std::stod(cells_a[0]);
        const double mean_b = std::stod(cells_b[0]);
        int wins_a = 0, wins_b = 0, ties = 0, both = 0;
        for (std::size_t k = 0; k < seed_cols; ++k) {
            const std::string& va = cells_a[2 + k];
            const std::string& vb = cells_b[2 + k];
            if (va.empty() || vb.empty()) continue;
            ++both;
            const double xa = std::stod(va), xb = std::stod(vb);
            if (xa > xb)
                ++wins_a;
            else if (xb > xa)
                ++wins_b;
            else
                ++ties;
        }
        os << metric << ": mean A=" << format_double(mean_a) << " B=" << format_double(mean_b)
           << " diff=" << format_double(mean_a - mean_b);
        if (both > 0)
            os << "  per-seed wins A:" << wins_a << " B:" << wins_b << " ties:" << ties;
        os << "\n";
    }
    for (const auto& [metric, cells_b] : b.rows) {
        if (a.rows.find(metric) == a.rows.end()) os << metric << ": only in B\n";
    }
}

}  // namespace racecar
