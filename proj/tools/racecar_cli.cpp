// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.
//
// Experiment driver: runs the desk-scale studies (peak, mnist2, mi,
// gradcheck) over model variants and seeds, and compares summary files.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "racecar/errors.hpp"
#include "racecar/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"racecar training experiments"};
    app.require_subcommand(1);

    std::string config_path, out_override, seeds_override;
    CLI::App* run = app.add_subcommand("run", "run every (model, seed) combination of a config");
    run->add_option("config", config_path, "experiment config file (key = value lines)")
        ->required();
    run->add_option("--out", out_override, "override the output directory");
    run->add_option("--seeds", seeds_override, "override the seed list, e.g. 0..4 or 1,3");

    std::string summary_a, summary_b;
    CLI::App* cmp = app.add_subcommand("compare", "compare two summary.csv files");
    cmp->add_option("a", summary_a, "first summary.csv")->required();
    cmp->add_option("b", summary_b, "second summary.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            racecar::ExperimentConfig cfg;
            try {
                cfg = racecar::parse_experiment_config(config_path);
                if (!out_override.empty()) cfg.out_dir = out_override;
                if (!seeds_override.empty()) {
                    // Reuse the config parser for the seed syntax.
                    racecar::ExperimentConfig tmp = racecar::parse_experiment_config_text(
                        "experiment = " + cfg.experiment + "\nseeds = " + seeds_override + "\n");
                    cfg.seeds = tmp.seeds;
                }
            } catch (const racecar::ParseError& e) {
                std::fprintf(stderr, "config error: %s\n", e.what());
                return 2;
            }
            return racecar::run_experiment(cfg);
        }
        if (cmp->parsed()) {
            try {
                racecar::compare_summaries(summary_a, summary_b, std::cout);
            } catch (const racecar::ContractError& e) {
                std::fprintf(stderr, "compare error: %s\n", e.what());
                return 2;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
