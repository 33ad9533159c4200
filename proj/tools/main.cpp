#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bgrid/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Finite-difference Bellman solver and estimate workbench"};
    app.set_version_flag("--version",
                         std::string(bgrid::kToolName) + " " + bgrid::kToolVersion);

    std::string config_path, out_dir = "out";
    std::uint64_t seed = 0;
    int threads = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "Experiment config (json)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory (created if missing)");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
    app.add_option("--threads", threads, "Worker threads, 0 = auto");
    app.add_flag("--quiet", quiet, "Suppress the progress line");
    CLI11_PARSE(app, argc, argv);

    std::ifstream in(config_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    auto cfg = bgrid::parse_config(ss.str());
    if (!cfg) {
        std::cerr << "config error: " << cfg.error() << "\n";
        return bgrid::exit_bad_config;
    }

    bgrid::RunOptions opt;
    opt.out_dir = out_dir;
    opt.threads = threads;
    opt.quiet = quiet;
    if (seed_opt->count() > 0)
        opt.seed = seed;
    else
        opt.seed = cfg->value("seed", std::uint64_t{1});

    try {
        return bgrid::run_experiment(*cfg, opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return bgrid::exit_bad_config;
    }
}
