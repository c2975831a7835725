// anisochill <experiment> --config <file> [--out DIR] [--seed N] [--threads N]
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "experiments.hpp"

int main(int argc, char** argv) {
    using namespace anisochill;
    CLI::App app{"Nonlocal-to-local anisotropic Cahn-Hilliard experiments"};
    std::string experiment, config_path, out_dir;
    std::int64_t seed = -1;
    int threads = 1;
    app.add_option("experiment", experiment, "MOMENTS | GAMMA | SIMULATE | NL2L_SWEEP | EHRLING_PROBE");
    app.add_option("--config", config_path, "flat key = value config file");
    app.add_option("--out", out_dir, "output directory (overrides output_dir)");
    app.add_option("--seed", seed, "seed (overrides seed)")->check(CLI::NonNegativeNumber);
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    bool list_keys = false;
    app.add_flag("--list-keys", list_keys, "print the documented config keys and exit");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (list_keys) {
        for (const auto& [key, help] : harness::config_keys()) std::cout << key << "  " << help << "\n";
        return 0;
    }
    if (experiment.empty() || config_path.empty()) {
        std::cerr << "error: an experiment and --config are required (see --help)\n";
        return 2;
    }
    try {
        harness::ExperimentConfig cfg = harness::load_config(config_path);
        cfg.experiment = harness::parse_experiment(experiment);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.validate();
        const auto outcome = harness::run(cfg, threads);
        for (const auto& c : outcome.checks)
            std::cout << (c.ok ? "ok   " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
        for (const auto& f : outcome.files) std::cout << "wrote " << f << "\n";
        if (!outcome.message.empty()) std::cerr << "error: " << outcome.message << "\n";
        return outcome.exit_code;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
