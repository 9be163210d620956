// pskf: run Monte Carlo experiments, analyze stability, and solve thresholds.
//
//   pskf simulate <config.json> [--out DIR] [--trials N] [--seed S]
//   pskf analyze  <config.json> [--out DIR]
//   pskf solve-threshold --beta B --lambda L
//
// PSKF_WORKERS sets the number of simulation threads.

#include <pskf/experiment.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

struct Overrides {
    std::optional<std::string> out;
    std::optional<long> trials;
    std::optional<std::uint64_t> seed;
};

int report(const pskf::RunResult& res) {
    for (const auto& m : res.messages) std::cerr << m << '\n';
    for (const auto& p : res.written) std::cout << "wrote " << p.string() << '\n';
    return res.exit_code;
}

template <class Run>
int with_config(const std::string& path, const Overrides& ov, Run run) {
    pskf::io::json doc;
    try {
        doc = pskf::read_json_file(path);
    } catch (const pskf::ConfigReadError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pskf::exit_code::unreadable;
    }
    pskf::ExperimentConfig cfg;
    try {
        cfg = pskf::config_from_json(doc);
    } catch (const std::exception& e) {
        std::cerr << "validation failed: " << e.what() << '\n';
        return pskf::exit_code::invalid;
    }
    if (ov.out) cfg.output.dir = *ov.out;
    if (ov.trials) cfg.trials = *ov.trials;
    if (ov.seed) cfg.master_seed = *ov.seed;
    return run(cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-scheduled sequential Kalman filter: simulation and stability analysis"};
    app.require_subcommand(1);

    std::string sim_config;
    Overrides sim_ov;
    auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo experiment described by a config file");
    sim->add_option("config", sim_config, "Experiment config (JSON)")->required();
    sim->add_option("--out", sim_ov.out, "Output directory (created if missing)");
    sim->add_option("--trials", sim_ov.trials, "Override the number of trials");
    sim->add_option("--seed", sim_ov.seed, "Override the master seed");

    std::string ana_config;
    Overrides ana_ov;
    auto* ana = app.add_subcommand("analyze", "Fixed point and stability conditions for a config file");
    ana->add_option("config", ana_config, "Experiment config (JSON)")->required();
    ana->add_option("--out", ana_ov.out, "Output directory (created if missing)");

    double beta = 0.0, lambda = 0.0;
    auto* solve = app.add_subcommand("solve-threshold", "Threshold eta that yields a target lambda");
    solve->add_option("--beta", beta, "Low-power delivery probability")->required();
    solve->add_option("--lambda", lambda, "Target lambda in (beta, 1]")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            return with_config(sim_config, sim_ov, [](const pskf::ExperimentConfig& c) { return report(pskf::run_simulate(c)); });
        }
        if (*ana) {
            return with_config(ana_config, ana_ov, [](const pskf::ExperimentConfig& c) { return report(pskf::run_analyze(c)); });
        }
        if (*solve) {
            double eta = 0.0;
            try {
                eta = pskf::solve_eta_for_lambda(lambda, beta);
            } catch (const std::exception& e) {
                std::cerr << "validation failed: " << e.what() << '\n';
                return pskf::exit_code::invalid;
            }
            const auto st = pskf::component_stats(eta, beta);
            std::printf("eta=%.17g\nlambda=%.17g\nmu=%.17g\nnu=%.17g\n", eta, st.lambda, st.mu, st.nu);
            return pskf::exit_code::ok;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pskf::exit_code::invalid;
    }
    return pskf::exit_code::ok;
}
