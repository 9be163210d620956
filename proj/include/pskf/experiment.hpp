// Experiment configuration and the simulate / analyze pipelines behind the
// command-line tool.
//
// Config document:
//   {
//     "system":    {"A": ..., "C": ..., "Q": ..., "R": ..., "x0_mean": ..., "P0": ...},
//     "scheduler": {"beta": 0.5, "delta_high": 1, "delta_low": 0.1,
//                   "components": [{"eta": 1.0}, {"lambda_target": 0.6}]},
//     "horizon": 200, "trials": 1000, "master_seed": 1,
//     "analysis":  {"mare_iterate": true, "necessary": true, "sufficient": true,
//                   "tol": 1e-9, "max_iter": 100000},
//     "output":    {"dir": "out", "csv": "summary.csv", "summary_json": "summary.json",
//                   "report": "mare_report.json", "effective_config": "effective_config.json",
//                   "full_matrices": false}
//   }
#pragma once

#include "io.hpp"
#include "mare.hpp"
#include "sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pskf {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int unreadable = 1;
inline constexpr int invalid = 2;
inline constexpr int truncated = 3;
}  // namespace exit_code

/// File missing, unreadable, or not valid JSON.
class ConfigReadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ThresholdSpec {
    std::optional<double> eta;
    std::optional<double> lambda_target;
};

struct AnalysisFlags {
    bool mare_iterate = true;
    bool necessary = true;
    bool sufficient = true;
    double tol = 1e-9;
    long max_iter = 100000;
};

struct OutputPaths {
    std::filesystem::path dir = "out";
    std::string csv = "summary.csv";
    std::string summary_json = "summary.json";
    std::string report = "mare_report.json";
    std::string effective_config = "effective_config.json";
    bool full_matrices = false;
};

struct ExperimentConfig {
    LinearSystem system;
    double beta = 0.5;
    double delta_high = 1.0;
    double delta_low = 0.1;
    std::vector<ThresholdSpec> components;
    long horizon = 200;
    long trials = 1000;
    std::uint64_t master_seed = 0;
    AnalysisFlags analysis;
    OutputPaths output;

    /// Thresholds with every lambda_target solved for eta.
    SchedulerConfig scheduler() const {
        SchedulerConfig cfg;
        cfg.beta = beta;
        cfg.delta_high = delta_high;
        cfg.delta_low = delta_low;
        for (std::size_t i = 0; i < components.size(); ++i) {
            const auto& c = components[i];
            if (c.eta.has_value() == c.lambda_target.has_value())
                throw std::invalid_argument("scheduler.components[" + std::to_string(i) +
                                            "]: give exactly one of 'eta' or 'lambda_target'");
            cfg.eta.push_back(c.eta ? *c.eta : solve_eta_for_lambda(*c.lambda_target, beta));
        }
        return cfg;
    }

    IterationOptions iteration_options() const {
        IterationOptions it;
        it.tol = analysis.tol;
        it.max_iter = analysis.max_iter;
        return it;
    }
};

namespace detail {

template <class T>
T get_or(const io::json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const io::json::exception&) {
        throw io::SchemaError(std::string("config: key '") + key + "' has the wrong type");
    }
}

}  // namespace detail

inline io::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigReadError("cannot open config file '" + path.string() + "'");
    try {
        return io::json::parse(in);
    } catch (const io::json::parse_error& e) {
        throw ConfigReadError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

inline ExperimentConfig config_from_json(const io::json& j) {
    if (!j.is_object()) throw io::SchemaError("config: top level must be an object");
    ExperimentConfig cfg;
    cfg.system = io::system_from_json(io::require_key(j, "system", "config"));

    const auto& sch = io::require_key(j, "scheduler", "config");
    cfg.beta = io::number_from(io::require_key(sch, "beta", "scheduler"), "scheduler.beta");
    cfg.delta_high = detail::get_or(sch, "delta_high", cfg.delta_high);
    cfg.delta_low = detail::get_or(sch, "delta_low", cfg.delta_low);
    const auto& comps = io::require_key(sch, "components", "scheduler");
    if (!comps.is_array()) throw io::SchemaError("scheduler.components: expected an array");
    for (const auto& c : comps) {
        ThresholdSpec t;
        if (c.contains("eta")) t.eta = io::number_from(c.at("eta"), "eta");
        if (c.contains("lambda_target")) t.lambda_target = io::number_from(c.at("lambda_target"), "lambda_target");
        cfg.components.push_back(t);
    }

    cfg.horizon = detail::get_or(j, "horizon", cfg.horizon);
    cfg.trials = detail::get_or(j, "trials", cfg.trials);
    cfg.master_seed = detail::get_or(j, "master_seed", cfg.master_seed);

    if (j.contains("analysis")) {
        const auto& a = j.at("analysis");
        cfg.analysis.mare_iterate = detail::get_or(a, "mare_iterate", cfg.analysis.mare_iterate);
        cfg.analysis.necessary = detail::get_or(a, "necessary", cfg.analysis.necessary);
        cfg.analysis.sufficient = detail::get_or(a, "sufficient", cfg.analysis.sufficient);
        cfg.analysis.tol = detail::get_or(a, "tol", cfg.analysis.tol);
        cfg.analysis.max_iter = detail::get_or(a, "max_iter", cfg.analysis.max_iter);
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        cfg.output.dir = detail::get_or<std::string>(o, "dir", cfg.output.dir.string());
        cfg.output.csv = detail::get_or(o, "csv", cfg.output.csv);
        cfg.output.summary_json = detail::get_or(o, "summary_json", cfg.output.summary_json);
        cfg.output.report = detail::get_or(o, "report", cfg.output.report);
        cfg.output.effective_config = detail::get_or(o, "effective_config", cfg.output.effective_config);
        cfg.output.full_matrices = detail::get_or(o, "full_matrices", cfg.output.full_matrices);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json_file(path)); }

/// The config with thresholds replaced by their resolved eta values. The
/// per-component "lambda" entry is informational and ignored on ingest.
inline io::json effective_config_json(const ExperimentConfig& cfg) {
    const SchedulerConfig sch = cfg.scheduler();
    io::json comps = io::json::array();
    for (double e : sch.eta) comps.push_back({{"eta", e}, {"lambda", component_stats(e, sch.beta).lambda}});
    return {
        {"system", io::system_to_json(cfg.system)},
        {"scheduler", {{"beta", cfg.beta}, {"delta_high", cfg.delta_high}, {"delta_low", cfg.delta_low}, {"components", comps}}},
        {"horizon", cfg.horizon},
        {"trials", cfg.trials},
        {"master_seed", cfg.master_seed},
        {"analysis",
         {{"mare_iterate", cfg.analysis.mare_iterate},
          {"necessary", cfg.analysis.necessary},
          {"sufficient", cfg.analysis.sufficient},
          {"tol", cfg.analysis.tol},
          {"max_iter", cfg.analysis.max_iter}}},
        {"output",
         {{"dir", cfg.output.dir.string()},
          {"csv", cfg.output.csv},
          {"summary_json", cfg.output.summary_json},
          {"report", cfg.output.report},
          {"effective_config", cfg.output.effective_config},
          {"full_matrices", cfg.output.full_matrices}}},
    };
}

/// Throws std::invalid_argument describing the first problem found.
inline void validate_experiment(const ExperimentConfig& cfg, bool needs_simulation) {
    require_well_formed(cfg.system);
    if (static_cast<Eigen::Index>(cfg.components.size()) != cfg.system.meas_dim())
        throw std::invalid_argument("scheduler.components: expected " + std::to_string(cfg.system.meas_dim()) +
                                    " entries, got " + std::to_string(cfg.components.size()));
    cfg.scheduler().check();
    if (needs_simulation) {
        if (cfg.trials < 1) throw std::invalid_argument("trials must be at least 1");
        if (cfg.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    }
    if (!(cfg.analysis.tol > 0.0)) throw std::invalid_argument("analysis.tol must be positive");
    if (cfg.analysis.max_iter < 1) throw std::invalid_argument("analysis.max_iter must be at least 1");
}

struct RunResult {
    int exit_code = exit_code::ok;
    std::vector<std::string> messages;
    std::vector<std::filesystem::path> written;
};

namespace detail {

inline std::filesystem::path prepare_output(const OutputPaths& out, const std::string& name) {
    std::filesystem::create_directories(out.dir);
    return out.dir / name;
}

inline void write_json(const std::filesystem::path& path, const io::json& j, RunResult& res) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << j.dump(2) << '\n';
    res.written.push_back(path);
}

}  // namespace detail

inline RunResult run_simulate(const ExperimentConfig& cfg, const SimOptions& sim_opt = {}) {
    RunResult res;
    SchedulerConfig sch;
    try {
        validate_experiment(cfg, true);
        sch = cfg.scheduler();
    } catch (const std::exception& e) {
        res.exit_code = exit_code::invalid;
        res.messages.push_back(std::string("validation failed: ") + e.what());
        return res;
    }
    const ValidationReport advisory = validate(cfg.system);
    for (const auto& m : advisory.messages) res.messages.push_back("warning: " + m);

    const MonteCarloSummary summary = monte_carlo(cfg.system, sch, cfg.horizon, cfg.trials, cfg.master_seed, sim_opt);
    const MareProblem problem{ensure_diagonal_r(cfg.system), lambdas_of(sch)};
    const BoundReport bounds = bound_check(summary, problem);

    const auto csv_path = detail::prepare_output(cfg.output, cfg.output.csv);
    {
        std::ofstream f(csv_path);
        if (!f) throw std::runtime_error("cannot write '" + csv_path.string() + "'");
        io::write_summary_csv(f, summary, bounds);
        res.written.push_back(csv_path);
    }
    io::json js = io::summary_to_json(summary, bounds, cfg.output.full_matrices);
    js["eta"] = sch.eta;
    js["lambdas"] = io::to_json(problem.lambdas);
    js["master_seed"] = cfg.master_seed;
    js["validation"] = io::validation_to_json(advisory);
    js["truncated"] = summary.truncated_trials > 0;
    detail::write_json(cfg.output.dir / cfg.output.summary_json, js, res);
    detail::write_json(cfg.output.dir / cfg.output.effective_config, effective_config_json(cfg), res);

    if (summary.truncated_trials > 0) {
        res.exit_code = exit_code::truncated;
        res.messages.push_back(std::to_string(summary.truncated_trials) + " of " + std::to_string(summary.trials) +
                               " trials were truncated after the covariance trace exceeded the ceiling");
    }
    return res;
}

/// Verdicts are reported in the JSON file; the exit code only reflects
/// whether the configuration could be analyzed.
inline RunResult run_analyze(const ExperimentConfig& cfg) {
    RunResult res;
    MareProblem problem;
    try {
        validate_experiment(cfg, false);
        problem = MareProblem{ensure_diagonal_r(cfg.system), lambdas_of(cfg.scheduler())};
        problem.check();
    } catch (const std::exception& e) {
        res.exit_code = exit_code::invalid;
        res.messages.push_back(std::string("validation failed: ") + e.what());
        return res;
    }
    AnalyzeOptions opt;
    opt.iterate = cfg.analysis.mare_iterate;
    opt.necessary = cfg.analysis.necessary;
    opt.sufficient = cfg.analysis.sufficient;
    opt.sufficient_opts.iteration = cfg.iteration_options();
    const MareReport rep = analyze(problem, opt);

    detail::prepare_output(cfg.output, cfg.output.report);
    detail::write_json(cfg.output.dir / cfg.output.report, io::report_to_json(rep, problem), res);
    detail::write_json(cfg.output.dir / cfg.output.effective_config, effective_config_json(cfg), res);

    std::ostringstream line;
    line << "fixed point: " << to_string(rep.iteration.status) << " after " << rep.iteration.iterations << " iterations";
    res.messages.push_back(line.str());
    if (opt.necessary)
        res.messages.push_back(std::string("necessary condition: ") + (rep.necessary.ok ? "satisfied" : "violated"));
    if (opt.sufficient)
        res.messages.push_back(std::string("sufficient condition: ") +
                               (rep.sufficient.ok ? "certificate found" : "no certificate"));
    return res;
}

}  // namespace pskf
