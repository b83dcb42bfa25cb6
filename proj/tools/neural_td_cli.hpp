#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neural_td/config.hpp"
#include "neural_td/studies.hpp"
#include "neural_td/verify.hpp"

namespace ntd::cli {

enum ExitCode { kOk = 0, kCheckFailed = 1, kConfigError = 2 };

/// flag > NEURAL_TD_SEED > fallback.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("NEURAL_TD_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return v;
        } catch (const std::logic_error&) {
            throw ConfigError(std::string("NEURAL_TD_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return fallback;
}

inline std::string prepare_out(const std::string& dir) {
    if (dir.empty()) return dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw PersistFailed("cannot create output directory '" + dir + "': " + ec.message());
    return dir;
}

inline std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline int report_verdicts(const std::vector<studies::Verdict>& verdicts, const std::string& out_dir,
                           const std::string& report_name, std::ostream& out) {
    bool all = true;
    json report = json::array();
    for (const auto& v : verdicts) {
        out << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << "\n";
        report.push_back({{"name", v.name}, {"status", v.pass ? "pass" : "fail"}, {"detail", v.detail}});
        all = all && v.pass;
    }
    if (!out_dir.empty()) detail::write_text_file(join(out_dir, report_name), report.dump(2) + "\n");
    return all ? kOk : kCheckFailed;
}

struct Options {
    // verify-identities
    int verify_seeds = 100;
    std::optional<double> tolerance;
    bool json_stdout = false;
    // shared
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    bool allow_divergence = false;
    int study_seeds = 20;
    // study overrides
    std::optional<double> alpha;
    std::optional<double> omega;
    std::optional<std::int64_t> horizon;
    // probe-regularity
    int depth = 1;
    std::vector<int> widths{64, 128, 256, 512};
    double probe_omega = 1.0;
    int trials = 100;
    std::string activation = "tanh";
    int input_dim = 2;
};

inline int cmd_verify(const Options& o, std::ostream& out) {
    const auto suites = verify::identity_suites(o.verify_seeds, o.tolerance);
    json report;
    report["seeds"] = o.verify_seeds;
    report["suites"] = json::array();
    const SuiteResult* first_fail = nullptr;
    for (const auto& s : suites) {
        report["suites"].push_back(to_json(s));
        if (!s.pass && !first_fail) first_fail = &s;
    }
    report["status"] = first_fail ? "fail" : "pass";
    const std::string text = report.dump(2) + "\n";
    if (!o.out.empty()) detail::write_text_file(join(prepare_out(o.out), "verify_report.json"), text);
    if (o.json_stdout) {
        out << text;
    } else {
        for (const auto& s : suites) {
            out << s.name << ": " << (s.pass ? "pass" : "fail") << " (" << s.cases << " cases, max error "
                << studies::fmt(s.max_error) << ", tolerance " << studies::fmt(s.tolerance) << ")\n";
        }
        if (first_fail) out << "first failing identity: " << first_fail->name << " at " << first_fail->first_failure << "\n";
    }
    return first_fail ? kCheckFailed : kOk;
}

inline json load_config_with_seed(const Options& o) {
    json j = detail::read_json_file(o.config);
    if (!j.is_object()) throw ConfigError("config root must be an object");
    const auto cfg_seed = j.contains("seed") && j.at("seed").is_number_unsigned() ? j.at("seed").get<std::uint64_t>() : 0;
    j["seed"] = resolve_seed(o.seed, cfg_seed);
    if (o.allow_divergence) j["allow_divergence"] = true;
    return j;
}

inline int cmd_run(const Options& o, std::ostream& out) {
    const RunDocument doc = parse_run_config(load_config_with_seed(o));
    const Problem problem = build_problem(doc.env);
    const RunTrace trace = run(doc.run, problem);
    const std::string dir = prepare_out(o.out);
    write_trace_csv(trace, join(dir, "trace.csv"));
    json summary{{"rows", trace.rows.size()}, {"seed", doc.run.seed}, {"diverged", trace.diverged}};
    if (trace.time_avg_n_error) summary["time_avg_n_error"] = *trace.time_avg_n_error;
    if (trace.step_lambda) summary["step_lambda"] = *trace.step_lambda;
    if (trace.diverged) summary["divergence_message"] = trace.divergence_message;
    detail::write_text_file(join(dir, "run_summary.json"), summary.dump(2) + "\n");
    out << "wrote " << trace.rows.size() << " rows to " << join(dir, "trace.csv") << "\n";
    return kOk;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
    const SweepSpec spec = parse_sweep_config(load_config_with_seed(o));
    const auto results = run_sweep(spec, prepare_out(o.out), o.jobs);
    out << "wrote " << results.size() << " cells to " << join(o.out, "summary.csv") << "\n";
    return kOk;
}

inline int cmd_radius(const Options& o, std::ostream& out) {
    auto study = studies::radius_study(resolve_seed(o.seed, 0), o.study_seeds);
    if (o.alpha) study.spec.base.step.alpha = *o.alpha;
    if (o.omega) study.spec.base.omega = *o.omega;
    if (o.horizon) study.spec.base.horizon = *o.horizon;
    const std::string dir = prepare_out(o.out);
    const auto cells = studies::run_radius_study(study, o.jobs);
    if (!dir.empty()) {
        for (const auto& cell : cells) {
            const std::string tag = "K" + std::to_string(cell.depth);
            detail::write_text_file(join(dir, "radius_" + tag + ".csv"), radius_csv(cell.pairs));
            for (const auto& p : cell.pairs) {
                const std::string stem = "trace_" + tag + "_m" + std::to_string(p.width) + "_seed" + std::to_string(p.seed);
                write_trace_csv(p.trace_constant, join(dir, stem + "_constant.csv"));
                write_trace_csv(p.trace_decaying, join(dir, stem + "_decaying.csv"));
            }
        }
    }
    return report_verdicts(studies::evaluate(study, cells), dir, "radius_verdicts.json", out);
}

inline int cmd_theorem31(const Options& o, std::ostream& out) {
    auto study = studies::scaling_study(resolve_seed(o.seed, 0), o.study_seeds);
    const std::string dir = prepare_out(o.out);
    const auto rows = theorem31_sweep(study.spec, build_problem(study.env), o.jobs);
    if (!dir.empty()) detail::write_text_file(join(dir, "theorem31.csv"), theorem31_csv(rows));
    return report_verdicts(studies::evaluate(study, rows), dir, "theorem31_verdicts.json", out);
}

inline int cmd_appendix_b(const Options& o, std::ostream& out) {
    auto study = studies::unprojected_study(resolve_seed(o.seed, 0), o.study_seeds);
    if (o.horizon) study.base.horizon = *o.horizon;
    const std::string dir = prepare_out(o.out);
    const auto rows = appendix_b_runs(study.base, build_problem(study.env), study.seeds, o.jobs);
    if (!dir.empty()) {
        std::string csv = "cfg_seed,lambda,sigma_min,initial_dist_sq,final_dist_sq,bounded\n";
        for (const auto& r : rows) {
            csv += std::to_string(r.seed) + ',' + detail::format_double(r.lambda) + ',' +
                   detail::format_double(r.sigma_min) + ',' + detail::format_double(r.initial_dist_sq) + ',' +
                   detail::format_double(r.final_dist_sq) + ',' + (r.bounded ? "1" : "0") + '\n';
            write_trace_csv(r.trace, join(dir, "trace_seed" + std::to_string(r.seed) + ".csv"));
        }
        detail::write_text_file(join(dir, "appendix_b.csv"), csv);
    }
    return report_verdicts(studies::evaluate(study, rows), dir, "appendix_b_verdicts.json", out);
}

inline int cmd_probe(const Options& o, std::ostream& out) {
    RegularityProbeSpec spec;
    spec.depth = o.depth;
    spec.input_dim = o.input_dim;
    spec.activation = parse_activation(o.activation);
    spec.widths = o.widths;
    spec.omega = o.probe_omega;
    spec.trials = o.trials;
    spec.seed = resolve_seed(o.seed, 0);
    const auto rows = regularity_probe(spec);
    std::string csv = "width,lipschitz_est,smoothness_est\n";
    for (const auto& r : rows) {
        csv += std::to_string(r.width) + ',' + detail::format_double(r.lipschitz_est) + ',' +
               detail::format_double(r.smoothness_est) + '\n';
    }
    out << csv;
    if (rows.size() >= 2) out << "log-log smoothness slope: " << studies::fmt(smoothness_loglog_slope(rows)) << "\n";
    if (!o.out.empty()) detail::write_text_file(join(prepare_out(o.out), "regularity.csv"), csv);
    return kOk;
}

/// Parses argv and dispatches. Exit codes: 0 success, 1 failed check or
/// runtime failure, 2 configuration or usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Neural TD policy-evaluation workbench"};
    app.require_subcommand(1);
    Options o;

    auto* verify = app.add_subcommand("verify-identities", "Run the exact-identity suites");
    verify->add_option("--seeds", o.verify_seeds, "Random instances per suite")->check(CLI::PositiveNumber);
    verify->add_option("--tolerance", o.tolerance, "Override every suite's tolerance");
    verify->add_option("--out", o.out, "Directory for verify_report.json");
    verify->add_flag("--json", o.json_stdout, "Print the JSON report instead of text");

    auto* run_cmd = app.add_subcommand("run", "Run one TD configuration");
    auto* sweep = app.add_subcommand("sweep", "Run a sweep of configurations");
    for (auto* sub : {run_cmd, sweep}) {
        sub->add_option("--config", o.config, "JSON config file")->required();
        sub->add_option("--out", o.out, "Output directory")->required();
        sub->add_option("--seed", o.seed, "Seed (overrides NEURAL_TD_SEED and the config)");
        sub->add_flag("--allow-divergence", o.allow_divergence, "Record divergence instead of failing");
    }
    sweep->add_option("--jobs", o.jobs, "Parallel cells")->check(CLI::PositiveNumber);

    auto* radius = app.add_subcommand("radius-compare", "Constant versus width-decaying projection radius");
    auto* t31 = app.add_subcommand("theorem31", "Width and horizon scaling of the time-averaged error");
    auto* appb = app.add_subcommand("appendix-b", "Unprojected single-hidden-layer TD");
    for (auto* sub : {radius, t31, appb}) {
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "First seed");
        sub->add_option("--seeds", o.study_seeds, "Number of seeds")->check(CLI::PositiveNumber);
        sub->add_option("--jobs", o.jobs, "Parallel runs")->check(CLI::PositiveNumber);
    }
    radius->add_option("--alpha", o.alpha, "Constant step size");
    radius->add_option("--omega", o.omega, "Base projection radius");
    radius->add_option("--horizon", o.horizon, "Steps per run");
    appb->add_option("--horizon", o.horizon, "Steps per run");

    auto* probe = app.add_subcommand("probe-regularity", "Empirical gradient size and smoothness versus width");
    probe->add_option("--depth", o.depth, "Hidden layers")->check(CLI::PositiveNumber);
    probe->add_option("--widths", o.widths, "Ascending widths");
    probe->add_option("--omega", o.probe_omega, "Ball radius around the initialization");
    probe->add_option("--trials", o.trials, "Samples per width")->check(CLI::PositiveNumber);
    probe->add_option("--activation", o.activation, "tanh, sigmoid, softplus or gelu");
    probe->add_option("--input-dim", o.input_dim, "Input dimension")->check(CLI::PositiveNumber);
    probe->add_option("--seed", o.seed, "Seed");
    probe->add_option("--out", o.out, "Directory for regularity.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kConfigError;
    }

    try {
        if (*verify) return cmd_verify(o, out);
        if (*run_cmd) return cmd_run(o, out);
        if (*sweep) return cmd_sweep(o, out);
        if (*radius) return cmd_radius(o, out);
        if (*t31) return cmd_theorem31(o, out);
        if (*appb) return cmd_appendix_b(o, out);
        if (*probe) return cmd_probe(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidMdp& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kCheckFailed;
    }
    return kConfigError;
}

}  // namespace ntd::cli
