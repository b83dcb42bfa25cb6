#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "neural_td/errors.hpp"
#include "neural_td/io.hpp"
#include "neural_td/mdp.hpp"
#include "neural_td/network.hpp"
#include "neural_td/norms.hpp"
#include "neural_td/td.hpp"
#include "neural_td/trace.hpp"

namespace ntd {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class Algorithm { projected_neural, mean_path, unprojected_single_layer, linear };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::projected_neural: return "projected_neural";
        case Algorithm::mean_path: return "mean_path";
        case Algorithm::unprojected_single_layer: return "unprojected_single_layer";
        case Algorithm::linear: return "linear";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
    if (s == "projected_neural") return Algorithm::projected_neural;
    if (s == "mean_path") return Algorithm::mean_path;
    if (s == "unprojected_single_layer") return Algorithm::unprojected_single_layer;
    if (s == "linear") return Algorithm::linear;
    throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

/// Step-size rule as written in a config. `inv_sqrt_horizon` resolves to the
/// constant scale / sqrt(T); `inverse_time` with lambda <= 0 means "choose
/// lambda as twice the admissible threshold computed from sigma_min^{2,D} at
/// the target parameters".
struct StepRule {
    enum class Kind { constant, inverse_time, inv_sqrt_horizon };
    Kind kind = Kind::constant;
    double alpha = 0.01;
    double lambda = 0.0;
    double scale = 1.0;
};

enum class BellmanMode { exact, ema };

/// Environment description; `type` is one of gridworld, random, chain, file.
struct EnvSpec {
    std::string type = "gridworld";
    int width = 5;
    int height = 5;
    double slip = 0.1;
    int n = 20;
    int d = 4;
    int actions = 2;
    std::uint64_t seed = 0;
    double p_forward = 0.9;
    double smoothing = kRandomMdpSmoothing;
    std::string path;
    double gamma = 0.9;
};

struct TargetSpec {
    bool representable = false;
    double rho = 1.0;
};

struct TdRunConfig {
    Algorithm algorithm = Algorithm::projected_neural;
    NetConfig net;
    double omega = 10.0;
    StepRule step;
    std::int64_t horizon = 2000;
    SamplingMode sampling = SamplingMode::iid;
    /// Markov burn-in steps; -1 means tau_mix(1e-3) of the chain.
    int burn_in = -1;
    std::uint64_t seed = 0;
    int record_every = 20;
    TargetSpec target;
    /// Linear algorithm only: identity (tabular) features instead of the
    /// environment's state features.
    bool linear_tabular = true;
    BellmanMode bellman = BellmanMode::exact;
    double ema_decay = 0.99;
    bool allow_divergence = false;
    /// Accumulate N(V(theta_t) - V(theta_hat_star)) at every step for the
    /// time average (requires a representable target).
    bool track_time_average = true;
};

inline Mdp build_mdp(const EnvSpec& env) {
    if (env.type == "gridworld") return gridworld(env.width, env.height, env.slip, env.gamma);
    if (env.type == "random") return random_mdp(env.n, env.d, env.actions, env.seed, env.gamma);
    if (env.type == "chain") return chain_env(env.n, env.p_forward, env.smoothing, env.gamma);
    if (env.type == "file") return load_mdp(env.path);
    throw ConfigError("unknown env.type '" + env.type + "'");
}

inline Problem make_problem(const Mdp& mdp, const Policy& policy) { return Problem{mdp.states, induce_chain(mdp, policy)}; }

inline Problem build_problem(const EnvSpec& env) {
    const Mdp mdp = build_mdp(env);
    return make_problem(mdp, uniform_policy(mdp));
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

namespace detail {

inline double exact_bellman_error(const PolicyChain& chain, const VectorXd& V) {
    const VectorXd residual = chain.R + chain.gamma * (chain.P * V) - V;
    return chain.mu.dot(residual.cwiseAbs2());
}

inline double n_of(const VectorXd& f, const PolicyChain& chain) {
    return (1.0 - chain.gamma) * d_norm_sq(f, chain) + chain.gamma * dirichlet_sq(f, chain);
}

template <ValueModel M>
StepSize resolve_step(const StepRule& rule, std::int64_t horizon, const std::optional<M>& star, const Problem& problem,
                      double l, RunTrace& trace) {
    switch (rule.kind) {
        case StepRule::Kind::constant: return StepSize::constant(rule.alpha);
        case StepRule::Kind::inv_sqrt_horizon:
            return StepSize::constant(rule.scale / std::sqrt(static_cast<double>(horizon)));
        case StepRule::Kind::inverse_time: {
            double lambda = rule.lambda;
            if (lambda <= 0.0) {
                if (!star) throw ConfigError("step.lambda = auto needs a representable target");
                const double sigma = sigma_min_2d(jacobian(*star, problem.features), problem.chain);
                trace.sigma_min = sigma;
                lambda = 2.0 * unprojected_lambda_threshold(sigma, l, problem.chain.gamma);
            }
            trace.step_lambda = lambda;
            return StepSize::inverse_time(lambda);
        }
    }
    return StepSize::constant(rule.alpha);
}

}  // namespace detail

/// Runs one TD variant for cfg.horizon steps, recording a row after every
/// `record_every` completed steps. Row t describes theta_t, the parameters
/// after t updates.
template <ValueModel M>
RunTrace run_model(const TdRunConfig& cfg, Problem problem, M model, double lipschitz_l) {
    if (cfg.horizon < 0) throw ConfigError("horizon must be >= 0");
    if (cfg.record_every < 1) throw ConfigError("record_every must be >= 1");
    const bool projected = cfg.algorithm != Algorithm::unprojected_single_layer && std::isfinite(cfg.omega);
    const double omega = cfg.algorithm == Algorithm::unprojected_single_layer
                             ? std::numeric_limits<double>::infinity()
                             : cfg.omega;
    if (!(omega > 0.0)) throw ConfigError("omega must be positive");

    RunTrace trace;
    trace.gamma = problem.chain.gamma;
    trace.projected = projected;

    std::optional<M> star;
    if (cfg.target.representable) {
        if (cfg.target.rho > omega) throw ConfigError("target.rho must not exceed omega");
        auto target = make_representable_target(model, problem, cfg.target.rho, cfg.seed);
        star = std::move(target.model);
        problem = std::move(target.problem);
    }
    const StepSize step = detail::resolve_step(cfg.step, cfg.horizon, star, problem, lipschitz_l, trace);

    int burn_in = cfg.burn_in;
    if (cfg.sampling == SamplingMode::markov && burn_in < 0) burn_in = mixing_profile(problem.chain, 1e-3).tau_mix;
    Sampler sampler(problem.chain, cfg.sampling, cfg.seed, std::max(burn_in, 0));

    const auto& chain = problem.chain;
    TdState<M> state(model);
    const M initial = model;
    const bool want_star_distance = star && cfg.algorithm == Algorithm::unprojected_single_layer;
    std::optional<VectorXd> v_hat;
    if (star) v_hat = value_vector(*star, problem.features);

    if (star) {
        trace.initial_n_error = detail::n_of(value_vector(model, problem.features) - *v_hat, chain);
        const double d0 = (model.theta() - star->theta()).norm();
        trace.initial_dist_to_star = d0;
        trace.max_dist_to_star = d0;
    }

    double ema = std::numeric_limits<double>::quiet_NaN();
    double n_accumulator = 0.0;
    const bool track_average = star && cfg.track_time_average;

    for (std::int64_t t = 0; t < cfg.horizon; ++t) {
        if (track_average) n_accumulator += detail::n_of(value_vector(state.params, problem.features) - *v_hat, chain);
        const Transition tr = sampler.next();
        try {
            switch (cfg.algorithm) {
                case Algorithm::projected_neural:
                case Algorithm::linear: step_projected(state, tr, problem, step, omega); break;
                case Algorithm::mean_path: step_mean_path(state, problem, step, omega); break;
                case Algorithm::unprojected_single_layer: step_unprojected(state, tr, problem, step); break;
            }
        } catch (const NonFiniteUpdate& e) {
            trace.diverged = true;
            trace.divergence_message = e.what();
            if (!cfg.allow_divergence) throw;
            break;
        }
        if (cfg.algorithm == Algorithm::mean_path) {
            state.last_delta = td_error(state.params, problem, tr.s, tr.s_next);
        }
        const double d2 = state.last_delta * state.last_delta;
        ema = std::isnan(ema) ? d2 : cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * d2;

        if (want_star_distance) {
            trace.max_dist_to_star = std::max(*trace.max_dist_to_star, (state.params.theta() - star->theta()).norm());
        }

        if ((t + 1) % cfg.record_every != 0) continue;
        TraceRow row;
        row.t = t + 1;
        const VectorXd V = value_vector(state.params, problem.features);
        row.avg_bellman_error = cfg.bellman == BellmanMode::exact ? detail::exact_bellman_error(chain, V) : ema;
        if (v_hat) {
            const VectorXd f = V - *v_hat;
            row.d_error = d_norm_sq(f, chain);
            row.n_error = (1.0 - chain.gamma) * *row.d_error + chain.gamma * dirichlet_sq(f, chain);
        }
        if (projected) {
            row.dist_ratio = std::min((state.params.theta() - state.theta0).norm() / omega, 1.0 + kDistRatioSlack);
        }
        const VectorXd s = problem.feature(tr.s);
        row.grad_diff = (state.params.gradient(s) - initial.gradient(s)).norm();
        if (want_star_distance) row.dist_to_star = (state.params.theta() - star->theta()).norm();
        trace.rows.push_back(row);
    }
    if (track_average && !trace.diverged && cfg.horizon > 0) {
        trace.time_avg_n_error = n_accumulator / static_cast<double>(cfg.horizon);
    }
    return trace;
}

/// Builds the model the config asks for and runs it on `problem`.
inline RunTrace run(const TdRunConfig& cfg, const Problem& problem) {
    if (cfg.algorithm == Algorithm::linear) {
        Problem p = problem;
        if (cfg.linear_tabular) p.features = MatrixXd::Identity(problem.num_states(), problem.num_states());
        LinearParams model(VectorXd::Zero(p.features.cols()));
        return run_model(cfg, std::move(p), std::move(model), 1.0);
    }
    NetConfig net = cfg.net;
    net.input_dim = static_cast<int>(problem.features.cols());
    net.seed = cfg.seed;
    if (cfg.algorithm == Algorithm::unprojected_single_layer && net.depth != 1) {
        throw ConfigError("unprojected_single_layer requires net.depth = 1");
    }
    return run_model(cfg, problem, init(net), net.activation_constants().l);
}

inline RunTrace run(const TdRunConfig& cfg, const Problem& problem, int record_every) {
    TdRunConfig c = cfg;
    c.record_every = record_every;
    return run(c, problem);
}

// ---------------------------------------------------------------------------
// Parallel cell execution
// ---------------------------------------------------------------------------

/// Calls fn(i) for i in [0, count) on up to `jobs` threads. The first
/// exception (by index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;
    double stderr_ = 0.0;
    std::size_t count = 0;
};

inline SeedStats seed_stats(const std::vector<double>& xs) {
    SeedStats s;
    s.count = xs.size();
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        s.stderr_ = s.stddev / std::sqrt(static_cast<double>(xs.size()));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { width, horizon, radius_mode, sampling };

inline SweepAxis parse_axis(std::string_view s) {
    if (s == "width") return SweepAxis::width;
    if (s == "horizon") return SweepAxis::horizon;
    if (s == "radius_mode") return SweepAxis::radius_mode;
    if (s == "sampling") return SweepAxis::sampling;
    throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::width: return "width";
        case SweepAxis::horizon: return "horizon";
        case SweepAxis::radius_mode: return "radius_mode";
        case SweepAxis::sampling: return "sampling";
    }
    return "?";
}

/// One axis varied over `values`, every value crossed with every seed.
/// Radius mode "constant" keeps base.omega; "decaying" uses
/// base.omega * sqrt(reference_width / m).
struct SweepSpec {
    SweepAxis axis = SweepAxis::width;
    std::vector<std::string> values;
    TdRunConfig base;
    EnvSpec env;
    std::vector<std::uint64_t> seeds;
    double reference_width = 1.0;
};

struct SweepCell {
    std::size_t index = 0;
    std::string value;
    std::string radius_mode = "constant";
    TdRunConfig cfg;
};

inline double decayed_omega(double omega0, double reference_width, int width) {
    return omega0 * std::sqrt(reference_width / static_cast<double>(width));
}

inline std::vector<SweepCell> expand_cells(const SweepSpec& spec) {
    if (spec.values.empty()) throw ConfigError("sweep.values must not be empty");
    if (spec.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
    std::vector<SweepCell> cells;
    for (const auto& value : spec.values) {
        for (auto seed : spec.seeds) {
            SweepCell cell;
            cell.index = cells.size();
            cell.value = value;
            cell.cfg = spec.base;
            cell.cfg.seed = seed;
            try {
                switch (spec.axis) {
                    case SweepAxis::width: cell.cfg.net.width = std::stoi(value); break;
                    case SweepAxis::horizon: cell.cfg.horizon = std::stoll(value); break;
                    case SweepAxis::sampling: cell.cfg.sampling = parse_sampling(value); break;
                    case SweepAxis::radius_mode:
                        if (value == "decaying") {
                            cell.cfg.omega = decayed_omega(spec.base.omega, spec.reference_width, spec.base.net.width);
                        } else if (value != "constant") {
                            throw ConfigError("radius_mode must be constant or decaying");
                        }
                        cell.radius_mode = value;
                        break;
                }
            } catch (const std::logic_error&) {
                throw ConfigError("sweep value '" + value + "' is not valid for axis " + std::string(to_string(spec.axis)));
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

struct CellResult {
    SweepCell cell;
    RunTrace trace;
};

inline std::string summary_header() {
    return "cell,cfg_algorithm,cfg_depth,cfg_width,cfg_activation,cfg_horizon,cfg_omega,cfg_radius_mode,cfg_sampling,"
           "cfg_seed,final_avg_bellman_error,final_n_error,final_dist_ratio,final_grad_diff,time_avg_n_error,diverged,"
           "trace_file";
}

inline std::string cell_trace_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "cell_%04zu.csv", index);
    return buf;
}

inline std::string summary_row(const CellResult& r) {
    const auto& c = r.cell.cfg;
    const TraceRow* last = r.trace.rows.empty() ? nullptr : &r.trace.rows.back();
    auto opt = [](const std::optional<double>& v) { return detail::format_optional(v); };
    std::string line = std::to_string(r.cell.index);
    line += ',' + std::string(to_string(c.algorithm));
    line += ',' + std::to_string(c.net.depth);
    line += ',' + std::to_string(c.net.width);
    line += ',' + std::string(to_string(c.net.activation));
    line += ',' + std::to_string(c.horizon);
    line += ',' + detail::format_double(c.omega);
    line += ',' + r.cell.radius_mode;
    line += ',' + std::string(to_string(c.sampling));
    line += ',' + std::to_string(c.seed);
    line += ',' + (last ? detail::format_double(last->avg_bellman_error) : std::string());
    line += ',' + (last ? opt(last->n_error) : std::string());
    line += ',' + (last ? opt(last->dist_ratio) : std::string());
    line += ',' + (last ? opt(last->grad_diff) : std::string());
    line += ',' + opt(r.trace.time_avg_n_error);
    line += ',' + std::string(r.trace.diverged ? "1" : "0");
    line += ',' + cell_trace_name(r.cell.index);
    return line;
}

/// Runs every cell (in parallel when jobs > 1), writes one trace CSV per
/// cell plus summary.csv under out_dir (if non-empty), and returns the
/// results ordered by cell index. Output is independent of `jobs`.
inline std::vector<CellResult> run_sweep(const SweepSpec& spec, const std::string& out_dir, int jobs = 1) {
    const Problem problem = build_problem(spec.env);
    const auto cells = expand_cells(spec);
    std::vector<CellResult> results(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        results[i].cell = cells[i];
        results[i].trace = run(cells[i].cfg, problem);
        if (!out_dir.empty()) write_trace_csv(results[i].trace, (std::filesystem::path(out_dir) / cell_trace_name(i)).string());
    });
    if (!out_dir.empty()) {
        std::string text = summary_header() + "\n";
        for (const auto& r : results) text += summary_row(r) + "\n";
        detail::write_text_file((std::filesystem::path(out_dir) / "summary.csv").string(), text);
    }
    return results;
}

// ---------------------------------------------------------------------------
// Theorem-shaped scaling sweep
// ---------------------------------------------------------------------------

struct Theorem31Row {
    int width = 0;
    std::int64_t horizon = 0;
    SamplingMode sampling = SamplingMode::iid;
    std::uint64_t seed = 0;
    double time_avg_n_error = 0.0;
    double initial_n_error = 0.0;
};

struct Theorem31Spec {
    TdRunConfig base;  // representable target forced on, alpha = T^{-1/2}
    std::vector<int> widths;
    std::vector<std::int64_t> horizons;
    std::vector<SamplingMode> modes{SamplingMode::iid};
    std::vector<std::uint64_t> seeds;
};

/// For every (width, horizon, sampling mode, seed): the time-averaged
/// N(V(theta_t) - V(theta_hat_star)) over t = 0..T-1 of projected neural TD
/// with alpha = T^{-1/2} on an exactly representable target.
inline std::vector<Theorem31Row> theorem31_sweep(const Theorem31Spec& spec, const Problem& problem, int jobs = 1) {
    struct Cell {
        int width;
        std::int64_t horizon;
        SamplingMode mode;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (int m : spec.widths)
        for (auto T : spec.horizons)
            for (auto mode : spec.modes)
                for (auto seed : spec.seeds) cells.push_back({m, T, mode, seed});

    std::vector<Theorem31Row> rows(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        const auto& c = cells[i];
        TdRunConfig cfg = spec.base;
        cfg.algorithm = Algorithm::projected_neural;
        cfg.target.representable = true;
        cfg.track_time_average = true;
        cfg.step.kind = StepRule::Kind::inv_sqrt_horizon;
        cfg.step.scale = 1.0;
        cfg.net.width = c.width;
        cfg.horizon = c.horizon;
        cfg.sampling = c.mode;
        cfg.seed = c.seed;
        cfg.record_every = static_cast<int>(std::max<std::int64_t>(1, c.horizon));
        const RunTrace trace = run(cfg, problem);
        rows[i] = {c.width, c.horizon, c.mode, c.seed, trace.time_avg_n_error.value_or(NAN),
                   trace.initial_n_error.value_or(NAN)};
    });
    return rows;
}

inline std::string theorem31_csv(const std::vector<Theorem31Row>& rows) {
    std::string out = "cfg_width,cfg_horizon,cfg_sampling,cfg_seed,time_avg_n_error,initial_n_error\n";
    for (const auto& r : rows) {
        out += std::to_string(r.width) + ',' + std::to_string(r.horizon) + ',' + std::string(to_string(r.sampling)) +
               ',' + std::to_string(r.seed) + ',' + detail::format_double(r.time_avg_n_error) + ',' +
               detail::format_double(r.initial_n_error) + '\n';
    }
    return out;
}

/// Time-averaged errors of the matching cells, ordered by seed.
inline std::vector<double> select_time_averages(const std::vector<Theorem31Row>& rows, int width, std::int64_t horizon,
                                                SamplingMode mode) {
    std::vector<const Theorem31Row*> hits;
    for (const auto& r : rows)
        if (r.width == width && r.horizon == horizon && r.sampling == mode) hits.push_back(&r);
    std::sort(hits.begin(), hits.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    std::vector<double> out;
    for (auto* r : hits) out.push_back(r->time_avg_n_error);
    return out;
}

// ---------------------------------------------------------------------------
// Constant versus width-decaying projection radius
// ---------------------------------------------------------------------------

struct RadiusSpec {
    TdRunConfig base;  // base.omega is omega0
    std::vector<int> widths;
    std::vector<std::uint64_t> seeds;
    double reference_width = 1.0;
    /// Fraction of the horizon treated as warm-up for the grad_diff statistic.
    double warmup_fraction = 0.2;
};

struct RadiusPair {
    int width = 0;
    std::uint64_t seed = 0;
    double omega_constant = 0.0;
    double omega_decaying = 0.0;
    double final_abe_constant = 0.0;
    double final_abe_decaying = 0.0;
    double final_dist_ratio_constant = 0.0;
    double final_dist_ratio_decaying = 0.0;
    double min_grad_diff_constant = 0.0;  // over rows after warm-up
    double min_grad_diff_decaying = 0.0;
    RunTrace trace_constant;
    RunTrace trace_decaying;
};

inline double min_grad_diff_after(const RunTrace& trace, std::int64_t warmup) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : trace.rows)
        if (r.t >= warmup && r.grad_diff) best = std::min(best, *r.grad_diff);
    return best;
}

/// Paired runs per (width, seed): identical init, sampler stream and
/// environment; only the projection radius differs.
inline std::vector<RadiusPair> radius_comparison(const RadiusSpec& spec, const Problem& problem, int jobs = 1) {
    std::vector<RadiusPair> pairs;
    for (int m : spec.widths)
        for (auto seed : spec.seeds) {
            RadiusPair p;
            p.width = m;
            p.seed = seed;
            p.omega_constant = spec.base.omega;
            p.omega_decaying = decayed_omega(spec.base.omega, spec.reference_width, m);
            pairs.push_back(std::move(p));
        }
    const auto warmup = static_cast<std::int64_t>(spec.warmup_fraction * static_cast<double>(spec.base.horizon));
    parallel_for(2 * pairs.size(), jobs, [&](std::size_t job) {
        auto& p = pairs[job / 2];
        const bool decaying = job % 2 == 1;
        TdRunConfig cfg = spec.base;
        cfg.algorithm = Algorithm::projected_neural;
        cfg.net.width = p.width;
        cfg.seed = p.seed;
        cfg.omega = decaying ? p.omega_decaying : p.omega_constant;
        RunTrace trace = run(cfg, problem);
        const auto& last = trace.rows.back();
        if (decaying) {
            p.final_abe_decaying = last.avg_bellman_error;
            p.final_dist_ratio_decaying = last.dist_ratio.value_or(NAN);
            p.min_grad_diff_decaying = min_grad_diff_after(trace, warmup);
            p.trace_decaying = std::move(trace);
        } else {
            p.final_abe_constant = last.avg_bellman_error;
            p.final_dist_ratio_constant = last.dist_ratio.value_or(NAN);
            p.min_grad_diff_constant = min_grad_diff_after(trace, warmup);
            p.trace_constant = std::move(trace);
        }
    });
    return pairs;
}

inline std::string radius_csv(const std::vector<RadiusPair>& pairs) {
    std::string out =
        "cfg_width,cfg_seed,cfg_omega_constant,cfg_omega_decaying,final_abe_constant,final_abe_decaying,"
        "final_dist_ratio_constant,final_dist_ratio_decaying,min_grad_diff_constant,min_grad_diff_decaying\n";
    for (const auto& p : pairs) {
        out += std::to_string(p.width) + ',' + std::to_string(p.seed) + ',' + detail::format_double(p.omega_constant) +
               ',' + detail::format_double(p.omega_decaying) + ',' + detail::format_double(p.final_abe_constant) + ',' +
               detail::format_double(p.final_abe_decaying) + ',' + detail::format_double(p.final_dist_ratio_constant) +
               ',' + detail::format_double(p.final_dist_ratio_decaying) + ',' +
               detail::format_double(p.min_grad_diff_constant) + ',' + detail::format_double(p.min_grad_diff_decaying) +
               '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Unprojected single-hidden-layer runs
// ---------------------------------------------------------------------------

struct AppendixBRow {
    std::uint64_t seed = 0;
    double lambda = 0.0;
    double sigma_min = 0.0;
    double initial_dist_sq = 0.0;
    double final_dist_sq = 0.0;
    bool bounded = false;
    RunTrace trace;
};

/// A seed counts as bounded when it never diverged and sup_t ||theta_t - theta*||
/// stayed within this multiple of ||theta_0 - theta*||.
inline constexpr double kBoundedFactor = 10.0;

/// Unprojected TD with alpha_t = 1/(lambda (t+1)), lambda = twice the
/// admissible threshold at theta*, on an exactly representable target.
inline std::vector<AppendixBRow> appendix_b_runs(const TdRunConfig& base, const Problem& problem,
                                                 const std::vector<std::uint64_t>& seeds, int jobs = 1) {
    std::vector<AppendixBRow> rows(seeds.size());
    parallel_for(seeds.size(), jobs, [&](std::size_t i) {
        TdRunConfig cfg = base;
        cfg.algorithm = Algorithm::unprojected_single_layer;
        cfg.net.depth = 1;
        cfg.target.representable = true;
        cfg.track_time_average = false;
        cfg.step.kind = StepRule::Kind::inverse_time;
        cfg.allow_divergence = true;
        cfg.seed = seeds[i];
        auto& row = rows[i];
        row.seed = seeds[i];
        row.trace = run(cfg, problem);
        row.lambda = row.trace.step_lambda.value_or(NAN);
        row.sigma_min = row.trace.sigma_min.value_or(NAN);
        const double d0 = row.trace.initial_dist_to_star.value_or(NAN);
        row.initial_dist_sq = d0 * d0;
        const double dT = row.trace.rows.empty() ? NAN : row.trace.rows.back().dist_to_star.value_or(NAN);
        row.final_dist_sq = dT * dT;
        row.bounded = !row.trace.diverged && std::isfinite(dT) &&
                      row.trace.max_dist_to_star.value_or(INFINITY) <= kBoundedFactor * d0;
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Recursion envelope X_{t+1} <= (1 - c/(t+1)) X_t + b/(t+1)^2
// ---------------------------------------------------------------------------

/// E_t = b/t^2 + sum_{i=1}^{t-1} (b/i^2) prod_{j=i+1}^{t} (1 - c/j) + prod_{j=1}^{t} (1 - c/j) X0,
/// for t = 0..T, evaluated through the equivalent one-step recursion. Factors
/// 1 - c/j are clamped at zero, which keeps E a valid bound for any
/// non-negative sequence when c > 1.
inline std::vector<double> recursion_envelope(double b, double c, double x0, std::int64_t T) {
    if (b < 0.0 || c < 0.0) throw ConfigError("recursion constants must be non-negative");
    std::vector<double> env(static_cast<std::size_t>(T) + 1);
    env[0] = x0;
    for (std::int64_t t = 0; t < T; ++t) {
        const double j = static_cast<double>(t + 1);
        env[static_cast<std::size_t>(t + 1)] =
            std::max(0.0, 1.0 - c / j) * env[static_cast<std::size_t>(t)] + b / (j * j);
    }
    return env;
}

/// Checks sequences against the envelope of a recursion with constants (b, c).
struct RecursionBoundChecker {
    double b = 1.0;
    double c = 1.0;

    bool dominated(const std::vector<double>& xs) const {
        if (xs.empty()) return true;
        const auto env = recursion_envelope(b, c, xs.front(), static_cast<std::int64_t>(xs.size()) - 1);
        for (std::size_t t = 0; t < xs.size(); ++t) {
            if (xs[t] > env[t] * (1.0 + 1e-12) + 1e-300) return false;
        }
        return true;
    }

    /// The second half of the sequence ends below where it starts.
    static bool eventually_decreasing(const std::vector<double>& xs) {
        if (xs.size() < 4) return true;
        return xs.back() <= xs[xs.size() / 2];
    }

    bool check(const std::vector<double>& xs) const { return dominated(xs) && eventually_decreasing(xs); }
};

}  // namespace ntd
