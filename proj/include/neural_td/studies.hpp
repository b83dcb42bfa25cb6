#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "neural_td/experiments.hpp"

namespace ntd::studies {

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
    std::iota(seeds.begin(), seeds.end(), first);
    return seeds;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Width and horizon scaling of the time-averaged N-error
// ---------------------------------------------------------------------------

struct ScalingStudy {
    EnvSpec env;
    Theorem31Spec spec;
    int small_width = 32;
    int large_width = 512;
    std::int64_t short_horizon = 2000;
    std::int64_t long_horizon = 20000;
    double markov_ratio_limit = 3.0;
};

inline ScalingStudy scaling_study(std::uint64_t first_seed = 0, int seeds = 20) {
    ScalingStudy s;
    s.env.type = "random";
    s.env.n = 10;
    s.env.d = 4;
    s.env.actions = 2;
    s.env.seed = 1;
    s.env.gamma = 0.9;
    s.spec.base.net.depth = 1;
    s.spec.base.net.activation = Activation::tanh;
    s.spec.base.omega = 10.0;
    s.spec.base.target.rho = 1.0;
    s.spec.widths = {s.small_width, s.large_width};
    s.spec.horizons = {s.short_horizon, s.long_horizon};
    s.spec.modes = {SamplingMode::iid, SamplingMode::markov};
    s.spec.seeds = seed_range(first_seed, seeds);
    return s;
}

/// "Decreases within 2 sigma": mean(after) - mean(before) <= 2 SE of the
/// per-seed paired difference.
inline Verdict paired_decrease(const std::string& name, const std::vector<double>& before,
                               const std::vector<double>& after) {
    std::vector<double> diff(before.size());
    for (std::size_t i = 0; i < before.size(); ++i) diff[i] = after[i] - before[i];
    const SeedStats d = seed_stats(diff);
    const SeedStats a = seed_stats(before), b = seed_stats(after);
    Verdict v{name, d.mean <= 2.0 * d.stderr_, {}};
    v.detail = "mean " + fmt(a.mean) + " -> " + fmt(b.mean) + ", paired diff " + fmt(d.mean) + " (2SE " +
               fmt(2.0 * d.stderr_) + ")";
    return v;
}

inline std::vector<Verdict> evaluate(const ScalingStudy& s, const std::vector<Theorem31Row>& rows) {
    std::vector<Verdict> out;
    for (int m : s.spec.widths) {
        out.push_back(paired_decrease("horizon_x10_m" + std::to_string(m),
                                      select_time_averages(rows, m, s.short_horizon, SamplingMode::iid),
                                      select_time_averages(rows, m, s.long_horizon, SamplingMode::iid)));
    }
    for (auto T : s.spec.horizons) {
        out.push_back(paired_decrease("width_x16_T" + std::to_string(T),
                                      select_time_averages(rows, s.small_width, T, SamplingMode::iid),
                                      select_time_averages(rows, s.large_width, T, SamplingMode::iid)));
    }
    for (int m : s.spec.widths)
        for (auto T : s.spec.horizons) {
            const double iid = seed_stats(select_time_averages(rows, m, T, SamplingMode::iid)).mean;
            const double markov = seed_stats(select_time_averages(rows, m, T, SamplingMode::markov)).mean;
            const double ratio = markov / iid;
            out.push_back({"markov_vs_iid_m" + std::to_string(m) + "_T" + std::to_string(T),
                           ratio <= s.markov_ratio_limit && ratio >= 1.0 / s.markov_ratio_limit,
                           "ratio " + fmt(ratio)});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Constant versus width-decaying projection radius
// ---------------------------------------------------------------------------

struct RadiusStudy {
    EnvSpec env;
    std::vector<int> depths{3, 5};
    RadiusSpec spec;
    double win_fraction = 0.8;
    double dist_ratio_floor = 0.95;
    /// Post-warm-up minimum of grad_diff relative to the run's maximum.
    double grad_diff_floor = 0.1;
};

inline RadiusStudy radius_study(std::uint64_t first_seed = 0, int seeds = 20) {
    RadiusStudy s;
    s.env.type = "gridworld";
    s.env.width = 5;
    s.env.height = 5;
    s.env.slip = 0.1;
    s.env.gamma = 0.9;
    s.spec.base.net.activation = Activation::tanh;
    s.spec.base.omega = 10.0;
    s.spec.base.step = StepRule{StepRule::Kind::constant, 5.0, 0.0, 1.0};
    s.spec.base.horizon = 2000;
    s.spec.base.record_every = 20;
    s.spec.widths = {80, 160};
    s.spec.seeds = seed_range(first_seed, seeds);
    s.spec.reference_width = 1.0;
    s.spec.warmup_fraction = 0.2;
    return s;
}

struct RadiusCell {
    int depth = 0;
    std::vector<RadiusPair> pairs;
};

inline std::vector<RadiusCell> run_radius_study(const RadiusStudy& s, int jobs = 1) {
    const Problem problem = build_problem(s.env);
    std::vector<RadiusCell> cells;
    for (int K : s.depths) {
        RadiusSpec spec = s.spec;
        spec.base.net.depth = K;
        cells.push_back({K, radius_comparison(spec, problem, jobs)});
    }
    return cells;
}

inline double grad_diff_ratio(const RunTrace& trace, std::int64_t warmup) {
    double peak = 0.0;
    for (const auto& r : trace.rows) peak = std::max(peak, r.grad_diff.value_or(0.0));
    return peak > 0.0 ? min_grad_diff_after(trace, warmup) / peak : 0.0;
}

inline std::vector<Verdict> evaluate(const RadiusStudy& s, const std::vector<RadiusCell>& cells) {
    std::vector<Verdict> out;
    const auto warmup = static_cast<std::int64_t>(s.spec.warmup_fraction * static_cast<double>(s.spec.base.horizon));
    for (const auto& cell : cells)
        for (int m : s.spec.widths) {
            const std::string tag = "K" + std::to_string(cell.depth) + "_m" + std::to_string(m);
            int wins = 0, count = 0;
            double dr_c = 0.0, dr_d = 0.0, gd = INFINITY;
            for (const auto& p : cell.pairs) {
                if (p.width != m) continue;
                ++count;
                wins += p.final_abe_constant < p.final_abe_decaying;
                dr_c += p.final_dist_ratio_constant;
                dr_d += p.final_dist_ratio_decaying;
                gd = std::min(gd, grad_diff_ratio(p.trace_constant, warmup));
            }
            dr_c /= count;
            dr_d /= count;
            out.push_back({"constant_beats_decaying_" + tag, wins >= s.win_fraction * count,
                           std::to_string(wins) + "/" + std::to_string(count) + " paired seeds"});
            out.push_back({"dist_ratio_" + tag, dr_c > s.dist_ratio_floor && dr_d > s.dist_ratio_floor,
                           "seed-mean final dist_ratio constant " + fmt(dr_c) + ", decaying " + fmt(dr_d)});
            out.push_back({"grad_diff_" + tag, gd >= s.grad_diff_floor,
                           "worst post-warm-up min/max grad_diff " + fmt(gd)});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Unprojected single-hidden-layer TD
// ---------------------------------------------------------------------------

struct UnprojectedStudy {
    EnvSpec env;
    TdRunConfig base;
    std::vector<std::uint64_t> seeds;
    double decay_target = 0.01;
    double bounded_fraction = 0.9;
};

inline UnprojectedStudy unprojected_study(std::uint64_t first_seed = 0, int seeds = 20) {
    UnprojectedStudy s;
    s.env.type = "random";
    s.env.n = 20;
    s.env.d = 2;
    s.env.actions = 2;
    s.env.seed = 3;
    s.env.gamma = 0.9;
    s.base.net.depth = 1;
    s.base.net.width = 4;
    s.base.net.activation = Activation::tanh;
    s.base.target.rho = 0.1;
    s.base.horizon = 100000;
    s.base.record_every = 1000;
    s.seeds = seed_range(first_seed, seeds);
    return s;
}

inline std::vector<Verdict> evaluate(const UnprojectedStudy& s, const std::vector<AppendixBRow>& rows) {
    double initial = 0.0, final = 0.0;
    int bounded = 0;
    for (const auto& r : rows) {
        initial += r.initial_dist_sq;
        final += r.final_dist_sq;
        bounded += r.bounded;
    }
    const double ratio = final / initial;
    const double frac = static_cast<double>(bounded) / static_cast<double>(rows.size());
    return {{"seed_mean_distance_decay", ratio < s.decay_target,
             "mean ||theta_T - theta*||^2 / mean ||theta_0 - theta*||^2 = " + fmt(ratio)},
            {"bounded_fraction", frac >= s.bounded_fraction,
             std::to_string(bounded) + "/" + std::to_string(rows.size()) + " seeds bounded"}};
}

// ---------------------------------------------------------------------------
// Recursion envelope
// ---------------------------------------------------------------------------

/// Sequences meeting X_{t+1} = (1 - c/(t+1)) X_t + w_t b/(t+1)^2 with weights
/// w_t in [0, 1] drawn at random, plus the equality case w_t = 1.
inline std::vector<std::vector<double>> simulate_recursions(double b, double c, double x0, std::int64_t T, int count,
                                                            std::uint64_t seed) {
    std::vector<std::vector<double>> out;
    for (int k = 0; k < count; ++k) {
        Rng rng = make_rng(seed, Stream::verify, 100u + static_cast<std::uint64_t>(k));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<double> xs(static_cast<std::size_t>(T) + 1);
        xs[0] = x0;
        for (std::int64_t t = 0; t < T; ++t) {
            const double j = static_cast<double>(t + 1);
            const double w = k == 0 ? 1.0 : unif(rng);
            xs[static_cast<std::size_t>(t + 1)] =
                std::max(0.0, 1.0 - c / j) * xs[static_cast<std::size_t>(t)] + w * b / (j * j);
        }
        out.push_back(std::move(xs));
    }
    return out;
}

}  // namespace ntd::studies
