#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neural_td/experiments.hpp"
#include "neural_td/io.hpp"

namespace ntd {

/// Outcome of one identity suite. `max_error` is the largest scaled error
/// seen, compared against `tolerance`.
struct SuiteResult {
    explicit SuiteResult(std::string n) : name(std::move(n)) {}

    std::string name;
    bool pass = true;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::string first_failure;

    void record(double error, const std::string& where) {
        ++cases;
        if (!std::isfinite(error)) error = std::numeric_limits<double>::infinity();
        max_error = std::max(max_error, error);
        if (!(error <= tolerance)) {
            ++failures;
            pass = false;
            if (first_failure.empty()) first_failure = where;
        }
    }
};

inline json to_json(const SuiteResult& r) {
    return {{"name", r.name},        {"status", r.pass ? "pass" : "fail"}, {"cases", r.cases},
            {"failures", r.failures}, {"max_error", r.max_error},          {"tolerance", r.tolerance},
            {"first_failure", r.first_failure}};
}

namespace verify {

inline constexpr double kFiniteDiffStep = 1e-5;

/// A random ergodic chain of `n` states with a random discount in [0.05, 0.95].
inline PolicyChain random_chain(int n, std::uint64_t seed, std::optional<double> gamma = std::nullopt) {
    Rng rng = make_rng(seed, Stream::verify, 1);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    const double g = gamma ? *gamma : unif(rng);
    const Mdp mdp = random_mdp(n, 2, 2, seed, g);
    return induce_chain(mdp, uniform_policy(mdp));
}

inline VectorXd random_vector(Rng& rng, Eigen::Index size, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = normal(rng);
    return v;
}

/// Central finite-difference gradient of V(s, theta).
inline VectorXd finite_difference_gradient(const NetParams& p, const VectorXd& s, double h = kFiniteDiffStep) {
    NetParams q = p;
    VectorXd out(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double orig = q.theta()(i);
        q.theta()(i) = orig + h;
        const double up = q.value(s);
        q.theta()(i) = orig - h;
        const double down = q.value(s);
        q.theta()(i) = orig;
        out(i) = (up - down) / (2.0 * h);
    }
    return out;
}

inline std::string seed_tag(std::uint64_t seed) { return "seed " + std::to_string(seed); }

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Stationarity, Bellman residual and value bound over random MDPs.
inline SuiteResult analytics_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"analytics"};
    r.tolerance = tol.value_or(1.0);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        Rng rng = make_rng(seed, Stream::verify, 2);
        const int n = std::uniform_int_distribution<int>(2, 100)(rng);
        const int d = std::uniform_int_distribution<int>(1, 8)(rng);
        const int A = std::uniform_int_distribution<int>(1, 4)(rng);
        const double gamma = std::uniform_real_distribution<double>(0.05, 0.99)(rng);
        const Mdp mdp = random_mdp(n, d, A, seed, gamma);
        const PolicyChain c = induce_chain(mdp, uniform_policy(mdp));
        const double stat = (c.P.transpose() * c.mu - c.mu).lpNorm<Eigen::Infinity>() / 1e-10;
        const double bell = (c.v_star - c.R - c.gamma * c.P * c.v_star).lpNorm<Eigen::Infinity>() / 1e-9;
        const double bound = c.v_star.lpNorm<Eigen::Infinity>() <= c.r_max / (1.0 - c.gamma) ? 0.0 : INFINITY;
        const double mass = std::abs(c.mu.sum() - 1.0) / 1e-10;
        // Scaled so that 1 means "at the contract tolerance".
        r.record(std::max({stat, bell, bound, mass, c.mu.minCoeff() >= 0.0 ? 0.0 : INFINITY}), seed_tag(seed));
    }
    return r;
}

/// f^T D (gamma P - I) f = -N(f), scaled by 1 + N(f).
inline SuiteResult lemma_a1_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"lemma_a1_identity"};
    r.tolerance = tol.value_or(kLemmaA1Tol);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        Rng rng = make_rng(seed, Stream::verify, 3);
        const int n = std::uniform_int_distribution<int>(2, 40)(rng);
        const PolicyChain c = random_chain(n, seed);
        const VectorXd f = random_vector(rng, n, std::uniform_real_distribution<double>(0.01, 10.0)(rng));
        const double nv = (1.0 - c.gamma) * d_norm_sq(f, c) + c.gamma * dirichlet_sq(f, c);
        r.record(std::abs(td_quadratic_form(f, c) + nv) / (1.0 + nv), seed_tag(seed));
    }
    return r;
}

/// Gradient splitting for linear models with a representable target.
inline SuiteResult splitting_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"gradient_splitting"};
    r.tolerance = tol.value_or(kRepresentableTol);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        Rng rng = make_rng(seed, Stream::verify, 4);
        const int n = std::uniform_int_distribution<int>(2, 30)(rng);
        const int p = std::uniform_int_distribution<int>(1, n)(rng);
        PolicyChain c = random_chain(n, seed);
        MatrixXd features(n, p);
        for (Eigen::Index j = 0; j < p; ++j) features.col(j) = random_vector(rng, n);
        const VectorXd theta_star = random_vector(rng, p);
        const VectorXd v = features * theta_star;
        c = make_chain(c.P, v - c.gamma * (c.P * v), c.gamma, std::max(1.0, (v - c.gamma * (c.P * v)).cwiseAbs().maxCoeff()));
        const VectorXd theta = random_vector(rng, p);
        const VectorXd diff = features * (theta - theta_star);
        const double nv = (1.0 - c.gamma) * d_norm_sq(diff, c) + c.gamma * dirichlet_sq(diff, c);
        r.record(splitting_residual(theta, theta_star, features, c) / (1.0 + nv), seed_tag(seed));
    }
    return r;
}

inline NetConfig random_net_config(Rng& rng, int max_depth, int max_width, int input_dim) {
    static constexpr Activation kActs[] = {Activation::tanh, Activation::sigmoid, Activation::softplus, Activation::gelu};
    NetConfig cfg;
    cfg.depth = std::uniform_int_distribution<int>(1, max_depth)(rng);
    cfg.width = std::uniform_int_distribution<int>(2, max_width)(rng);
    cfg.input_dim = input_dim;
    cfg.activation = kActs[std::uniform_int_distribution<int>(0, 3)(rng)];
    cfg.seed = rng();
    return cfg;
}

/// Reverse-mode gradient against central differences (norm-wise relative error).
inline SuiteResult gradient_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"gradient_finite_difference"};
    r.tolerance = tol.value_or(1e-6);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        Rng rng = make_rng(seed, Stream::verify, 5);
        const int d = std::uniform_int_distribution<int>(1, 4)(rng);
        NetConfig cfg = random_net_config(rng, 3, 32, d);
        if (i % 4 == 0) cfg.width = 32;
        if (i % 3 == 0) cfg.depth = 3;
        const NetParams p = init(cfg);
        const VectorXd s = detail::random_in_ball(rng, VectorXd::Zero(d), 1.0);
        const VectorXd g = p.gradient(s);
        const VectorXd fd = finite_difference_gradient(p, s);
        r.record((g - fd).norm() / std::max(g.norm(), 1e-12), seed_tag(seed) + " " + std::string(to_string(cfg.activation)));
    }
    return r;
}

/// A random network problem with an exactly representable target nearby.
struct NetCase {
    Problem problem;
    NetParams model;
    NetParams star;
};

inline NetCase random_net_case(std::uint64_t seed, int max_depth = 2, int max_width = 12) {
    Rng rng = make_rng(seed, Stream::verify, 6);
    const int n = std::uniform_int_distribution<int>(3, 12)(rng);
    const int d = std::uniform_int_distribution<int>(1, 3)(rng);
    const double gamma = std::uniform_real_distribution<double>(0.1, 0.95)(rng);
    const Mdp mdp = random_mdp(n, d, 2, seed, gamma);
    const Problem problem{mdp.states, induce_chain(mdp, uniform_policy(mdp))};
    const NetParams model = init(random_net_config(rng, max_depth, max_width, d));
    const double rho = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    auto target = make_representable_target(model, problem, rho, seed);
    NetParams theta = with_theta(model, model.theta() + random_vector(rng, model.size(), 0.3));
    return {std::move(target.problem), std::move(theta), std::move(target.model)};
}

/// The two forms of the mean-path direction agree.
inline SuiteResult mean_path_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"mean_path_dual_form"};
    r.tolerance = tol.value_or(kMeanPathFormTol);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        NetCase nc = random_net_case(seed);
        // Perturb the rewards so V* is not representable and both forms carry weight.
        Rng rng = make_rng(seed, Stream::verify, 7);
        auto& c = nc.problem.chain;
        c = make_chain(c.P, c.R + random_vector(rng, c.size(), 0.1), c.gamma, c.r_max + 1.0);
        const auto& chain = nc.problem.chain;
        const VectorXd V = value_vector(nc.model, nc.problem.features);
        const MatrixXd J = jacobian(nc.model, nc.problem.features);
        VectorXd enumerated = VectorXd::Zero(J.cols());
        for (Eigen::Index s = 0; s < chain.size(); ++s) {
            double expected = 0.0;
            for (Eigen::Index t = 0; t < chain.size(); ++t) {
                expected += chain.P(s, t) * (chain.R(s) + chain.gamma * V(t) - V(s));
            }
            enumerated += chain.mu(s) * expected * J.row(s).transpose();
        }
        const VectorXd diff = V - chain.v_star;
        const VectorXd matrix_form = J.transpose() * chain.mu.cwiseProduct(chain.gamma * (chain.P * diff) - diff);
        r.record((enumerated - matrix_form).lpNorm<Eigen::Infinity>() / (1.0 + matrix_form.lpNorm<Eigen::Infinity>()),
                 seed_tag(seed));
    }
    return r;
}

/// gbar = g1 + g2 + g3 at mid-points 0.25, 0.5, 0.75 and at the mean-value point.
inline SuiteResult decomposition_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"lemma_a4_decomposition"};
    r.tolerance = tol.value_or(kDecompositionTol);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        const NetCase nc = random_net_case(seed);
        for (double lam : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const VectorXd mid = lam * nc.model.theta() + (1.0 - lam) * nc.star.theta();
            const auto d = lemma_a4_decomposition(nc.model, nc.star, nc.problem, mid);
            r.record(d.residual / (1.0 + d.g.norm()), seed_tag(seed) + " lambda " + std::to_string(lam));
        }
    }
    return r;
}

/// At the mean-value point, (theta - theta_hat_star)^T g1 = -N(V(theta) - V(theta_hat_star)).
inline SuiteResult mid_point_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"mean_value_point"};
    r.tolerance = tol.value_or(1e-9);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        const NetCase nc = random_net_case(seed);
        const MidPoint mp = find_mid_point(nc.model, nc.star, nc.problem);
        const auto d = lemma_a4_decomposition(nc.model, nc.star, nc.problem, mp.theta);
        const VectorXd f = value_vector(nc.model, nc.problem.features) - value_vector(nc.star, nc.problem.features);
        const auto& c = nc.problem.chain;
        const double nv = (1.0 - c.gamma) * d_norm_sq(f, c) + c.gamma * dirichlet_sq(f, c);
        const double lhs = (nc.model.theta() - nc.star.theta()).dot(d.g1);
        r.record(std::abs(lhs + nv) / (1.0 + nv), seed_tag(seed));
    }
    return r;
}

/// Per-transition size bound on g; error is measured / bound (pass when <= 1).
inline SuiteResult g_bound_suite(int count, std::optional<double> tol = std::nullopt) {
    SuiteResult r{"g_norm_bound"};
    r.tolerance = tol.value_or(1.0);
    for (int i = 0; i < count; ++i) {
        const auto seed = static_cast<std::uint64_t>(i);
        NetCase nc = random_net_case(seed);
        double eps = 0.0;
        if (i % 2 == 1) {
            Rng rng = make_rng(seed, Stream::verify, 8);
            auto& c = nc.problem.chain;
            const VectorXd R = c.R + random_vector(rng, c.size(), 0.2);
            c = make_chain(c.P, R, c.gamma, R.cwiseAbs().maxCoeff());
            eps = (value_vector(nc.star, nc.problem.features) - c.v_star).lpNorm<Eigen::Infinity>();
        }
        try {
            const GNormBound b = g_norm_bound_check(nc.model, nc.star, nc.problem, eps);
            r.record(b.bound > 0.0 ? b.measured / b.bound : (b.measured > 0.0 ? INFINITY : 0.0), seed_tag(seed));
        } catch (const BoundViolation& e) {
            r.record(INFINITY, seed_tag(seed) + ": " + e.what());
        }
    }
    return r;
}

inline std::vector<SuiteResult> identity_suites(int seeds, std::optional<double> tol = std::nullopt) {
    return {lemma_a1_suite(seeds, tol),     splitting_suite(seeds, tol),  decomposition_suite(seeds, tol),
            mid_point_suite(seeds, tol),    mean_path_suite(seeds, tol),  gradient_suite(seeds, tol)};
}

}  // namespace verify
}  // namespace ntd
