#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neural_td/errors.hpp"
#include "neural_td/mdp.hpp"
#include "neural_td/network.hpp"
#include "neural_td/norms.hpp"
#include "neural_td/random.hpp"

namespace ntd {

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

enum class SamplingMode { iid, markov };

inline std::string_view to_string(SamplingMode m) { return m == SamplingMode::iid ? "iid" : "markov"; }

inline SamplingMode parse_sampling(std::string_view name) {
    if (name == "iid") return SamplingMode::iid;
    if (name == "markov") return SamplingMode::markov;
    throw ConfigError("unknown sampling mode '" + std::string(name) + "'");
}

struct Transition {
    Eigen::Index s = 0;
    Eigen::Index s_next = 0;
};

/// Emits (s, s') pairs. In iid mode every s is a fresh draw from mu; in
/// markov mode s_{t+1} is the previous successor. The markov start state is a
/// draw from mu unless `burn_in > 0`, in which case the chain starts at state
/// 0 and is advanced `burn_in` steps first.
class Sampler {
public:
    Sampler(const PolicyChain& chain, SamplingMode mode, std::uint64_t seed, int burn_in = 0)
        : chain_(&chain), mode_(mode), rng_(make_rng(seed, Stream::sampler)),
          stationary_(chain.mu.data(), chain.mu.data() + chain.mu.size()) {
        rows_.reserve(static_cast<std::size_t>(chain.size()));
        for (Eigen::Index s = 0; s < chain.size(); ++s) {
            const Eigen::RowVectorXd row = chain.P.row(s);
            rows_.emplace_back(row.data(), row.data() + row.size());
        }
        if (mode_ == SamplingMode::markov) {
            if (burn_in > 0) {
                current_ = 0;
                for (int i = 0; i < burn_in; ++i) current_ = successor(current_);
            } else {
                current_ = stationary_(rng_);
            }
        }
    }

    SamplingMode mode() const { return mode_; }

    Transition next() {
        Transition tr;
        tr.s = mode_ == SamplingMode::iid ? stationary_(rng_) : current_;
        tr.s_next = successor(tr.s);
        if (mode_ == SamplingMode::markov) current_ = tr.s_next;
        return tr;
    }

private:
    Eigen::Index successor(Eigen::Index s) { return rows_[static_cast<std::size_t>(s)](rng_); }

    const PolicyChain* chain_;
    SamplingMode mode_;
    Rng rng_;
    std::discrete_distribution<Eigen::Index> stationary_;
    std::vector<std::discrete_distribution<Eigen::Index>> rows_;
    Eigen::Index current_ = 0;
};

// ---------------------------------------------------------------------------
// Step sizes and projection
// ---------------------------------------------------------------------------

/// Either a constant alpha or alpha_t = 1 / (lambda (t + 1)).
struct StepSize {
    enum class Kind { constant, inverse_time };
    Kind kind = Kind::constant;
    double alpha = 0.0;
    double lambda = 1.0;

    static StepSize constant(double a) { return {Kind::constant, a, 1.0}; }
    static StepSize inverse_time(double lam) { return {Kind::inverse_time, 0.0, lam}; }

    double at(std::int64_t t) const {
        if (kind == Kind::constant) return alpha;
        return 1.0 / (lambda * static_cast<double>(t + 1));
    }
};

/// Euclidean projection onto the ball B(theta0, omega). omega may be +inf.
inline VectorXd project_ball(const VectorXd& theta, const VectorXd& theta0, double omega) {
    check_same_shape(theta, theta0);
    const VectorXd diff = theta - theta0;
    const double dist = diff.norm();
    if (dist <= omega) return theta;
    return theta0 + (omega / dist) * diff;
}

// ---------------------------------------------------------------------------
// TD state, errors and update directions
// ---------------------------------------------------------------------------

/// A tabular problem: one feature row per state plus the induced chain.
struct Problem {
    MatrixXd features;
    PolicyChain chain;

    Eigen::Index num_states() const { return chain.size(); }
    VectorXd feature(Eigen::Index s) const { return features.row(s).transpose(); }
};

template <ValueModel M>
struct TdState {
    std::int64_t t = 0;
    M params;
    VectorXd theta0;
    double last_delta = 0.0;

    explicit TdState(M initial) : params(std::move(initial)), theta0(params.theta()) {}
};

/// delta = R(s) + gamma V(s') - V(s).
template <ValueModel M>
double td_error(const M& model, const Problem& problem, Eigen::Index s, Eigen::Index s_next) {
    if (s < 0 || s >= problem.num_states() || s_next < 0 || s_next >= problem.num_states()) {
        throw DimensionMismatch("state index out of range");
    }
    return problem.chain.R(s) + problem.chain.gamma * model.value(problem.feature(s_next)) -
           model.value(problem.feature(s));
}

/// g(theta) = grad V(s, theta) * delta for one transition.
template <ValueModel M>
VectorXd td_direction(const M& model, const Problem& problem, const Transition& tr, double* delta_out = nullptr) {
    const double delta = td_error(model, problem, tr.s, tr.s_next);
    if (delta_out) *delta_out = delta;
    return model.gradient(problem.feature(tr.s)) * delta;
}

namespace detail {
inline void require_finite(const VectorXd& theta, std::int64_t t) {
    if (!theta.allFinite()) {
        throw NonFiniteUpdate("parameters became non-finite at step " + std::to_string(t) +
                              "; the step size is too large for this problem");
    }
}
}  // namespace detail

/// theta_{t+1/2} = theta_t + alpha_t g(theta_t);  theta_{t+1} = Proj(theta_{t+1/2}).
/// Works for any ValueModel; with LinearParams this is classical linear TD(0).
template <ValueModel M>
void step_projected(TdState<M>& state, const Transition& tr, const Problem& problem, const StepSize& step,
                    double omega) {
    double delta = 0.0;
    const VectorXd g = td_direction(state.params, problem, tr, &delta);
    VectorXd half = state.params.theta() + step.at(state.t) * g;
    detail::require_finite(half, state.t);
    state.params.theta() = project_ball(half, state.theta0, omega);
    state.last_delta = delta;
    ++state.t;
}

inline void step_projected_neural(TdState<NetParams>& state, const Transition& tr, const Problem& problem,
                                  const StepSize& step, double omega) {
    step_projected(state, tr, problem, step, omega);
}

/// Unprojected TD: theta_{t+1} = theta_t + alpha_t g(theta_t). Intended for
/// single-hidden-layer networks with alpha_t = 1 / (lambda (t + 1)).
template <ValueModel M>
void step_unprojected(TdState<M>& state, const Transition& tr, const Problem& problem, const StepSize& step) {
    step_projected(state, tr, problem, step, std::numeric_limits<double>::infinity());
}

inline constexpr double kMeanPathFormTol = 1e-10;

/// Exact expected update over s ~ mu, s' ~ P(.|s):
///   gbar = sum_s mu(s) grad V(s) sum_s' P(s'|s) [R(s) + gamma V(s') - V(s)].
/// The equivalent form grad V^T D (gamma P - I)(V - V*) is evaluated too and
/// the two are required to agree; disagreement throws FormMismatch.
template <ValueModel M>
VectorXd mean_path_g(const M& model, const Problem& problem) {
    const auto& chain = problem.chain;
    const auto n = chain.size();
    const VectorXd V = value_vector(model, problem.features);
    const MatrixXd J = jacobian(model, problem.features);

    VectorXd by_enumeration = VectorXd::Zero(J.cols());
    for (Eigen::Index s = 0; s < n; ++s) {
        double expected_delta = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) expected_delta += chain.P(s, t) * (chain.R(s) + chain.gamma * V(t) - V(s));
        by_enumeration += chain.mu(s) * expected_delta * J.row(s).transpose();
    }

    const VectorXd diff = V - chain.v_star;
    const VectorXd by_matrix = J.transpose() * chain.mu.cwiseProduct(chain.gamma * (chain.P * diff) - diff);

    const double gap = (by_enumeration - by_matrix).lpNorm<Eigen::Infinity>();
    if (gap > kMeanPathFormTol * (1.0 + by_matrix.lpNorm<Eigen::Infinity>())) {
        throw FormMismatch("mean-path direction forms differ by " + std::to_string(gap));
    }
    return by_enumeration;
}

/// theta_{t+1} = Proj(theta_t + alpha_t gbar(theta_t)).
template <ValueModel M>
void step_mean_path(TdState<M>& state, const Problem& problem, const StepSize& step, double omega) {
    const VectorXd g = mean_path_g(state.params, problem);
    VectorXd half = state.params.theta() + step.at(state.t) * g;
    detail::require_finite(half, state.t);
    state.params.theta() = project_ball(half, state.theta0, omega);
    state.last_delta = 0.0;
    ++state.t;
}

// ---------------------------------------------------------------------------
// Representable targets
// ---------------------------------------------------------------------------

template <ValueModel M>
struct RepresentableTarget {
    M model;            // parameters theta_hat_star
    Problem problem;    // rewards rewritten so that V* = V(theta_hat_star)
};

/// theta_hat_star = theta0 + rho u for a random unit u, and R := (I - gamma P) V(theta_hat_star),
/// so the target is exactly representable (epsilon = 0). r_max becomes max |R|.
template <ValueModel M>
RepresentableTarget<M> make_representable_target(const M& model, const Problem& problem, double rho,
                                                 std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::target);
    const VectorXd u = detail::random_unit(rng, model.theta().size());
    M star = with_theta(model, model.theta() + rho * u);

    Problem rewritten = problem;
    auto& chain = rewritten.chain;
    const VectorXd v = value_vector(star, problem.features);
    chain.R = v - chain.gamma * (chain.P * v);
    chain.v_star = v;
    chain.r_max = std::max(chain.R.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    return {std::move(star), std::move(rewritten)};
}

// ---------------------------------------------------------------------------
// Decomposition and bound checks
// ---------------------------------------------------------------------------

/// The three-term split of the mean-path direction around a point theta_mid
/// on the segment between theta and theta_hat_star:
///   g1 = J(mid)^T D (gamma P - I)(V(theta) - V(theta_hat_star))
///   g2 = (J(theta) - J(mid))^T D (gamma P - I)(V(theta) - V(theta_hat_star))
///   g3 = J(theta)^T D (gamma P - I)(V(theta_hat_star) - V*)
struct MeanPathDecomposition {
    VectorXd g;
    VectorXd g1;
    VectorXd g2;
    VectorXd g3;
    double residual = 0.0;
};

namespace detail {
inline VectorXd td_operator(const PolicyChain& chain, const VectorXd& f) {
    return chain.mu.cwiseProduct(chain.gamma * (chain.P * f) - f);
}
}  // namespace detail

inline constexpr double kDecompositionTol = 1e-9;

template <ValueModel M>
MeanPathDecomposition lemma_a4_decomposition(const M& model, const M& theta_hat_star, const Problem& problem,
                                             const VectorXd& theta_mid) {
    const auto& chain = problem.chain;
    const M mid = with_theta(model, theta_mid);
    const VectorXd V = value_vector(model, problem.features);
    const VectorXd V_hat = value_vector(theta_hat_star, problem.features);
    const MatrixXd J = jacobian(model, problem.features);
    const MatrixXd J_mid = jacobian(mid, problem.features);
    const VectorXd e = detail::td_operator(chain, V - V_hat);

    MeanPathDecomposition out;
    out.g = mean_path_g(model, problem);
    out.g1 = J_mid.transpose() * e;
    out.g2 = (J - J_mid).transpose() * e;
    out.g3 = J.transpose() * detail::td_operator(chain, V_hat - chain.v_star);
    out.residual = (out.g - (out.g1 + out.g2 + out.g3)).norm();
    return out;
}

/// Returns the residual ||gbar - (g1 + g2 + g3)||; throws IdentityViolation
/// when it exceeds 1e-9 (1 + ||gbar||).
template <ValueModel M>
double lemma_a4_decomposition_check(const M& model, const M& theta_hat_star, const Problem& problem,
                                    const VectorXd& theta_mid) {
    const auto d = lemma_a4_decomposition(model, theta_hat_star, problem, theta_mid);
    if (d.residual > kDecompositionTol * (1.0 + d.g.norm())) {
        throw IdentityViolation("mean-path decomposition residual " + std::to_string(d.residual));
    }
    return d.residual;
}

struct MidPoint {
    double lambda = 0.0;
    VectorXd theta;
    double residual = 0.0;
};

/// Finds lambda in [0, 1] such that theta_mid = lambda theta + (1 - lambda) theta_hat_star
/// satisfies (theta - theta_hat_star)^T J(mid)^T e = (V(theta) - V(theta_hat_star))^T e with
/// e = D (gamma P - I)(V(theta) - V(theta_hat_star)). The root exists by the mean
/// value theorem; it is bracketed on a 64-cell grid and refined by bisection.
template <ValueModel M>
MidPoint find_mid_point(const M& model, const M& theta_hat_star, const Problem& problem, double tol = 1e-13,
                        int max_iter = 200) {
    const auto& chain = problem.chain;
    const VectorXd V = value_vector(model, problem.features);
    const VectorXd V_hat = value_vector(theta_hat_star, problem.features);
    const VectorXd e = detail::td_operator(chain, V - V_hat);
    const double target = (V - V_hat).dot(e);
    const VectorXd dir = model.theta() - theta_hat_star.theta();

    auto point = [&](double lam) { return VectorXd(lam * model.theta() + (1.0 - lam) * theta_hat_star.theta()); };
    auto phi = [&](double lam) {
        const M mid = with_theta(model, point(lam));
        return (jacobian(mid, problem.features) * dir).dot(e) - target;
    };

    constexpr int kGrid = 64;
    double lo = 0.0, f_lo = phi(0.0);
    double best_lam = 0.0, best_abs = std::abs(f_lo);
    double hi = -1.0, f_hi = 0.0;
    for (int i = 1; i <= kGrid; ++i) {
        const double lam = static_cast<double>(i) / kGrid;
        const double f = phi(lam);
        if (std::abs(f) < best_abs) {
            best_abs = std::abs(f);
            best_lam = lam;
        }
        if ((f_lo < 0.0) != (f < 0.0) || f == 0.0) {
            hi = lam;
            f_hi = f;
            break;
        }
        lo = lam;
        f_lo = f;
    }
    if (hi >= 0.0) {
        for (int it = 0; it < max_iter && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double f = phi(mid);
            if (std::abs(f) < best_abs) {
                best_abs = std::abs(f);
                best_lam = mid;
            }
            if (std::abs(f) <= tol * (1.0 + std::abs(target))) break;
            if ((f_lo < 0.0) != (f < 0.0)) {
                hi = mid;
                f_hi = f;
            } else {
                lo = mid;
                f_lo = f;
            }
        }
    }
    (void)f_hi;
    return {best_lam, point(best_lam), best_abs};
}

struct GNormBound {
    double measured = 0.0;
    double bound = 0.0;
};

/// Checks the per-step size bound on g(theta) = grad V(s) delta. For every
/// transition (s, s') with P(s'|s) > 0, ||g||^2 must not exceed
///   5 ||grad V(s)||^2 [ f^2 + gamma^2 f^2 + eps^2 + gamma^2 eps^2 + gamma^2 (2 r_max / (1 - gamma))^2 ],
/// with f = max_s |V(s, theta_hat_star) - V(s, theta)| and eps >= ||V(theta_hat_star) - V*||_inf.
/// Returns the largest measured ||g||^2 and the largest bound.
template <ValueModel M>
GNormBound g_norm_bound_check(const M& model, const M& theta_hat_star, const Problem& problem, double epsilon) {
    const auto& chain = problem.chain;
    const auto n = chain.size();
    const VectorXd V = value_vector(model, problem.features);
    const VectorXd V_hat = value_vector(theta_hat_star, problem.features);
    const double actual_eps = (V_hat - chain.v_star).lpNorm<Eigen::Infinity>();
    if (epsilon + 1e-12 < actual_eps) {
        throw NotRepresentable("epsilon " + std::to_string(epsilon) + " is below the actual approximation error " +
                               std::to_string(actual_eps));
    }
    const double f_hat = (V_hat - V).lpNorm<Eigen::Infinity>();
    const double g2 = chain.gamma * chain.gamma;
    const double spread = 2.0 * chain.r_max / (1.0 - chain.gamma);
    const double bracket =
        f_hat * f_hat * (1.0 + g2) + epsilon * epsilon * (1.0 + g2) + g2 * spread * spread;

    GNormBound out;
    for (Eigen::Index s = 0; s < n; ++s) {
        const double grad_sq = model.gradient(problem.feature(s)).squaredNorm();
        const double bound = 5.0 * grad_sq * bracket;
        out.bound = std::max(out.bound, bound);
        for (Eigen::Index t = 0; t < n; ++t) {
            if (chain.P(s, t) <= 0.0) continue;
            const double delta = chain.R(s) + chain.gamma * V(t) - V(s);
            const double measured = grad_sq * delta * delta;
            out.measured = std::max(out.measured, measured);
            if (measured > bound * (1.0 + 1e-12)) {
                throw BoundViolation("||g||^2 = " + std::to_string(measured) + " exceeds its bound " +
                                     std::to_string(bound) + " at transition (" + std::to_string(s) + ", " +
                                     std::to_string(t) + ")");
            }
        }
    }
    return out;
}

/// Threshold on lambda above which the alpha_t = 1/(lambda (t+1)) schedule makes
/// the contraction coefficient positive: 3 l^4 (1 + gamma^2) / (2 (1 - gamma) sigma^2).
inline double unprojected_lambda_threshold(double sigma_min, double l, double gamma) {
    if (!(sigma_min > 0.0)) {
        throw BoundViolation("sigma_min^{2,D} is zero; the unprojected schedule has no admissible lambda");
    }
    return 3.0 * std::pow(l, 4) * (1.0 + gamma * gamma) / (2.0 * (1.0 - gamma) * sigma_min * sigma_min);
}

}  // namespace ntd
