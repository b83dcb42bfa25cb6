#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neural_td/errors.hpp"
#include "neural_td/random.hpp"

namespace ntd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kProbabilityTol = 1e-12;

/// A finite MDP. `states` holds one feature vector per row (n x d);
/// `kernel[a]` is the n x n transition matrix of action a; `reward` is n x A.
struct Mdp {
    MatrixXd states;
    std::vector<std::string> actions;
    std::vector<MatrixXd> kernel;
    MatrixXd reward;
    double gamma = 0.9;
    double r_max = 1.0;

    Eigen::Index num_states() const { return states.rows(); }
    Eigen::Index feature_dim() const { return states.cols(); }
    Eigen::Index num_actions() const { return static_cast<Eigen::Index>(actions.size()); }
};

/// pi(s, a), n x A, rows sum to one.
struct Policy {
    MatrixXd probs;
};

/// The Markov reward process a fixed policy induces on an MDP, together with
/// its exact analytics.
struct PolicyChain {
    MatrixXd P;
    VectorXd R;
    VectorXd mu;
    VectorXd v_star;
    double gamma = 0.9;
    double r_max = 1.0;

    Eigen::Index size() const { return P.rows(); }
};

namespace detail {

inline bool is_row_stochastic(const MatrixXd& P, double tol = kProbabilityTol) {
    if ((P.array() < 0.0).any() || !P.allFinite()) return false;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        if (std::abs(P.row(i).sum() - 1.0) > tol) return false;
    }
    return true;
}

inline std::vector<int> bfs_levels(const MatrixXd& P, bool reverse) {
    const auto n = P.rows();
    std::vector<int> level(static_cast<std::size_t>(n), -1);
    std::queue<Eigen::Index> frontier;
    level[0] = 0;
    frontier.push(0);
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        for (Eigen::Index v = 0; v < n; ++v) {
            const double w = reverse ? P(v, u) : P(u, v);
            if (w > 0.0 && level[static_cast<std::size_t>(v)] < 0) {
                level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
                frontier.push(v);
            }
        }
    }
    return level;
}

}  // namespace detail

/// Throws NonErgodicChain unless the positive-entry graph of P is strongly
/// connected and has period one.
inline void check_ergodic(const MatrixXd& P) {
    const auto n = P.rows();
    if (n == 0 || P.cols() != n) throw DimensionMismatch("transition matrix must be square and non-empty");
    const auto fwd = detail::bfs_levels(P, false);
    const auto bwd = detail::bfs_levels(P, true);
    for (Eigen::Index s = 0; s < n; ++s) {
        if (fwd[static_cast<std::size_t>(s)] < 0 || bwd[static_cast<std::size_t>(s)] < 0) {
            throw NonErgodicChain("chain is reducible: state " + std::to_string(s) +
                                  " is not mutually reachable with state 0");
        }
    }
    // The period is the gcd of level[u] + 1 - level[v] over all edges u -> v.
    int period = 0;
    for (Eigen::Index u = 0; u < n; ++u) {
        for (Eigen::Index v = 0; v < n; ++v) {
            if (P(u, v) > 0.0) {
                const int diff = fwd[static_cast<std::size_t>(u)] + 1 - fwd[static_cast<std::size_t>(v)];
                period = std::gcd(period, std::abs(diff));
            }
        }
    }
    if (period != 1) {
        throw NonErgodicChain("chain is periodic with period " + std::to_string(period));
    }
}

/// Stationary distribution of an ergodic chain: dense solve of
/// (P^T - I) mu = 0 with sum(mu) = 1, falling back to power iteration when the
/// solve is inaccurate.
inline VectorXd stationary_distribution(const MatrixXd& P) {
    const auto n = P.rows();
    MatrixXd A = P.transpose() - MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    VectorXd rhs = VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    VectorXd mu = A.fullPivLu().solve(rhs);

    auto acceptable = [&](const VectorXd& m) {
        return m.allFinite() && m.minCoeff() > -1e-13 &&
               (P.transpose() * m - m).lpNorm<Eigen::Infinity>() <= 1e-12;
    };
    if (!acceptable(mu)) {
        mu = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
        for (int it = 0; it < 1'000'000; ++it) {
            VectorXd next = P.transpose() * mu;
            next /= next.sum();
            const double change = (next - mu).lpNorm<Eigen::Infinity>();
            mu = std::move(next);
            if (change < 1e-12) break;
        }
    }
    mu = mu.cwiseMax(0.0);
    mu /= mu.sum();
    return mu;
}

/// Solves (I - gamma P) V = R.
inline VectorXd solve_values(const MatrixXd& P, const VectorXd& R, double gamma) {
    const auto n = P.rows();
    const MatrixXd A = MatrixXd::Identity(n, n) - gamma * P;
    Eigen::PartialPivLU<MatrixXd> lu(A);
    VectorXd v = lu.solve(R);
    if (!v.allFinite() || (A * v - R).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + R.lpNorm<Eigen::Infinity>())) {
        throw SingularSystem("(I - gamma P) V = R could not be solved");
    }
    return v;
}

/// Builds a chain directly from (P, R). Validates stochasticity and
/// ergodicity, then computes mu and V*.
inline PolicyChain make_chain(MatrixXd P, VectorXd R, double gamma, double r_max) {
    if (P.rows() != P.cols() || R.size() != P.rows()) {
        throw DimensionMismatch("P must be n x n and R must have n entries");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidMdp("gamma must lie strictly inside (0, 1)");
    if (!detail::is_row_stochastic(P)) throw InvalidMdp("P is not row-stochastic");
    check_ergodic(P);
    PolicyChain chain;
    chain.mu = stationary_distribution(P);
    chain.v_star = solve_values(P, R, gamma);
    chain.P = std::move(P);
    chain.R = std::move(R);
    chain.gamma = gamma;
    chain.r_max = r_max;
    return chain;
}

/// Throws InvalidMdp (or InvalidDimension) when any MDP invariant fails.
inline void validate(const Mdp& mdp) {
    const auto n = mdp.num_states();
    const auto A = mdp.num_actions();
    if (n < 1 || mdp.feature_dim() < 1) throw InvalidDimension("MDP needs at least one state and one feature");
    if (A < 1) throw InvalidMdp("MDP needs at least one action");
    if (static_cast<Eigen::Index>(mdp.kernel.size()) != A) throw InvalidMdp("kernel must have one matrix per action");
    if (mdp.reward.rows() != n || mdp.reward.cols() != A) throw InvalidMdp("reward table must be n x A");
    if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) throw InvalidMdp("gamma must lie strictly inside (0, 1)");
    if (!(mdp.r_max > 0.0)) throw InvalidMdp("r_max must be positive");
    if (!mdp.states.allFinite() || !mdp.reward.allFinite()) throw InvalidMdp("non-finite states or rewards");
    for (Eigen::Index s = 0; s < n; ++s) {
        if (mdp.states.row(s).norm() > 1.0 + 1e-12) {
            throw InvalidMdp("state " + std::to_string(s) + " has feature norm above 1");
        }
    }
    if (mdp.reward.cwiseAbs().maxCoeff() > mdp.r_max) throw InvalidMdp("|r(s,a)| exceeds r_max");
    for (Eigen::Index a = 0; a < A; ++a) {
        const auto& K = mdp.kernel[static_cast<std::size_t>(a)];
        if (K.rows() != n || K.cols() != n) throw InvalidMdp("kernel matrices must be n x n");
        if (!detail::is_row_stochastic(K)) {
            throw InvalidMdp("kernel of action '" + mdp.actions[static_cast<std::size_t>(a)] + "' is not row-stochastic");
        }
    }
}

inline void validate(const Policy& policy, const Mdp& mdp) {
    if (policy.probs.rows() != mdp.num_states() || policy.probs.cols() != mdp.num_actions()) {
        throw DimensionMismatch("policy must be n x A");
    }
    if (!detail::is_row_stochastic(policy.probs)) throw InvalidMdp("policy rows must be probability vectors");
}

inline Policy uniform_policy(const Mdp& mdp) {
    return Policy{MatrixXd::Constant(mdp.num_states(), mdp.num_actions(), 1.0 / static_cast<double>(mdp.num_actions()))};
}

/// P(s'|s) = sum_a pi(s,a) P_env(s'|s,a); R(s) = sum_a pi(s,a) r(s,a).
inline PolicyChain induce_chain(const Mdp& mdp, const Policy& policy) {
    validate(mdp);
    validate(policy, mdp);
    const auto n = mdp.num_states();
    MatrixXd P = MatrixXd::Zero(n, n);
    for (Eigen::Index a = 0; a < mdp.num_actions(); ++a) {
        P += policy.probs.col(a).asDiagonal() * mdp.kernel[static_cast<std::size_t>(a)];
    }
    VectorXd R = (policy.probs.array() * mdp.reward.array()).rowwise().sum();
    return make_chain(std::move(P), std::move(R), mdp.gamma, mdp.r_max);
}

struct MixingProfile {
    int tau_mix = 0;
    double C = 0.0;
    double beta = 0.0;
    /// max_s TV(P^t[s,:], mu) for t = 0..tau_mix.
    std::vector<double> max_tv;
};

inline double max_tv_distance(const MatrixXd& Pt, const VectorXd& mu) {
    return 0.5 * (Pt.rowwise() - mu.transpose()).cwiseAbs().rowwise().sum().maxCoeff();
}

/// Smallest t >= 1 with max_s ||P^t[s,:] - mu||_TV <= eps_mix, plus a
/// geometric envelope C beta^t of the max-TV sequence: beta from a least
/// squares fit of log TV against t, C the smallest constant that makes the
/// envelope dominate every observed point.
inline MixingProfile mixing_profile(const PolicyChain& chain, double eps_mix, int max_steps = 100000) {
    if (!(eps_mix > 0.0 && eps_mix < 1.0)) throw InvalidMdp("eps_mix must lie in (0, 1)");
    const auto n = chain.size();
    MixingProfile out;
    out.max_tv.push_back(max_tv_distance(MatrixXd::Identity(n, n), chain.mu));
    MatrixXd Pt = chain.P;
    for (int t = 1;; ++t) {
        const double tv = max_tv_distance(Pt, chain.mu);
        out.max_tv.push_back(tv);
        if (tv <= eps_mix) {
            out.tau_mix = t;
            break;
        }
        if (t >= max_steps) {
            throw MixingHorizonExceeded("max TV still " + std::to_string(tv) + " after " +
                                        std::to_string(max_steps) + " steps");
        }
        Pt = Pt * chain.P;
    }

    // Fit over strictly positive entries only; an exactly mixed chain leaves
    // just t = 0, in which case beta is pinned at the smallest admissible value.
    double st = 0, sy = 0, stt = 0, sty = 0;
    int count = 0;
    for (std::size_t t = 0; t < out.max_tv.size(); ++t) {
        if (out.max_tv[t] > 1e-300) {
            const double y = std::log(out.max_tv[t]);
            st += static_cast<double>(t);
            sy += y;
            stt += static_cast<double>(t * t);
            sty += static_cast<double>(t) * y;
            ++count;
        }
    }
    double beta = 1e-12;
    if (count >= 2) {
        const double slope = (count * sty - st * sy) / (count * stt - st * st);
        beta = std::exp(slope);
    }
    out.beta = std::clamp(beta, 1e-12, 1.0 - 1e-12);
    double C = 0.0;
    for (std::size_t t = 0; t < out.max_tv.size(); ++t) {
        C = std::max(C, out.max_tv[t] / std::pow(out.beta, static_cast<double>(t)));
    }
    out.C = C;
    return out;
}

// ---------------------------------------------------------------------------
// Environment generators. All features satisfy ||s|| <= 1 by construction.
// ---------------------------------------------------------------------------

inline constexpr double kRandomMdpSmoothing = 1e-3;

inline void add_smoothing(MatrixXd& K, double mass) {
    K.array() += mass;
    for (Eigen::Index i = 0; i < K.rows(); ++i) K.row(i) /= K.row(i).sum();
}

/// Random MDP with unit-norm Gaussian features, exponential-weight transition
/// rows smoothed by a uniform mass of 1e-3, and rewards uniform in [-1, 1].
inline Mdp random_mdp(int n, int d, int num_actions, std::uint64_t seed, double gamma = 0.9) {
    if (n < 2) throw InvalidDimension("random_mdp needs n >= 2");
    if (d < 1 || num_actions < 1) throw InvalidDimension("random_mdp needs d >= 1 and at least one action");
    Rng rng = make_rng(seed, Stream::environment);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    Mdp mdp;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    mdp.states.resize(n, d);
    for (int s = 0; s < n; ++s) {
        double norm = 0.0;
        do {
            for (int j = 0; j < d; ++j) mdp.states(s, j) = normal(rng);
            norm = mdp.states.row(s).norm();
        } while (norm < 1e-8);
        mdp.states.row(s) /= norm;
    }
    for (int a = 0; a < num_actions; ++a) {
        mdp.actions.push_back("a" + std::to_string(a));
        MatrixXd K(n, n);
        for (int s = 0; s < n; ++s) {
            for (int t = 0; t < n; ++t) K(s, t) = expo(rng);
            K.row(s) /= K.row(s).sum();
        }
        add_smoothing(K, kRandomMdpSmoothing);
        mdp.kernel.push_back(std::move(K));
    }
    mdp.reward.resize(n, num_actions);
    for (int s = 0; s < n; ++s)
        for (int a = 0; a < num_actions; ++a) mdp.reward(s, a) = unif(rng);
    return mdp;
}

/// width x height grid, state index y * width + x, actions up/down/left/right.
/// Bumping into a wall leaves the agent in place. With probability `slip` the
/// move direction is drawn uniformly from the four actions instead. The goal
/// cell (top right) pays +1 and teleports back to the origin under any action;
/// the pit cell (bottom right) pays -1. Features are (u, v, 1)/sqrt(3) with
/// u, v the coordinates rescaled to [-1, 1].
inline Mdp gridworld(int width, int height, double slip, double gamma = 0.9) {
    if (width < 1 || height < 1 || width * height < 2) throw InvalidDimension("gridworld needs at least two cells");
    if (!(slip >= 0.0 && slip <= 1.0)) throw InvalidMdp("slip must lie in [0, 1]");
    const int n = width * height;
    auto index = [width](int x, int y) { return y * width + x; };
    const int goal = index(width - 1, height - 1);
    const int pit = index(width - 1, 0);
    const int start = 0;

    Mdp mdp;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    mdp.actions = {"up", "down", "left", "right"};
    const int dx[4] = {0, 0, -1, 1};
    const int dy[4] = {1, -1, 0, 0};

    mdp.states.resize(n, 3);
    const double scale = 1.0 / std::sqrt(3.0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = width > 1 ? 2.0 * x / (width - 1) - 1.0 : 0.0;
            const double v = height > 1 ? 2.0 * y / (height - 1) - 1.0 : 0.0;
            mdp.states.row(index(x, y)) << u * scale, v * scale, scale;
        }
    }

    auto move = [&](int s, int dir) {
        const int x = s % width, y = s / width;
        const int nx = x + dx[dir], ny = y + dy[dir];
        if (nx < 0 || nx >= width || ny < 0 || ny >= height) return s;
        return index(nx, ny);
    };

    mdp.reward = MatrixXd::Zero(n, 4);
    for (int a = 0; a < 4; ++a) {
        MatrixXd K = MatrixXd::Zero(n, n);
        for (int s = 0; s < n; ++s) {
            if (s == goal) {
                K(s, start) = 1.0;
                continue;
            }
            K(s, move(s, a)) += 1.0 - slip;
            for (int b = 0; b < 4; ++b) K(s, move(s, b)) += slip / 4.0;
        }
        mdp.kernel.push_back(std::move(K));
    }
    mdp.reward.row(goal).setConstant(1.0);
    if (pit != goal && pit != start) mdp.reward.row(pit).setConstant(-1.0);
    return mdp;
}

/// n states on a line with actions left/right; a move succeeds with
/// probability p_forward and otherwise stays put. The right end pays +1.
/// A uniform smoothing mass (default 1e-3) is added to every row.
inline Mdp chain_env(int n, double p_forward, double smoothing = kRandomMdpSmoothing, double gamma = 0.9) {
    if (n < 2) throw InvalidDimension("chain_env needs n >= 2");
    if (!(p_forward >= 0.0 && p_forward <= 1.0)) throw InvalidMdp("p_forward must lie in [0, 1]");
    Mdp mdp;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    mdp.actions = {"left", "right"};
    mdp.states.resize(n, 2);
    const double scale = 1.0 / std::sqrt(2.0);
    for (int s = 0; s < n; ++s) mdp.states.row(s) << (2.0 * s / (n - 1) - 1.0) * scale, scale;
    for (int a = 0; a < 2; ++a) {
        const int step = a == 0 ? -1 : 1;
        MatrixXd K = MatrixXd::Zero(n, n);
        for (int s = 0; s < n; ++s) {
            const int t = std::clamp(s + step, 0, n - 1);
            K(s, t) += p_forward;
            K(s, s) += 1.0 - p_forward;
        }
        if (smoothing > 0.0) add_smoothing(K, smoothing);
        mdp.kernel.push_back(std::move(K));
    }
    mdp.reward = MatrixXd::Zero(n, 2);
    mdp.reward.row(n - 1).setConstant(1.0);
    return mdp;
}

}  // namespace ntd
