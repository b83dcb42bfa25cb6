#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "neural_td/errors.hpp"
#include "neural_td/mdp.hpp"

namespace ntd {

/// Error functionals over functions on the state space of a policy chain.
///
///   ||f||_D^2   = sum_s mu(s) f(s)^2
///   ||f||_Dir^2 = 1/2 sum_{s,s'} mu(s) P(s'|s) (f(s') - f(s))^2
///   N(f)        = (1 - gamma) ||f||_D^2 + gamma ||f||_Dir^2
///
/// N is the square of a norm and satisfies f^T D (gamma P - I) f = -N(f)
/// exactly, which is what makes mean-path TD a gradient splitting.

struct NormReport {
    double d_norm_sq = 0.0;
    double dirichlet_sq = 0.0;
    double n_value = 0.0;
    double gamma = 0.0;
};

namespace detail {
inline void check_state_function(const VectorXd& f, const PolicyChain& chain) {
    if (f.size() != chain.size()) {
        throw DimensionMismatch("state function has " + std::to_string(f.size()) + " entries, chain has " +
                                std::to_string(chain.size()) + " states");
    }
}
}  // namespace detail

inline double d_norm_sq(const VectorXd& f, const PolicyChain& chain) {
    detail::check_state_function(f, chain);
    return chain.mu.dot(f.cwiseAbs2());
}

inline double dirichlet_sq(const VectorXd& f, const PolicyChain& chain) {
    detail::check_state_function(f, chain);
    const auto n = chain.size();
    double total = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
        double row = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double diff = f(t) - f(s);
            row += chain.P(s, t) * diff * diff;
        }
        total += chain.mu(s) * row;
    }
    return 0.5 * total;
}

/// f^T D (gamma P - I) f.
inline double td_quadratic_form(const VectorXd& f, const PolicyChain& chain) {
    detail::check_state_function(f, chain);
    const VectorXd Af = chain.gamma * (chain.P * f) - f;
    return f.dot(chain.mu.cwiseProduct(Af));
}

inline constexpr double kLemmaA1Tol = 1e-10;

/// Computes all three functionals and verifies the exact identity
/// f^T D (gamma P - I) f = -N(f); a violation is an implementation bug.
inline NormReport n_functional(const VectorXd& f, const PolicyChain& chain) {
    NormReport r;
    r.gamma = chain.gamma;
    r.d_norm_sq = d_norm_sq(f, chain);
    r.dirichlet_sq = dirichlet_sq(f, chain);
    r.n_value = (1.0 - chain.gamma) * r.d_norm_sq + chain.gamma * r.dirichlet_sq;
    const double q = td_quadratic_form(f, chain);
    if (std::abs(q + r.n_value) > kLemmaA1Tol * (1.0 + r.n_value)) {
        throw IdentityViolation("f^T D (gamma P - I) f = " + std::to_string(q) + " but N(f) = " +
                                std::to_string(r.n_value));
    }
    return r;
}

/// min_{x != 0} ||J x||_D / ||x||, i.e. the smallest singular value of
/// diag(sqrt(mu)) J taken over all p input directions. With more columns than
/// rows J has a null space and the minimum is exactly zero.
inline double sigma_min_2d(const MatrixXd& J, const PolicyChain& chain) {
    if (J.rows() != chain.size()) throw DimensionMismatch("Jacobian rows must match the number of states");
    if (J.cols() < 1) throw DimensionMismatch("Jacobian needs at least one column");
    if (J.cols() > J.rows()) return 0.0;
    const MatrixXd W = chain.mu.cwiseSqrt().asDiagonal() * J;
    Eigen::BDCSVD<MatrixXd> svd(W);
    return svd.singularValues().minCoeff();
}

inline constexpr double kRepresentableTol = 1e-8;

/// |(theta - theta*)^T gbar(theta) + N(features (theta - theta*))| for the
/// linear model V(theta) = features * theta whose target V* = features * theta*.
/// Here gbar(theta) = features^T D (gamma P - I) features (theta - theta*).
inline double splitting_residual(const VectorXd& theta, const VectorXd& theta_star, const MatrixXd& features,
                                 const PolicyChain& chain) {
    if (features.rows() != chain.size() || features.cols() != theta.size() || theta.size() != theta_star.size()) {
        throw DimensionMismatch("splitting_residual: features must be n x p and both parameter vectors p-long");
    }
    const double miss = (features * theta_star - chain.v_star).lpNorm<Eigen::Infinity>();
    if (miss > kRepresentableTol) {
        throw NotRepresentable("||features theta* - V*||_inf = " + std::to_string(miss));
    }
    const VectorXd diff = theta - theta_star;
    const VectorXd f = features * diff;
    const VectorXd gbar = features.transpose() * chain.mu.cwiseProduct(chain.gamma * (chain.P * f) - f);
    const double n_value = (1.0 - chain.gamma) * d_norm_sq(f, chain) + chain.gamma * dirichlet_sq(f, chain);
    return std::abs(diff.dot(gbar) + n_value);
}

}  // namespace ntd
