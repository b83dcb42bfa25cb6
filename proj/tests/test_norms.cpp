#include <catch_amalgamated.hpp>

#include "neural_td/norms.hpp"
#include "neural_td/verify.hpp"

using namespace ntd;
using Catch::Approx;

namespace {

PolicyChain uniform2(double gamma) {
    return make_chain(MatrixXd::Constant(2, 2, 0.5), VectorXd::Ones(2), gamma, 1.0);
}

VectorXd vec2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("D-norm") {
    const auto c = uniform2(0.5);
    CHECK(d_norm_sq(vec2(1, -1), c) == Approx(1.0));
    CHECK(d_norm_sq(VectorXd::Zero(2), c) == 0.0);
    const auto r = verify::random_chain(7, 3);
    CHECK(d_norm_sq(VectorXd::Constant(7, 3.0), r) == Approx(9.0).epsilon(1e-12));
    CHECK_THROWS_AS(d_norm_sq(VectorXd::Zero(3), c), DimensionMismatch);
}

TEST_CASE("Dirichlet semi-norm") {
    const auto c = uniform2(0.5);
    CHECK(dirichlet_sq(vec2(1, -1), c) == Approx(1.0));
    const auto r = verify::random_chain(9, 4);
    CHECK(dirichlet_sq(VectorXd::Constant(9, -2.5), r) == Approx(0.0).margin(1e-14));
    CHECK_THROWS_AS(dirichlet_sq(VectorXd::Zero(3), c), DimensionMismatch);
}

TEST_CASE("Dirichlet on an i.i.d. chain is the variance under mu") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng = make_rng(seed, Stream::verify);
        VectorXd mu = verify::random_vector(rng, 6).cwiseAbs().array() + 0.05;
        mu /= mu.sum();
        MatrixXd P(6, 6);
        P.rowwise() = mu.transpose();
        const auto c = make_chain(P, VectorXd::Zero(6), 0.7, 1.0);
        const VectorXd f = verify::random_vector(rng, 6);
        const double mean = c.mu.dot(f);
        CHECK(dirichlet_sq(f, c) == Approx(d_norm_sq(f, c) - mean * mean).epsilon(1e-10));
    }
}

TEST_CASE("N functional and the quadratic-form identity") {
    const auto c = uniform2(0.5);
    const auto rep = n_functional(vec2(1, -1), c);
    CHECK(rep.d_norm_sq == Approx(1.0));
    CHECK(rep.dirichlet_sq == Approx(1.0));
    CHECK(rep.n_value == Approx(1.0));
    CHECK(td_quadratic_form(vec2(1, -1), c) == Approx(-1.0));

    const auto zero = n_functional(VectorXd::Zero(2), c);
    CHECK(zero.n_value == 0.0);
    CHECK(n_functional(vec2(3, 3), c).n_value == Approx(0.5 * 9.0));

    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto r = verify::random_chain(2 + static_cast<int>(seed % 30), seed);
        Rng rng = make_rng(seed, Stream::verify, 9);
        const VectorXd f = verify::random_vector(rng, r.size(), 5.0);
        const auto nr = n_functional(f, r);
        CHECK(nr.n_value == Approx((1 - r.gamma) * nr.d_norm_sq + r.gamma * nr.dirichlet_sq).epsilon(1e-12));
        CHECK(nr.n_value > 0.0);
        CHECK(std::abs(td_quadratic_form(f, r) + nr.n_value) <= 1e-10 * (1 + nr.n_value));
    }
}

TEST_CASE("sigma_min^{2,D}") {
    const auto c = uniform2(0.5);
    CHECK(sigma_min_2d(MatrixXd::Identity(2, 2), c) == Approx(std::sqrt(0.5)));
    MatrixXd J(2, 2);
    J << 1, 0, 2, 0;
    CHECK(sigma_min_2d(J, c) == Approx(0.0).margin(1e-15));
    const auto r = verify::random_chain(5, 11);
    CHECK(sigma_min_2d(3.0 * MatrixXd::Identity(5, 5), r) == Approx(3.0 * std::sqrt(r.mu.minCoeff())).epsilon(1e-12));
    // More parameters than states: some direction is invisible to every state.
    CHECK(sigma_min_2d(MatrixXd::Ones(2, 3), c) == 0.0);
    CHECK_THROWS_AS(sigma_min_2d(MatrixXd::Ones(3, 1), c), DimensionMismatch);
}

TEST_CASE("sigma_min^{2,D} matches a brute-force search over directions in 2-D") {
    const auto r = verify::random_chain(6, 2);
    Rng rng = make_rng(2, Stream::verify, 10);
    MatrixXd J(6, 2);
    J.col(0) = verify::random_vector(rng, 6);
    J.col(1) = verify::random_vector(rng, 6);
    double best = INFINITY;
    for (int k = 0; k < 200000; ++k) {
        const double a = M_PI * k / 200000.0;
        Eigen::Vector2d x(std::cos(a), std::sin(a));
        best = std::min(best, std::sqrt(d_norm_sq(J * x, r)));
    }
    CHECK(sigma_min_2d(J, r) == Approx(best).epsilon(1e-6));
}

TEST_CASE("gradient splitting residual") {
    const auto c = make_chain(MatrixXd::Constant(2, 2, 0.5), VectorXd::Ones(2), 0.5, 1.0);
    const MatrixXd I = MatrixXd::Identity(2, 2);
    CHECK(splitting_residual(VectorXd::Zero(2), vec2(2, 2), I, c) <= 1e-10);
    CHECK(splitting_residual(vec2(2, 2), vec2(2, 2), I, c) == 0.0);
    // gbar at theta = 0 is D (gamma P - I)(V - V*) with V - V* = (-2, -2).
    const VectorXd f = vec2(-2, -2);
    const VectorXd gbar = c.mu.cwiseProduct(c.gamma * (c.P * f) - f);
    CHECK(gbar(0) == Approx(0.5));
    CHECK(gbar(1) == Approx(0.5));
    CHECK_THROWS_AS(splitting_residual(VectorXd::Zero(2), vec2(1, 2), I, c), NotRepresentable);

    const auto suite = verify::splitting_suite(100);
    CHECK(suite.pass);
    CHECK(suite.cases == 100);
}
