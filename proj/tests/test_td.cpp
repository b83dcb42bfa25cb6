#include <catch_amalgamated.hpp>

#include "neural_td/experiments.hpp"
#include "neural_td/verify.hpp"

using namespace ntd;
using Catch::Approx;

namespace {

Problem uniform2_tabular(double gamma = 0.5) {
    return Problem{MatrixXd::Identity(2, 2), make_chain(MatrixXd::Constant(2, 2, 0.5), VectorXd::Ones(2), gamma, 1.0)};
}

Problem small_random_problem(std::uint64_t seed, int n = 6, int d = 2, double gamma = 0.8) {
    const Mdp m = random_mdp(n, d, 2, seed, gamma);
    return Problem{m.states, induce_chain(m, uniform_policy(m))};
}

}  // namespace

TEST_CASE("TD error") {
    const auto p = uniform2_tabular();
    const LinearParams zero(VectorXd::Zero(2));
    CHECK(td_error(zero, p, 0, 1) == 1.0);
    // Exact values: the expected TD error given s vanishes.
    const LinearParams exact(p.chain.v_star);
    for (Eigen::Index s = 0; s < 2; ++s) {
        double expected = 0.0;
        for (Eigen::Index t = 0; t < 2; ++t) expected += p.chain.P(s, t) * td_error(exact, p, s, t);
        CHECK(expected == Approx(0.0).margin(1e-14));
    }
    CHECK_THROWS_AS(td_error(zero, p, 0, 5), DimensionMismatch);
}

TEST_CASE("projection onto the ball") {
    const VectorXd c = VectorXd::Zero(2);
    CHECK(project_ball(Eigen::Vector2d(0.5, 0), c, 1.0) == Eigen::Vector2d(0.5, 0));
    const VectorXd out = project_ball(Eigen::Vector2d(3, 4), c, 1.0);
    CHECK(out(0) == Approx(0.6));
    CHECK(out(1) == Approx(0.8));
    CHECK(project_ball(Eigen::Vector2d(1e6, 1), c, INFINITY) == Eigen::Vector2d(1e6, 1));
}

TEST_CASE("projection matches a brute-force minimizer in 2-D") {
    Rng rng = make_rng(1, Stream::verify);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector2d theta(u(rng), u(rng)), theta0(u(rng), u(rng));
        const double omega = 0.2 + std::abs(u(rng));
        const VectorXd out = project_ball(theta, theta0, omega);
        CHECK((out - theta0).norm() <= omega + 1e-12);
        double best = INFINITY;
        const int N = 400;
        for (int i = 0; i <= N; ++i)
            for (int j = 0; j <= N; ++j) {
                const Eigen::Vector2d x = theta0 + omega * Eigen::Vector2d(-1 + 2.0 * i / N, -1 + 2.0 * j / N);
                if ((x - theta0).norm() <= omega) best = std::min(best, (x - theta).norm());
            }
        CHECK((out - theta).norm() <= best + 1e-12);
        CHECK((out - theta).norm() >= best - 2.0 * omega / N * std::sqrt(2.0));
    }
}

TEST_CASE("projected step") {
    const auto p = small_random_problem(3);
    const auto net = init(NetConfig{2, 8, 2, Activation::tanh, 3});
    const Transition tr{1, 4};
    SECTION("matches the hand composition with a huge radius") {
        TdState<NetParams> st(net);
        step_projected_neural(st, tr, p, StepSize::constant(0.3), 1e9);
        const VectorXd expected = net.theta() + 0.3 * net.gradient(p.feature(1)) * td_error(net, p, 1, 4);
        CHECK((st.params.theta() - expected).norm() <= 1e-12);
        CHECK(st.t == 1);
    }
    SECTION("zero step size leaves parameters unchanged") {
        TdState<NetParams> st(net);
        Sampler sampler(p.chain, SamplingMode::iid, 1);
        for (int i = 0; i < 20; ++i) step_projected(st, sampler.next(), p, StepSize::constant(0.0), 1.0);
        CHECK(st.params.theta() == net.theta());
    }
    SECTION("zero TD error means no movement") {
        // V* = (2, 2) on the two-state chain, so every transition has delta = 0.
        const auto tab = uniform2_tabular();
        TdState<LinearParams> lt(LinearParams(Eigen::Vector2d(2, 2)));
        step_projected(lt, Transition{0, 1}, tab, StepSize::constant(0.5), 10.0);
        CHECK(lt.params.theta() == Eigen::Vector2d(2, 2));
    }
    SECTION("radius is respected over a full run") {
        TdState<NetParams> st(net);
        Sampler sampler(p.chain, SamplingMode::markov, 2);
        for (int i = 0; i < 500; ++i) {
            step_projected(st, sampler.next(), p, StepSize::constant(2.0), 0.5);
            CHECK((st.params.theta() - st.theta0).norm() <= 0.5 + 1e-12);
        }
    }
    SECTION("non-finite updates abort") {
        TdState<NetParams> st(net);
        CHECK_THROWS_AS(step_projected(st, tr, p, StepSize::constant(INFINITY), 1.0), NonFiniteUpdate);
    }
}

TEST_CASE("inverse-time schedule") {
    const auto s = StepSize::inverse_time(4.0);
    CHECK(s.at(0) == 0.25);
    CHECK(s.at(9) == 1.0 / 40.0);
    const auto p = uniform2_tabular();
    TdState<LinearParams> st(LinearParams(VectorXd::Zero(2)));
    step_unprojected(st, Transition{0, 0}, p, s);
    // theta_0 = 0, delta = 1, gradient e_0, alpha_0 = 1/4.
    CHECK(st.params.theta()(0) == 0.25);
    CHECK(st.params.theta()(1) == 0.0);
}

TEST_CASE("tabular linear TD equals classical TD(0)") {
    const auto p = small_random_problem(4, 5);
    Problem tab{MatrixXd::Identity(5, 5), p.chain};
    TdState<LinearParams> st(LinearParams(VectorXd::Zero(5)));
    VectorXd V = VectorXd::Zero(5);
    Sampler a(tab.chain, SamplingMode::markov, 8), b(tab.chain, SamplingMode::markov, 8);
    for (int i = 0; i < 200; ++i) {
        const auto tr = a.next();
        step_projected(st, tr, tab, StepSize::constant(0.1), INFINITY);
        const auto tr2 = b.next();
        V(tr2.s) += 0.1 * (tab.chain.R(tr2.s) + tab.chain.gamma * V(tr2.s_next) - V(tr2.s));
    }
    CHECK((st.params.theta() - V).norm() <= 1e-12);
}

TEST_CASE("tabular TD converges on the two-state chain") {
    const auto p = uniform2_tabular(0.5);
    TdState<LinearParams> st(LinearParams(VectorXd::Zero(2)));
    Sampler sampler(p.chain, SamplingMode::iid, 3);
    for (int i = 0; i < 100000; ++i) step_projected(st, sampler.next(), p, StepSize::constant(0.001), INFINITY);
    CHECK((st.params.theta() - p.chain.v_star).lpNorm<Eigen::Infinity>() < 1e-2);
}

TEST_CASE("samplers reproduce the stationary law") {
    const auto p = small_random_problem(6, 5);
    const int N = 1000000;
    for (SamplingMode mode : {SamplingMode::iid, SamplingMode::markov}) {
        Sampler sampler(p.chain, mode, 11);
        VectorXd counts = VectorXd::Zero(5);
        for (int i = 0; i < N; ++i) counts(sampler.next().s) += 1.0;
        counts /= N;
        for (int s = 0; s < 5; ++s) {
            const double mu = p.chain.mu(s);
            // Markov draws are correlated; widen by the chain's relaxation.
            const double scale = mode == SamplingMode::iid ? 1.0 : 3.0;
            CHECK(std::abs(counts(s) - mu) <= scale * 4.0 * std::sqrt(mu * (1 - mu) / N));
        }
    }
}

TEST_CASE("markov sampler follows the previous successor") {
    const auto p = small_random_problem(7, 4);
    Sampler sampler(p.chain, SamplingMode::markov, 1, 10);
    auto prev = sampler.next();
    for (int i = 0; i < 100; ++i) {
        const auto tr = sampler.next();
        CHECK(tr.s == prev.s_next);
        CHECK(p.chain.P(tr.s, tr.s_next) > 0.0);
        prev = tr;
    }
}

TEST_CASE("mean-path direction") {
    SECTION("hand example on the two-state chain") {
        Problem p = uniform2_tabular(0.5);
        p.chain = make_chain(p.chain.P, VectorXd::Ones(2), 0.5, 1.0);
        const VectorXd g = mean_path_g(LinearParams(VectorXd::Zero(2)), p);
        CHECK(g(0) == Approx(0.5));
        CHECK(g(1) == Approx(0.5));
    }
    SECTION("vanishes at a representable fixed point") {
        const auto p = small_random_problem(8);
        const auto net = init(NetConfig{1, 6, 2, Activation::tanh, 8});
        const auto target = make_representable_target(net, p, 0.5, 8);
        CHECK(mean_path_g(target.model, target.problem).norm() <= 1e-13);
        TdState<NetParams> st(target.model);
        step_mean_path(st, target.problem, StepSize::constant(0.5), 10.0);
        CHECK((st.params.theta() - target.model.theta()).norm() <= 1e-13);
    }
    SECTION("dual forms agree") {
        const auto suite = verify::mean_path_suite(30);
        CHECK(suite.pass);
    }
}

TEST_CASE("mean path matches a Monte-Carlo average of sampled directions") {
    const auto p = small_random_problem(9, 5, 2);
    const auto net = init(NetConfig{1, 3, 2, Activation::tanh, 9});
    const VectorXd gbar = mean_path_g(net, p);
    Sampler sampler(p.chain, SamplingMode::iid, 9);
    const int N = 200000;
    VectorXd sum = VectorXd::Zero(net.size()), sq = VectorXd::Zero(net.size());
    for (int i = 0; i < N; ++i) {
        const VectorXd g = td_direction(net, p, sampler.next());
        sum += g;
        sq += g.cwiseAbs2();
    }
    const VectorXd mean = sum / N;
    const VectorXd se = ((sq / N - mean.cwiseAbs2()) / N).cwiseSqrt();
    for (Eigen::Index i = 0; i < net.size(); ++i) CHECK(std::abs(mean(i) - gbar(i)) <= 4.0 * se(i));
}

TEST_CASE("linear mean path follows the closed-form dynamics") {
    const auto p = small_random_problem(10, 4);
    Problem tab{MatrixXd::Identity(4, 4), p.chain};
    const auto& c = tab.chain;
    TdState<LinearParams> st(LinearParams(VectorXd::Zero(4)));
    VectorXd theta = VectorXd::Zero(4);
    const double alpha = 0.5;
    double prev_n = INFINITY;
    for (int t = 0; t < 3000; ++t) {
        step_mean_path(st, tab, StepSize::constant(alpha), INFINITY);
        const VectorXd diff = theta - c.v_star;
        theta = theta + alpha * c.mu.cwiseProduct(c.gamma * (c.P * diff) - diff);
        CHECK((st.params.theta() - theta).norm() <= 1e-10 * (1 + theta.norm()));
        const VectorXd f = st.params.theta() - c.v_star;
        const double nv = (1 - c.gamma) * d_norm_sq(f, c) + c.gamma * dirichlet_sq(f, c);
        CHECK(nv <= prev_n * (1 + 1e-12));
        prev_n = nv;
    }
    CHECK((st.params.theta() - c.v_star).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("mean-path decomposition") {
    const auto nc = verify::random_net_case(3);
    SECTION("mid-point at theta puts everything in g1") {
        const auto d = lemma_a4_decomposition(nc.model, nc.star, nc.problem, nc.model.theta());
        CHECK(d.g2.norm() == 0.0);
        CHECK(d.residual <= 1e-12 * (1 + d.g.norm()));
    }
    SECTION("mid-point at theta_hat_star still sums") {
        CHECK(lemma_a4_decomposition_check(nc.model, nc.star, nc.problem, nc.star.theta()) <= 1e-9);
    }
    SECTION("representable target: g3 vanishes") {
        const auto d = lemma_a4_decomposition(nc.model, nc.star, nc.problem, nc.model.theta());
        CHECK(d.g3.norm() <= 1e-12);
    }
    SECTION("suites over random cases") {
        CHECK(verify::decomposition_suite(40).pass);
        const auto mp = verify::mid_point_suite(40);
        INFO(mp.first_failure << " " << mp.max_error);
        CHECK(mp.pass);
    }
}

TEST_CASE("per-step update size bound") {
    SECTION("degenerate case: V = 0, r = 1, tiny gamma") {
        const Mdp m = random_mdp(4, 2, 1, 1, 1e-9);
        Problem p{m.states, induce_chain(m, uniform_policy(m))};
        p.chain = make_chain(p.chain.P, VectorXd::Ones(4), p.chain.gamma, 1.0);
        const auto zero = init(NetConfig{1, 4, 2, Activation::tanh, 1});
        NetParams z = with_theta(zero, VectorXd::Zero(zero.size()));
        const double eps = (value_vector(z, p.features) - p.chain.v_star).lpNorm<Eigen::Infinity>();
        const auto b = g_norm_bound_check(z, z, p, eps);
        CHECK(b.measured <= b.bound);
    }
    SECTION("bound holds at the target itself") {
        const auto nc = verify::random_net_case(5);
        const auto b = g_norm_bound_check(nc.star, nc.star, nc.problem, 0.0);
        CHECK(b.measured <= b.bound);
    }
    SECTION("understated epsilon is rejected") {
        auto nc = verify::random_net_case(6);
        auto& c = nc.problem.chain;
        c = make_chain(c.P, c.R + VectorXd::Constant(c.size(), 0.3), c.gamma, c.r_max + 1.0);
        CHECK_THROWS_AS(g_norm_bound_check(nc.model, nc.star, nc.problem, 0.0), NotRepresentable);
    }
    SECTION("suite") { CHECK(verify::g_bound_suite(50).pass); }
}

TEST_CASE("admissible lambda threshold") {
    CHECK(unprojected_lambda_threshold(0.5, 1.0, 0.5) == Approx(3.0 * 1.25 / (2 * 0.5 * 0.25)));
    CHECK_THROWS_AS(unprojected_lambda_threshold(0.0, 1.0, 0.5), BoundViolation);
}
