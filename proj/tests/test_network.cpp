#include <catch_amalgamated.hpp>

#include <filesystem>

#include "neural_td/io.hpp"
#include "neural_td/network.hpp"
#include "neural_td/verify.hpp"

using namespace ntd;
using Catch::Approx;

namespace {

NetParams make(int K, int m, int d, Activation a, VectorXd theta, VectorXd b) {
    return NetParams(NetConfig{K, m, d, a, 0}, std::move(theta), std::move(b));
}

// Explicit-bias network, written with plain loops:
//   y^(k) = sigma(W_k y^(k-1) + c_k) / sqrt(m),  V = (w^T y^(K) + c_out) / sqrt(m).
double explicit_bias_value(const std::vector<MatrixXd>& W, const std::vector<VectorXd>& c, const VectorXd& w,
                           double c_out, const VectorXd& s, Activation a, int m) {
    VectorXd y = s;
    for (std::size_t k = 0; k < W.size(); ++k) {
        VectorXd next(W[k].rows());
        for (Eigen::Index i = 0; i < W[k].rows(); ++i) {
            double h = c[k](i);
            for (Eigen::Index j = 0; j < W[k].cols(); ++j) h += W[k](i, j) * y(j);
            next(i) = act::value(a, h) / std::sqrt(double(m));
        }
        y = next;
    }
    return (w.dot(y) + c_out) / std::sqrt(double(m));
}

}  // namespace

TEST_CASE("activation constants bound the derivatives") {
    for (Activation a : {Activation::tanh, Activation::sigmoid, Activation::softplus, Activation::gelu}) {
        const auto k = constants(a);
        double d1 = 0.0, d2 = 0.0;
        for (double x = -12.0; x <= 12.0; x += 1e-3) {
            d1 = std::max(d1, std::abs(act::derivative(a, x)));
            d2 = std::max(d2, std::abs(act::second_derivative(a, x)));
        }
        CHECK(d1 <= k.l);
        CHECK(d2 <= k.c0);
        CHECK(d1 >= 0.95 * k.l);
    }
    CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
    CHECK(parse_activation("gelu") == Activation::gelu);
}

TEST_CASE("activation derivatives match finite differences") {
    for (Activation a : {Activation::tanh, Activation::sigmoid, Activation::softplus, Activation::gelu}) {
        for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
            const double h = 1e-5;
            CHECK(act::derivative(a, x) == Approx((act::value(a, x + h) - act::value(a, x - h)) / (2 * h)).margin(1e-9));
            CHECK(act::second_derivative(a, x) ==
                  Approx((act::derivative(a, x + h) - act::derivative(a, x - h)) / (2 * h)).margin(1e-8));
        }
    }
}

TEST_CASE("forward pass hand examples") {
    SECTION("zero weights with tanh give zero") {
        const auto p = make(3, 4, 2, Activation::tanh, VectorXd::Zero(4 * 2 + 2 * 16), VectorXd::Ones(4));
        CHECK(p.value(Eigen::Vector2d(0.3, 0.4)) == 0.0);
    }
    SECTION("single unit") {
        Eigen::Vector2d theta(0.5, 0.0);
        const auto p = make(1, 1, 2, Activation::tanh, theta, VectorXd::Ones(1));
        CHECK(p.value(Eigen::Vector2d(1, 0)) == Approx(std::tanh(0.5)).epsilon(1e-15));
        const VectorXd g = p.gradient(Eigen::Vector2d(1, 0));
        const double sech2 = 1.0 / (std::cosh(0.5) * std::cosh(0.5));
        CHECK(g(0) == Approx(sech2).epsilon(1e-14));
        CHECK(g(1) == 0.0);
        CHECK(g(0) == Approx(0.786448).epsilon(1e-6));
    }
    SECTION("softplus with zero weights propagates ln 2") {
        const int m = 3, K = 2;
        const auto p = make(K, m, 2, Activation::softplus, VectorXd::Zero(m * 2 + m * m), VectorXd::Ones(m));
        // Layer 1: every unit is ln2 / sqrt(m); layer 2 pre-activations are 0 again.
        const double x2 = std::log(2.0) / std::sqrt(double(m));
        CHECK(p.value(Eigen::Vector2d(0.1, -0.2)) == Approx(m * x2 / std::sqrt(double(m))).epsilon(1e-14));
    }
    SECTION("input dimension is checked") {
        const auto p = init(NetConfig{1, 4, 3, Activation::tanh, 0});
        CHECK_THROWS_AS(p.value(Eigen::Vector2d(0, 0)), DimensionMismatch);
    }
}

TEST_CASE("zero weights: only the first layer carries gradient") {
    const int m = 4, d = 2;
    const auto p = make(3, m, d, Activation::tanh, VectorXd::Zero(m * d + 2 * m * m), VectorXd::Ones(m));
    const Eigen::Vector2d s(0.6, -0.3);
    const VectorXd g = p.gradient(s);
    CHECK(g.tail(2 * m * m).norm() == 0.0);
    CHECK(g.head(m * d).norm() == 0.0);  // upstream products through zero layers vanish too
    const VectorXd fd = verify::finite_difference_gradient(p, s);
    CHECK((g - fd).norm() <= 1e-10);
}

TEST_CASE("reverse-mode gradient matches central differences") {
    const auto suite = verify::gradient_suite(50);
    INFO(suite.first_failure << " max error " << suite.max_error);
    CHECK(suite.pass);
}

TEST_CASE("batched values and Jacobian agree with per-state evaluation") {
    const auto p = init(NetConfig{2, 8, 3, Activation::gelu, 5});
    Rng rng = make_rng(5, Stream::verify);
    MatrixXd S(6, 3);
    for (int i = 0; i < 6; ++i) S.row(i) = detail::random_in_ball(rng, VectorXd::Zero(3), 1.0).transpose();
    const VectorXd batch = p.values(S);
    const MatrixXd J = jacobian(p, S);
    for (int i = 0; i < 6; ++i) {
        CHECK(batch(i) == Approx(p.value(S.row(i).transpose())).epsilon(1e-13));
        CHECK((J.row(i).transpose() - p.gradient(S.row(i).transpose())).norm() == 0.0);
    }
}

TEST_CASE("bias trick reproduces an explicit-bias network") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const int m = 6, d = 2, K = 1 + static_cast<int>(seed % 3);
        const Activation a = seed % 2 ? Activation::sigmoid : Activation::tanh;
        NetParams p = init(NetConfig{K, m, d + 1, a, seed});
        // Pin the last row of every layer to (0, ..., 0, 1).
        for (int k = 0; k < K; ++k) {
            auto L = p.layer(k);
            L.row(m - 1).setZero();
            L(m - 1, L.cols() - 1) = 1.0;
        }
        // Equivalent explicit-bias network on m - 1 units.
        const double inv = 1.0 / std::sqrt(double(m));
        std::vector<MatrixXd> W;
        std::vector<VectorXd> c;
        double carried = 1.0;  // value of the constant unit feeding the next layer
        for (int k = 0; k < K; ++k) {
            const auto L = p.layer(k);
            const Eigen::Index in = k == 0 ? d : m - 1;
            W.push_back(L.topLeftCorner(m - 1, in));
            c.push_back(L.topRightCorner(m - 1, 1) * carried);
            carried = act::value(a, carried) * inv;
        }
        const double c_out = p.b()(m - 1) * carried;
        Rng rng = make_rng(seed, Stream::verify);
        for (int trial = 0; trial < 20; ++trial) {
            const VectorXd s = detail::random_in_ball(rng, VectorXd::Zero(d), 1.0);
            VectorXd aug(d + 1);
            aug << s, 1.0;
            CHECK(std::abs(p.value(aug) - explicit_bias_value(W, c, p.b().head(m - 1), c_out, s, a, m)) <= 1e-12);
        }
    }
}

TEST_CASE("initialization") {
    SECTION("deterministic per seed") {
        const NetConfig cfg{2, 16, 3, Activation::tanh, 42};
        const auto a = init(cfg), b = init(cfg);
        CHECK(a.theta() == b.theta());
        CHECK(a.b() == b.b());
        const Eigen::Vector3d s(0.1, 0.2, 0.3);
        CHECK(a.value(s) == b.value(s));
        CHECK(a.gradient(s) == b.gradient(s));
        CHECK(init(NetConfig{2, 16, 3, Activation::tanh, 43}).theta() != a.theta());
    }
    SECTION("output weights are signs") {
        const auto p = init(NetConfig{1, 200, 2, Activation::tanh, 1});
        for (Eigen::Index i = 0; i < p.b().size(); ++i) CHECK(std::abs(p.b()(i)) == 1.0);
        CHECK(p.b().sum() != Approx(200.0));
    }
    SECTION("wide first layer has Frobenius norm near sqrt(m d)") {
        const auto p = init(NetConfig{1, 4096, 2, Activation::tanh, 3});
        const double ratio = p.layer(0).norm() / std::sqrt(4096.0 * 2.0);
        CHECK(ratio >= 0.9);
        CHECK(ratio <= 1.1);
    }
    SECTION("shape errors") {
        CHECK_THROWS_AS(NetParams(NetConfig{1, 4, 2, Activation::tanh, 0}, VectorXd::Zero(7), VectorXd::Ones(4)),
                        ShapeMismatch);
        CHECK_THROWS_AS(NetParams(NetConfig{1, 4, 2, Activation::tanh, 0}, VectorXd::Zero(8), VectorXd::Constant(4, 2.0)),
                        ShapeMismatch);
        CHECK_THROWS_AS(init(NetConfig{0, 4, 2, Activation::tanh, 0}), ConfigError);
    }
}

TEST_CASE("parameter algebra") {
    const auto p = init(NetConfig{3, 8, 2, Activation::tanh, 9});
    CHECK(param_dist(p, p) == 0.0);
    CHECK(param_norm(VectorXd(-2.5 * p.theta())) == Approx(2.5 * param_norm(p)).epsilon(1e-14));
    CHECK(param_norm(p) == Approx(param_norm_by_layers(p)).epsilon(1e-12));
    const VectorXd y = param_axpy(2.0, p.theta(), p.theta());
    CHECK((y - 3.0 * p.theta()).norm() <= 1e-12);
    CHECK_THROWS_AS(param_axpy(1.0, p.theta(), VectorXd::Zero(3)), ShapeMismatch);
    CHECK_THROWS_AS(param_dist(p.theta(), VectorXd::Zero(3)), ShapeMismatch);
    // Layer views follow the canonical row-major order.
    CHECK(p.layer(0)(1, 0) == p.theta()(2));
    CHECK(p.layer(1)(0, 3) == p.theta()(8 * 2 + 3));
}

TEST_CASE("checkpoints round-trip exactly") {
    const auto p = init(NetConfig{2, 12, 3, Activation::softplus, 77});
    const auto back = checkpoint_from_json(json::parse(checkpoint_to_json(p).dump()));
    CHECK(back.theta() == p.theta());
    CHECK(back.b() == p.b());
    CHECK(back.config().activation == Activation::softplus);
    const auto path = std::filesystem::temp_directory_path() / "ntd_ckpt.json";
    save_checkpoint(p, path.string());
    CHECK(load_checkpoint(path.string()).theta() == p.theta());
    std::filesystem::remove(path);
}

TEST_CASE("single-hidden-layer regularity bounds hold") {
    RegularityProbeSpec spec;
    spec.depth = 1;
    spec.widths = {4, 25, 100};
    spec.omega = 3.0;
    spec.trials = 300;
    const auto rows = regularity_probe(spec);
    for (const auto& r : rows) {
        CHECK(r.lipschitz_est <= 1.0);
        CHECK(r.smoothness_est <= 0.77 / std::sqrt(double(r.width)));
    }
    CHECK(rows[2].smoothness_est <= 0.077);
    spec.widths = {100, 25};
    CHECK_THROWS_AS(regularity_probe(spec), ConfigError);
}
