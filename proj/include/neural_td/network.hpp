#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "neural_td/errors.hpp"
#include "neural_td/random.hpp"

namespace ntd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { tanh, sigmoid, softplus, gelu };

/// Analytic suprema of |sigma'| (l) and |sigma''| (c0), rounded up.
struct ActivationConstants {
    double l;
    double c0;
};

inline constexpr ActivationConstants constants(Activation a) {
    switch (a) {
        case Activation::tanh: return {1.0, 0.7700};
        case Activation::sigmoid: return {0.25, 0.0963};
        case Activation::softplus: return {1.0, 0.25};
        case Activation::gelu: return {1.13, 1.13};
    }
    return {0.0, 0.0};
}

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus: return "softplus";
        case Activation::gelu: return "gelu";
    }
    return "?";
}

/// ReLU (and anything else non-smooth) is rejected.
inline Activation parse_activation(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softplus") return Activation::softplus;
    if (name == "gelu") return Activation::gelu;
    if (name == "relu") throw ConfigError("relu is not smooth; use tanh, sigmoid, softplus or gelu");
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace act {

inline double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double value(Activation a, double x) {
    switch (a) {
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return logistic(x);
        case Activation::softplus: return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        case Activation::gelu: return x * normal_cdf(x);
    }
    return 0.0;
}

inline double derivative(Activation a, double x) {
    switch (a) {
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = logistic(x);
            return s * (1.0 - s);
        }
        case Activation::softplus: return logistic(x);
        case Activation::gelu: return normal_cdf(x) + x * normal_pdf(x);
    }
    return 0.0;
}

inline double second_derivative(Activation a, double x) {
    switch (a) {
        case Activation::tanh: {
            const double t = std::tanh(x);
            return -2.0 * t * (1.0 - t * t);
        }
        case Activation::sigmoid: {
            const double s = logistic(x);
            return s * (1.0 - s) * (1.0 - 2.0 * s);
        }
        case Activation::softplus: {
            const double s = logistic(x);
            return s * (1.0 - s);
        }
        case Activation::gelu: return normal_pdf(x) * (2.0 - x * x);
    }
    return 0.0;
}

}  // namespace act

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct NetConfig {
    int depth = 1;
    int width = 64;
    int input_dim = 1;
    Activation activation = Activation::tanh;
    std::uint64_t seed = 0;

    ActivationConstants activation_constants() const { return constants(activation); }

    void validate() const {
        if (depth < 1) throw ConfigError("net.depth must be >= 1");
        if (width < 1) throw ConfigError("net.width must be >= 1");
        if (input_dim < 1) throw ConfigError("net.input_dim must be >= 1");
    }

    /// Total number of trainable weights: m*d + (K - 1)*m*m.
    Eigen::Index param_count() const {
        const Eigen::Index m = width;
        return m * input_dim + static_cast<Eigen::Index>(depth - 1) * m * m;
    }
};

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LayerView = Eigen::Map<RowMajorMatrix>;
using ConstLayerView = Eigen::Map<const RowMajorMatrix>;

/// Per-layer activations of one forward pass. `act[0]` is the input,
/// `act[k] = sigma(pre[k-1]) / sqrt(m)` for k = 1..K.
struct ForwardTape {
    std::vector<VectorXd> pre;
    std::vector<VectorXd> act;
    double value = 0.0;
};

/// Weights of the fully connected value network
///
///   x^(k) = sigma(theta^(k) x^(k-1)) / sqrt(m),   V(s) = b^T x^(K) / sqrt(m),
///
/// stored as one flat vector: layers in ascending k, each row-major.
/// theta^(1) is m x d and theta^(2..K) are m x m. The output weights b are
/// fixed at initialization and are not part of the trainable vector.
class NetParams {
public:
    NetParams() = default;

    NetParams(NetConfig config, VectorXd theta, VectorXd b)
        : config_(config), theta_(std::move(theta)), b_(std::move(b)) {
        config_.validate();
        if (theta_.size() != config_.param_count()) {
            throw ShapeMismatch("theta has " + std::to_string(theta_.size()) + " entries, expected " +
                                std::to_string(config_.param_count()));
        }
        if (b_.size() != config_.width) throw ShapeMismatch("b must have width entries");
        if (b_.cwiseAbs().maxCoeff() > 1.0) throw ShapeMismatch("|b_r| must not exceed 1");
    }

    const NetConfig& config() const { return config_; }
    const VectorXd& theta() const { return theta_; }
    VectorXd& theta() { return theta_; }
    const VectorXd& b() const { return b_; }

    int depth() const { return config_.depth; }
    int width() const { return config_.width; }
    Eigen::Index size() const { return theta_.size(); }

    Eigen::Index layer_offset(int k) const {
        if (k == 0) return 0;
        const Eigen::Index m = config_.width;
        return m * config_.input_dim + static_cast<Eigen::Index>(k - 1) * m * m;
    }
    Eigen::Index layer_cols(int k) const { return k == 0 ? config_.input_dim : config_.width; }

    /// Layer k in 0-based order (theta^(k+1) in the usual notation).
    ConstLayerView layer(int k) const {
        return ConstLayerView(theta_.data() + layer_offset(k), config_.width, layer_cols(k));
    }
    LayerView layer(int k) { return LayerView(theta_.data() + layer_offset(k), config_.width, layer_cols(k)); }

    ForwardTape forward(const Eigen::Ref<const VectorXd>& s) const {
        check_input(s);
        const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(config_.width));
        ForwardTape tape;
        tape.pre.reserve(static_cast<std::size_t>(config_.depth));
        tape.act.reserve(static_cast<std::size_t>(config_.depth) + 1);
        tape.act.emplace_back(s);
        for (int k = 0; k < config_.depth; ++k) {
            VectorXd h = layer(k) * tape.act.back();
            VectorXd x = h.unaryExpr([a = config_.activation](double v) { return act::value(a, v); }) * inv_sqrt_m;
            tape.pre.push_back(std::move(h));
            tape.act.push_back(std::move(x));
        }
        tape.value = inv_sqrt_m * b_.dot(tape.act.back());
        return tape;
    }

    double value(const Eigen::Ref<const VectorXd>& s) const { return forward(s).value; }

    /// V(s_i) for every row s_i of `features`, evaluated as one batch.
    VectorXd values(const MatrixXd& features) const {
        if (features.cols() != config_.input_dim) throw DimensionMismatch("feature matrix has the wrong width");
        const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(config_.width));
        MatrixXd x = features.transpose();
        for (int k = 0; k < config_.depth; ++k) {
            MatrixXd h = layer(k) * x;
            x = h.unaryExpr([a = config_.activation](double v) { return act::value(a, v); }) * inv_sqrt_m;
        }
        return (b_.transpose() * x).transpose() * inv_sqrt_m;
    }

    /// Exact reverse-mode gradient of V(s, theta) in canonical flattening order.
    VectorXd gradient(const Eigen::Ref<const VectorXd>& s) const {
        const ForwardTape tape = forward(s);
        return backward(tape);
    }

    VectorXd backward(const ForwardTape& tape) const {
        const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(config_.width));
        VectorXd grad(theta_.size());
        VectorXd upstream = b_ * inv_sqrt_m;  // dV/dx^(K)
        for (int k = config_.depth - 1; k >= 0; --k) {
            const auto& h = tape.pre[static_cast<std::size_t>(k)];
            const VectorXd dh =
                upstream.cwiseProduct(h.unaryExpr([a = config_.activation](double v) { return act::derivative(a, v); })) *
                inv_sqrt_m;
            LayerView(grad.data() + layer_offset(k), config_.width, layer_cols(k)).noalias() =
                dh * tape.act[static_cast<std::size_t>(k)].transpose();
            if (k > 0) upstream = layer(k).transpose() * dh;
        }
        return grad;
    }

private:
    void check_input(const Eigen::Ref<const VectorXd>& s) const {
        if (s.size() != config_.input_dim) {
            throw DimensionMismatch("input has dimension " + std::to_string(s.size()) + ", network expects " +
                                    std::to_string(config_.input_dim));
        }
    }

    NetConfig config_;
    VectorXd theta_;
    VectorXd b_;
};

/// Linear value model V(s) = theta^T s. With identity features this is the
/// tabular representation.
class LinearParams {
public:
    LinearParams() = default;
    explicit LinearParams(VectorXd theta) : theta_(std::move(theta)) {}

    const VectorXd& theta() const { return theta_; }
    VectorXd& theta() { return theta_; }
    Eigen::Index size() const { return theta_.size(); }

    double value(const Eigen::Ref<const VectorXd>& s) const {
        if (s.size() != theta_.size()) throw DimensionMismatch("linear model: feature dimension mismatch");
        return theta_.dot(s);
    }
    VectorXd gradient(const Eigen::Ref<const VectorXd>& s) const {
        if (s.size() != theta_.size()) throw DimensionMismatch("linear model: feature dimension mismatch");
        return s;
    }
    VectorXd values(const MatrixXd& features) const {
        if (features.cols() != theta_.size()) throw DimensionMismatch("linear model: feature dimension mismatch");
        return features * theta_;
    }

private:
    VectorXd theta_;
};

/// Anything with a flat trainable vector, a value and its gradient.
template <class M>
concept ValueModel = requires(const M& cm, M& m, const VectorXd& x) {
    { cm.value(x) } -> std::convertible_to<double>;
    { cm.gradient(x) } -> std::convertible_to<VectorXd>;
    { cm.theta() } -> std::convertible_to<const VectorXd&>;
    { m.theta() } -> std::same_as<VectorXd&>;
};

/// V(theta) over all states (rows of `features`).
template <ValueModel M>
VectorXd value_vector(const M& model, const MatrixXd& features) {
    if constexpr (requires { model.values(features); }) {
        return model.values(features);
    } else {
        VectorXd v(features.rows());
        for (Eigen::Index i = 0; i < features.rows(); ++i) v(i) = model.value(features.row(i).transpose());
        return v;
    }
}

/// The n x p Jacobian whose rows are grad_theta V(s_i, theta).
template <ValueModel M>
MatrixXd jacobian(const M& model, const MatrixXd& features) {
    MatrixXd J(features.rows(), model.theta().size());
    for (Eigen::Index i = 0; i < features.rows(); ++i) J.row(i) = model.gradient(features.row(i).transpose()).transpose();
    return J;
}

template <ValueModel M>
M with_theta(const M& model, VectorXd theta) {
    M copy = model;
    if (theta.size() != copy.theta().size()) throw ShapeMismatch("parameter vector has the wrong length");
    copy.theta() = std::move(theta);
    return copy;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

inline constexpr double kInitFrobeniusFactor = 3.0;

/// Diagnostic threshold for hidden activations at init: 10 * (1 + ln m).
inline double activation_threshold(int width) { return 10.0 * (1.0 + std::log(static_cast<double>(width))); }

/// theta entries i.i.d. N(0, 1), b entries uniform on {-1, +1}, both drawn in
/// canonical order from the network-init stream of cfg.seed. Checks that each
/// layer's Frobenius norm is at most 3 sqrt(m max(d, m)) and that hidden
/// activations at two probe inputs stay below activation_threshold(m).
inline NetParams init(const NetConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(cfg.seed, Stream::network_init);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd theta(cfg.param_count());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = normal(rng);
    std::bernoulli_distribution coin(0.5);
    VectorXd b(cfg.width);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = coin(rng) ? 1.0 : -1.0;
    NetParams params(cfg, std::move(theta), std::move(b));

    const double m = cfg.width;
    const double limit = kInitFrobeniusFactor * std::sqrt(m * std::max<double>(cfg.input_dim, cfg.width));
    for (int k = 0; k < cfg.depth; ++k) {
        const double fro = params.layer(k).norm();
        if (fro > limit) {
            throw InitDiagnosticFailed("layer " + std::to_string(k + 1) + " Frobenius norm " + std::to_string(fro) +
                                       " exceeds " + std::to_string(limit));
        }
    }
    const double act_limit = activation_threshold(cfg.width);
    const VectorXd probe_a = VectorXd::Unit(cfg.input_dim, 0);
    const VectorXd probe_b = VectorXd::Constant(cfg.input_dim, 1.0 / std::sqrt(static_cast<double>(cfg.input_dim)));
    for (const VectorXd* probe : {&probe_a, &probe_b}) {
        const auto tape = params.forward(*probe);
        for (std::size_t k = 1; k < tape.act.size(); ++k) {
            if (tape.act[k].cwiseAbs().maxCoeff() > act_limit) {
                throw InitDiagnosticFailed("hidden activation above " + std::to_string(act_limit) + " at layer " +
                                           std::to_string(k));
            }
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Parameter-vector algebra
// ---------------------------------------------------------------------------

inline void check_same_shape(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size()) {
        throw ShapeMismatch("parameter vectors of length " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
    }
}

/// y + alpha * x
inline VectorXd param_axpy(double alpha, const VectorXd& x, const VectorXd& y) {
    check_same_shape(x, y);
    return y + alpha * x;
}

inline double param_norm(const VectorXd& theta) { return theta.norm(); }
inline double param_norm(const NetParams& p) { return p.theta().norm(); }

/// sqrt(sum_k ||theta^(k)||_F^2) evaluated layer by layer.
inline double param_norm_by_layers(const NetParams& p) {
    double total = 0.0;
    for (int k = 0; k < p.depth(); ++k) total += p.layer(k).squaredNorm();
    return std::sqrt(total);
}

inline double param_dist(const VectorXd& a, const VectorXd& b) {
    check_same_shape(a, b);
    return (a - b).norm();
}
inline double param_dist(const NetParams& a, const NetParams& b) { return param_dist(a.theta(), b.theta()); }

// ---------------------------------------------------------------------------
// Regularity probes
// ---------------------------------------------------------------------------

struct RegularityRow {
    int width = 0;
    double lipschitz_est = 0.0;
    double smoothness_est = 0.0;
};

struct RegularityProbeSpec {
    int depth = 1;
    int input_dim = 2;
    Activation activation = Activation::tanh;
    std::vector<int> widths;
    double omega = 1.0;
    int trials = 100;
    std::uint64_t seed = 0;
};

namespace detail {

inline VectorXd random_unit(Rng& rng, Eigen::Index dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd u(dim);
    double norm = 0.0;
    do {
        for (Eigen::Index i = 0; i < dim; ++i) u(i) = normal(rng);
        norm = u.norm();
    } while (norm < 1e-12);
    return u / norm;
}

/// Uniform point of the closed ball B(center, radius).
inline VectorXd random_in_ball(Rng& rng, const VectorXd& center, double radius) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(center.size()));
    return center + r * random_unit(rng, center.size());
}

}  // namespace detail

/// For each width: the largest sampled ||grad V(s, theta)|| and the largest
/// ||grad V(s, theta1) - grad V(s, theta2)|| / ||theta1 - theta2|| over random
/// inputs in the unit ball and random theta1, theta2 in B(theta0, omega).
/// For single-hidden-layer networks the proven bounds ||grad V|| <= l and
/// ratio <= c0 / sqrt(m) are enforced; a violation throws BoundViolation.
inline std::vector<RegularityRow> regularity_probe(const RegularityProbeSpec& spec) {
    if (!(spec.omega > 0.0)) throw ConfigError("probe radius omega must be positive");
    if (!std::is_sorted(spec.widths.begin(), spec.widths.end())) throw ConfigError("probe widths must be ascending");
    const auto [l, c0] = constants(spec.activation);
    std::vector<RegularityRow> rows;
    for (int m : spec.widths) {
        NetConfig cfg{spec.depth, m, spec.input_dim, spec.activation, derive_seed(spec.seed, Stream::probe, static_cast<std::uint64_t>(m))};
        const NetParams base = init(cfg);
        Rng rng = make_rng(spec.seed, Stream::probe, 1'000'000u + static_cast<std::uint64_t>(m));
        const VectorXd zero_in = VectorXd::Zero(spec.input_dim);
        RegularityRow row{m, 0.0, 0.0};
        NetParams p1 = base, p2 = base;
        for (int trial = 0; trial < spec.trials; ++trial) {
            const VectorXd s = detail::random_in_ball(rng, zero_in, 1.0);
            p1.theta() = detail::random_in_ball(rng, base.theta(), spec.omega);
            p2.theta() = detail::random_in_ball(rng, base.theta(), spec.omega);
            const VectorXd g1 = p1.gradient(s);
            const VectorXd g2 = p2.gradient(s);
            const double lip = std::max(g1.norm(), g2.norm());
            const double dist = (p1.theta() - p2.theta()).norm();
            const double ratio = dist > 0.0 ? (g1 - g2).norm() / dist : 0.0;
            row.lipschitz_est = std::max(row.lipschitz_est, lip);
            row.smoothness_est = std::max(row.smoothness_est, ratio);
            if (spec.depth == 1) {
                if (lip > l + 1e-9) {
                    throw BoundViolation("||grad V|| = " + std::to_string(lip) + " exceeds l = " + std::to_string(l));
                }
                const double bound = c0 / std::sqrt(static_cast<double>(m)) + 1e-9;
                if (ratio > bound) {
                    throw BoundViolation("gradient smoothness ratio " + std::to_string(ratio) + " exceeds c0/sqrt(m) = " +
                                         std::to_string(bound));
                }
            }
        }
        rows.push_back(row);
    }
    return rows;
}

/// Least-squares slope of log(smoothness_est) against log(width).
inline double smoothness_loglog_slope(const std::vector<RegularityRow>& rows) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        const double x = std::log(static_cast<double>(r.width));
        const double y = std::log(r.smoothness_est);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace ntd
