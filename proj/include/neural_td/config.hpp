#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neural_td/experiments.hpp"
#include "neural_td/io.hpp"

namespace ntd {

namespace detail {

/// Reads an optional field, reporting type errors with the full field path.
template <class T>
void read_field(const json& obj, const char* key, const std::string& prefix, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + prefix + key + "' has the wrong type");
    }
}

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError("field '" + path + "' must be an object");
}

inline void reject_unknown(const json& obj, const std::vector<std::string>& known, const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw ConfigError("unknown field '" + prefix + it.key() + "'");
        }
    }
}

}  // namespace detail

inline EnvSpec parse_env(const json& j) {
    detail::require_object(j, "env");
    detail::reject_unknown(j, {"type", "width", "height", "slip", "n", "d", "actions", "seed", "p_forward", "smoothing",
                               "path", "gamma"},
                           "env.");
    if (!j.contains("gamma")) throw ConfigError("missing field 'env.gamma'");
    EnvSpec e;
    detail::read_field(j, "type", "env.", e.type);
    detail::read_field(j, "width", "env.", e.width);
    detail::read_field(j, "height", "env.", e.height);
    detail::read_field(j, "slip", "env.", e.slip);
    detail::read_field(j, "n", "env.", e.n);
    detail::read_field(j, "d", "env.", e.d);
    detail::read_field(j, "actions", "env.", e.actions);
    detail::read_field(j, "seed", "env.", e.seed);
    detail::read_field(j, "p_forward", "env.", e.p_forward);
    detail::read_field(j, "smoothing", "env.", e.smoothing);
    detail::read_field(j, "path", "env.", e.path);
    detail::read_field(j, "gamma", "env.", e.gamma);
    if (!(e.gamma > 0.0 && e.gamma < 1.0)) throw ConfigError("field 'env.gamma' must lie in (0, 1)");
    if (e.type != "gridworld" && e.type != "random" && e.type != "chain" && e.type != "file") {
        throw ConfigError("field 'env.type' must be gridworld, random, chain or file");
    }
    if (e.type == "file" && e.path.empty()) throw ConfigError("field 'env.path' is required when env.type = file");
    return e;
}

inline StepRule parse_step(const json& j) {
    detail::require_object(j, "step");
    detail::reject_unknown(j, {"kind", "alpha", "lambda", "scale"}, "step.");
    StepRule s;
    std::string kind = "constant";
    detail::read_field(j, "kind", "step.", kind);
    if (kind == "constant") {
        s.kind = StepRule::Kind::constant;
    } else if (kind == "inverse_time") {
        s.kind = StepRule::Kind::inverse_time;
    } else if (kind == "inv_sqrt_horizon") {
        s.kind = StepRule::Kind::inv_sqrt_horizon;
    } else {
        throw ConfigError("field 'step.kind' must be constant, inverse_time or inv_sqrt_horizon");
    }
    detail::read_field(j, "alpha", "step.", s.alpha);
    if (j.contains("lambda") && j.at("lambda").is_string()) {
        if (j.at("lambda").get<std::string>() != "auto") throw ConfigError("field 'step.lambda' must be a number or \"auto\"");
        s.lambda = 0.0;
    } else {
        detail::read_field(j, "lambda", "step.", s.lambda);
    }
    detail::read_field(j, "scale", "step.", s.scale);
    if (s.kind == StepRule::Kind::constant && !(s.alpha > 0.0)) throw ConfigError("field 'step.alpha' must be positive");
    if (s.lambda < 0.0) throw ConfigError("field 'step.lambda' must be non-negative");
    if (!(s.scale > 0.0)) throw ConfigError("field 'step.scale' must be positive");
    return s;
}

inline NetConfig parse_net(const json& j) {
    detail::require_object(j, "net");
    detail::reject_unknown(j, {"depth", "width", "activation"}, "net.");
    NetConfig n;
    detail::read_field(j, "depth", "net.", n.depth);
    detail::read_field(j, "width", "net.", n.width);
    std::string act(to_string(n.activation));
    detail::read_field(j, "activation", "net.", act);
    try {
        n.activation = parse_activation(act);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("field 'net.activation': ") + e.what());
    }
    if (n.depth < 1) throw ConfigError("field 'net.depth' must be >= 1");
    if (n.width < 1) throw ConfigError("field 'net.width' must be >= 1");
    return n;
}

struct RunDocument {
    EnvSpec env;
    TdRunConfig run;
};

/// A run document: {env, algorithm, net, omega, step, horizon, sampling,
/// burn_in, seed, record_every, target, linear_tabular, bellman, ema_decay}.
inline RunDocument parse_run_config(const json& j) {
    detail::require_object(j, "<root>");
    detail::reject_unknown(j, {"env", "algorithm", "net", "omega", "step", "horizon", "sampling", "burn_in", "seed",
                               "record_every", "target", "linear_tabular", "bellman", "ema_decay", "allow_divergence"},
                           "");
    if (!j.contains("env")) throw ConfigError("missing field 'env'");
    RunDocument doc;
    doc.env = parse_env(j.at("env"));
    auto& r = doc.run;
    std::string algorithm(to_string(r.algorithm));
    detail::read_field(j, "algorithm", "", algorithm);
    try {
        r.algorithm = parse_algorithm(algorithm);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("field 'algorithm': ") + e.what());
    }
    if (j.contains("net")) r.net = parse_net(j.at("net"));
    if (j.contains("step")) r.step = parse_step(j.at("step"));
    if (j.contains("omega") && j.at("omega").is_string()) {
        if (j.at("omega").get<std::string>() != "inf") throw ConfigError("field 'omega' must be a number or \"inf\"");
        r.omega = std::numeric_limits<double>::infinity();
    } else {
        detail::read_field(j, "omega", "", r.omega);
    }
    detail::read_field(j, "horizon", "", r.horizon);
    std::string sampling(to_string(r.sampling));
    detail::read_field(j, "sampling", "", sampling);
    try {
        r.sampling = parse_sampling(sampling);
    } catch (const Error& e) {
        throw ConfigError(std::string("field 'sampling': ") + e.what());
    }
    if (j.contains("burn_in") && j.at("burn_in").is_string()) {
        if (j.at("burn_in").get<std::string>() != "mixing") throw ConfigError("field 'burn_in' must be an integer or \"mixing\"");
        r.burn_in = -1;
    } else {
        detail::read_field(j, "burn_in", "", r.burn_in);
    }
    detail::read_field(j, "seed", "", r.seed);
    detail::read_field(j, "record_every", "", r.record_every);
    if (j.contains("target")) {
        const json& t = j.at("target");
        detail::require_object(t, "target");
        detail::reject_unknown(t, {"representable", "rho"}, "target.");
        detail::read_field(t, "representable", "target.", r.target.representable);
        detail::read_field(t, "rho", "target.", r.target.rho);
        if (!(r.target.rho > 0.0)) throw ConfigError("field 'target.rho' must be positive");
    }
    detail::read_field(j, "linear_tabular", "", r.linear_tabular);
    std::string bellman = r.bellman == BellmanMode::exact ? "exact" : "ema";
    detail::read_field(j, "bellman", "", bellman);
    if (bellman == "exact") {
        r.bellman = BellmanMode::exact;
    } else if (bellman == "ema") {
        r.bellman = BellmanMode::ema;
    } else {
        throw ConfigError("field 'bellman' must be exact or ema");
    }
    detail::read_field(j, "ema_decay", "", r.ema_decay);
    detail::read_field(j, "allow_divergence", "", r.allow_divergence);

    if (!(r.omega > 0.0)) throw ConfigError("field 'omega' must be positive");
    if (r.horizon < 0) throw ConfigError("field 'horizon' must be >= 0");
    if (r.record_every < 1) throw ConfigError("field 'record_every' must be >= 1");
    if (r.burn_in < -1) throw ConfigError("field 'burn_in' must be >= 0");
    if (!(r.ema_decay >= 0.0 && r.ema_decay < 1.0)) throw ConfigError("field 'ema_decay' must lie in [0, 1)");
    return doc;
}

/// A sweep document: a run document plus {sweep: {axis, values, seeds, reference_width}}.
inline SweepSpec parse_sweep_config(const json& j) {
    detail::require_object(j, "<root>");
    if (!j.contains("sweep")) throw ConfigError("missing field 'sweep'");
    json run_part = j;
    run_part.erase("sweep");
    const RunDocument doc = parse_run_config(run_part);

    const json& s = j.at("sweep");
    detail::require_object(s, "sweep");
    detail::reject_unknown(s, {"axis", "values", "seeds", "reference_width"}, "sweep.");
    SweepSpec spec;
    spec.base = doc.run;
    spec.env = doc.env;
    std::string axis = "width";
    detail::read_field(s, "axis", "sweep.", axis);
    try {
        spec.axis = parse_axis(axis);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("field 'sweep.axis': ") + e.what());
    }
    if (!s.contains("values") || !s.at("values").is_array()) throw ConfigError("field 'sweep.values' must be an array");
    for (const auto& v : s.at("values")) spec.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    detail::read_field(s, "seeds", "sweep.", spec.seeds);
    if (spec.seeds.empty()) spec.seeds.push_back(doc.run.seed);
    detail::read_field(s, "reference_width", "sweep.", spec.reference_width);
    if (!(spec.reference_width > 0.0)) throw ConfigError("field 'sweep.reference_width' must be positive");
    expand_cells(spec);  // surfaces bad axis values before any work starts
    return spec;
}

}  // namespace ntd
