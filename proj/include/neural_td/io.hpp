#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neural_td/errors.hpp"
#include "neural_td/mdp.hpp"
#include "neural_td/network.hpp"

namespace ntd {

using json = nlohmann::json;

namespace detail {

inline json matrix_to_json(const MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

inline MatrixXd matrix_from_json(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) throw InvalidMdp("field '" + field + "' must be a non-empty array of arrays");
    const auto rows = j.size();
    const auto cols = j.at(0).size();
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw InvalidMdp("field '" + field + "' is ragged");
        for (std::size_t k = 0; k < cols; ++k) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
    }
    return m;
}

inline json vector_to_json(const VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline VectorXd vector_from_json(const json& j) {
    VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PersistFailed("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw PersistFailed("failed writing '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MDP documents: {states, actions, kernel[s][a][s'], reward[s][a], gamma, r_max}
// ---------------------------------------------------------------------------

inline json mdp_to_json(const Mdp& mdp) {
    json j;
    j["states"] = detail::matrix_to_json(mdp.states);
    j["actions"] = mdp.actions;
    json kernel = json::array();
    for (Eigen::Index s = 0; s < mdp.num_states(); ++s) {
        json per_action = json::array();
        for (const auto& K : mdp.kernel) per_action.push_back(detail::vector_to_json(K.row(s).transpose()));
        kernel.push_back(std::move(per_action));
    }
    j["kernel"] = std::move(kernel);
    j["reward"] = detail::matrix_to_json(mdp.reward);
    j["gamma"] = mdp.gamma;
    j["r_max"] = mdp.r_max;
    return j;
}

/// Parses and validates an MDP document; throws InvalidMdp on any violation.
inline Mdp mdp_from_json(const json& j) {
    try {
        for (const char* field : {"states", "actions", "kernel", "reward", "gamma", "r_max"}) {
            if (!j.contains(field)) throw InvalidMdp(std::string("missing field '") + field + "'");
        }
        Mdp mdp;
        mdp.states = detail::matrix_from_json(j.at("states"), "states");
        mdp.actions = j.at("actions").get<std::vector<std::string>>();
        const auto n = mdp.states.rows();
        const auto A = static_cast<Eigen::Index>(mdp.actions.size());
        const json& kernel = j.at("kernel");
        if (!kernel.is_array() || static_cast<Eigen::Index>(kernel.size()) != n) {
            throw InvalidMdp("kernel must have one entry per state");
        }
        mdp.kernel.assign(static_cast<std::size_t>(A), MatrixXd::Zero(n, n));
        for (Eigen::Index s = 0; s < n; ++s) {
            const json& per_action = kernel[static_cast<std::size_t>(s)];
            if (static_cast<Eigen::Index>(per_action.size()) != A) throw InvalidMdp("kernel[s] must have one row per action");
            for (Eigen::Index a = 0; a < A; ++a) {
                const json& row = per_action[static_cast<std::size_t>(a)];
                if (static_cast<Eigen::Index>(row.size()) != n) throw InvalidMdp("kernel[s][a] must have n entries");
                for (Eigen::Index t = 0; t < n; ++t) {
                    mdp.kernel[static_cast<std::size_t>(a)](s, t) = row[static_cast<std::size_t>(t)].get<double>();
                }
            }
        }
        mdp.reward = detail::matrix_from_json(j.at("reward"), "reward");
        mdp.gamma = j.at("gamma").get<double>();
        mdp.r_max = j.at("r_max").get<double>();
        validate(mdp);
        return mdp;
    } catch (const json::exception& e) {
        throw InvalidMdp(std::string("malformed MDP document: ") + e.what());
    }
}

inline Mdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidMdp("cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidMdp("'" + path + "' is not valid JSON: " + e.what());
    }
    return mdp_from_json(j);
}

inline void save_mdp(const Mdp& mdp, const std::string& path) { detail::write_text_file(path, mdp_to_json(mdp).dump(2)); }

// ---------------------------------------------------------------------------
// Network checkpoints: {config, theta (canonical order), b}
// ---------------------------------------------------------------------------

inline json checkpoint_to_json(const NetParams& p) {
    const auto& c = p.config();
    json j;
    j["config"] = {{"depth", c.depth},
                   {"width", c.width},
                   {"input_dim", c.input_dim},
                   {"activation", std::string(to_string(c.activation))},
                   {"seed", c.seed}};
    j["theta"] = detail::vector_to_json(p.theta());
    j["b"] = detail::vector_to_json(p.b());
    return j;
}

inline NetParams checkpoint_from_json(const json& j) {
    try {
        const json& c = j.at("config");
        NetConfig cfg;
        cfg.depth = c.at("depth").get<int>();
        cfg.width = c.at("width").get<int>();
        cfg.input_dim = c.at("input_dim").get<int>();
        cfg.activation = parse_activation(c.at("activation").get<std::string>());
        cfg.seed = c.at("seed").get<std::uint64_t>();
        return NetParams(cfg, detail::vector_from_json(j.at("theta")), detail::vector_from_json(j.at("b")));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const NetParams& p, const std::string& path) {
    detail::write_text_file(path, checkpoint_to_json(p).dump());
}

inline NetParams load_checkpoint(const std::string& path) { return checkpoint_from_json(detail::read_json_file(path)); }

}  // namespace ntd
