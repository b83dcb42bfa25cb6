#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "neural_td/errors.hpp"

namespace ntd {

/// One recorded step of a run. Metrics that do not apply to a run (no known
/// target, no projection, ...) are left empty and serialize as empty fields.
struct TraceRow {
    std::int64_t t = 0;
    double avg_bellman_error = 0.0;
    std::optional<double> n_error;
    std::optional<double> d_error;
    std::optional<double> dist_ratio;
    std::optional<double> grad_diff;
    std::optional<double> dist_to_star;
};

struct RunTrace {
    std::vector<TraceRow> rows;
    double gamma = 0.0;
    bool projected = false;

    // Run-level summaries (not part of the per-row CSV).
    std::optional<double> time_avg_n_error;
    std::optional<double> initial_n_error;
    std::optional<double> initial_dist_to_star;
    std::optional<double> max_dist_to_star;
    std::optional<double> step_lambda;
    std::optional<double> sigma_min;
    bool diverged = false;
    std::string divergence_message;
};

inline constexpr const char* kTraceHeader = "t,avg_bellman_error,n_error,d_error,dist_ratio,grad_diff,dist_to_star";
inline constexpr double kDistRatioSlack = 1e-12;

/// Throws PersistFailed if any row breaks a trace invariant: every value
/// finite, dist_ratio in [0, 1 + 1e-12] for projected runs, and
/// n_error >= (1 - gamma) d_error when both are recorded and gamma is known.
inline void validate_trace(const std::vector<TraceRow>& rows, std::optional<double> gamma, bool projected) {
    auto finite = [](const std::optional<double>& v) { return !v || std::isfinite(*v); };
    for (const auto& r : rows) {
        const std::string where = " at t = " + std::to_string(r.t);
        if (!std::isfinite(r.avg_bellman_error) || !finite(r.n_error) || !finite(r.d_error) || !finite(r.dist_ratio) ||
            !finite(r.grad_diff) || !finite(r.dist_to_star)) {
            throw PersistFailed("non-finite metric" + where);
        }
        if (r.dist_ratio && (*r.dist_ratio < 0.0 || (projected && *r.dist_ratio > 1.0 + kDistRatioSlack))) {
            throw PersistFailed("dist_ratio " + std::to_string(*r.dist_ratio) + " outside [0, 1]" + where);
        }
        if (gamma && r.n_error && r.d_error) {
            const double floor = (1.0 - *gamma) * *r.d_error;
            if (*r.n_error < floor - 1e-12 * (1.0 + floor)) {
                throw PersistFailed("n_error below (1 - gamma) d_error" + where);
            }
        }
    }
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::optional<double> parse_optional(const std::string& field) {
    if (field.empty()) return std::nullopt;
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw PersistFailed("malformed number '" + field + "'");
    return v;
}

}  // namespace detail

inline std::string trace_to_csv(const RunTrace& trace) {
    validate_trace(trace.rows, trace.gamma, trace.projected);
    std::string out = std::string(kTraceHeader) + "\n";
    for (const auto& r : trace.rows) {
        out += std::to_string(r.t);
        out += ',' + detail::format_double(r.avg_bellman_error);
        out += ',' + detail::format_optional(r.n_error);
        out += ',' + detail::format_optional(r.d_error);
        out += ',' + detail::format_optional(r.dist_ratio);
        out += ',' + detail::format_optional(r.grad_diff);
        out += ',' + detail::format_optional(r.dist_to_star);
        out += '\n';
    }
    return out;
}

inline void write_trace_csv(const RunTrace& trace, const std::string& path) {
    const std::string text = trace_to_csv(trace);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PersistFailed("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw PersistFailed("failed writing '" + path + "'");
}

/// Parses a trace CSV, rejecting any header that is not exactly the
/// published schema and any row that breaks the trace invariants.
inline std::vector<TraceRow> parse_trace_csv(std::istream& in, std::optional<double> gamma = std::nullopt,
                                             bool projected = true) {
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) throw PersistFailed("trace CSV header mismatch");
    std::vector<TraceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw PersistFailed("trace CSV row has " + std::to_string(f.size()) + " fields");
        try {
            TraceRow r;
            r.t = std::stoll(f[0]);
            r.avg_bellman_error = std::stod(f[1]);
            r.n_error = detail::parse_optional(f[2]);
            r.d_error = detail::parse_optional(f[3]);
            r.dist_ratio = detail::parse_optional(f[4]);
            r.grad_diff = detail::parse_optional(f[5]);
            r.dist_to_star = detail::parse_optional(f[6]);
            rows.push_back(r);
        } catch (const std::logic_error& e) {
            throw PersistFailed(std::string("malformed trace row: ") + e.what());
        }
    }
    validate_trace(rows, gamma, projected);
    return rows;
}

inline std::vector<TraceRow> read_trace_csv(const std::string& path, std::optional<double> gamma = std::nullopt,
                                            bool projected = true) {
    std::ifstream in(path);
    if (!in) throw PersistFailed("cannot open '" + path + "'");
    return parse_trace_csv(in, gamma, projected);
}

}  // namespace ntd
