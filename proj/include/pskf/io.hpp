// JSON and CSV encodings of systems, analysis reports and Monte Carlo
// summaries. Matrices are nested row-major arrays; vectors are flat arrays.
#pragma once

#include "mare.hpp"
#include "model.hpp"
#include "sim.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace pskf::io {

using json = nlohmann::json;

/// Raised for well-formed JSON that does not match the expected schema.
class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline double number_from(const json& j, const std::string& what) {
    if (!j.is_number()) throw SchemaError(what + ": expected a number");
    return j.get<double>();
}

/// Accepts [[...], ...] or, for 1x1 matrices, a bare number.
inline Matrix matrix_from(const json& j, const std::string& what) {
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw SchemaError(what + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (!j[0].is_array() || j[0].empty()) throw SchemaError(what + ": rows must be non-empty arrays");
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw SchemaError(what + ": ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(i, c) = number_from(row[static_cast<std::size_t>(c)], what + "[" + std::to_string(i) + "][" + std::to_string(c) + "]");
    }
    return m;
}

inline Vector vector_from(const json& j, const std::string& what) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array()) throw SchemaError(what + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        // Tolerate a column written as [[a], [b]].
        const json& e = j[i].is_array() && j[i].size() == 1 ? j[i][0] : j[i];
        v(static_cast<Eigen::Index>(i)) = number_from(e, what + "[" + std::to_string(i) + "]");
    }
    return v;
}

inline const json& require_key(const json& j, const char* key, const std::string& ctx) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(ctx + ": missing key '" + key + "'");
    return j.at(key);
}

/// Parses {"A", "C", "Q", "R", "x0_mean", "P0"}. Only dimensions are checked
/// here; covariance invariants are left to validate()/require_well_formed().
inline LinearSystem system_from_json(const json& j) {
    LinearSystem s;
    s.A = matrix_from(require_key(j, "A", "system"), "A");
    s.C = matrix_from(require_key(j, "C", "system"), "C");
    s.Q = matrix_from(require_key(j, "Q", "system"), "Q");
    s.R = matrix_from(require_key(j, "R", "system"), "R");
    s.x0_mean = vector_from(require_key(j, "x0_mean", "system"), "x0_mean");
    s.P0 = matrix_from(require_key(j, "P0", "system"), "P0");
    check_dimensions(s);
    return s;
}

inline json system_to_json(const LinearSystem& s) {
    return {{"A", to_json(s.A)}, {"C", to_json(s.C)}, {"Q", to_json(s.Q)},
            {"R", to_json(s.R)}, {"x0_mean", to_json(s.x0_mean)}, {"P0", to_json(s.P0)}};
}

inline json validation_to_json(const ValidationReport& r) {
    return {{"controllable", r.controllable}, {"observable", r.observable}, {"r_diagonal", r.r_diagonal},
            {"covariances_ok", r.covariances_ok}, {"messages", r.messages}};
}

inline json report_to_json(const MareReport& rep, const MareProblem& p) {
    json out;
    out["lambdas"] = to_json(p.lambdas);
    out["status"] = to_string(rep.iteration.status);
    out["fixed_point"] = rep.iteration.status == IterationStatus::converged ? to_json(rep.iteration.P) : json(nullptr);
    out["iterations"] = rep.iteration.iterations;
    out["last_increment"] = rep.iteration.last_increment;
    out["trace_history"] = rep.iteration.trace_history;
    out["necessary"] = {{"lhs", rep.necessary.lhs}, {"rhs", rep.necessary.rhs}, {"ok", rep.necessary.ok}};
    json suff = {{"ok", rep.sufficient.ok}, {"margin", nullptr}, {"gains", nullptr}, {"p_tilde", nullptr}};
    if (const auto& cert = rep.sufficient.certificate) {
        suff["margin"] = cert->margin;
        json gains = json::array();
        for (const auto& g : cert->gains) gains.push_back(to_json(g));
        suff["gains"] = std::move(gains);
        suff["p_tilde"] = to_json(cert->p_tilde);
        suff["inflation"] = cert->inflation;
        suff["direction"] = cert->direction;
    }
    suff["notes"] = rep.sufficient.notes;
    out["sufficient"] = std::move(suff);
    out["notes"] = rep.notes;
    return out;
}

/// Locale-independent shortest round-trip formatting; non-finite values
/// print as nan / inf / -inf.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// One row per step k: k, trace_mean_P, trace_empirical_cov,
/// lower_bound_trace, upper_bound_trace, energy_mean, high_rate_1..m.
/// Bounds at row k are built from mean_P[k - 1]; row 0 has nan bounds.
inline void write_summary_csv(std::ostream& os, const MonteCarloSummary& s, const BoundReport& b) {
    const auto m = s.high_power_rate.size();
    os << "k,trace_mean_P,trace_empirical_cov,lower_bound_trace,upper_bound_trace,energy_mean";
    for (Eigen::Index i = 0; i < m; ++i) os << ",high_rate_" << (i + 1);
    os << '\n';
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < s.mean_P.size(); ++k) {
        double lo = nan, hi = nan;
        if (k > 0 && k - 1 < b.steps.size()) {
            lo = b.steps[k - 1].lower_trace;
            hi = b.steps[k - 1].upper_trace;
        }
        os << k << ',' << format_number(s.mean_P[k].trace()) << ',' << format_number(s.empirical_cov[k].trace()) << ','
           << format_number(lo) << ',' << format_number(hi) << ',' << format_number(s.energy_mean[k]);
        for (Eigen::Index i = 0; i < m; ++i) os << ',' << format_number(s.high_rate_step[k](i));
        os << '\n';
    }
}

inline json summary_to_json(const MonteCarloSummary& s, const BoundReport& b, bool full_matrices) {
    json out;
    out["horizon"] = s.horizon;
    out["trials"] = s.trials;
    out["truncated_trials"] = s.truncated_trials;
    out["mean_energy_per_step"] = s.mean_energy_per_step;
    out["high_power_rate"] = to_json(s.high_power_rate);
    out["epsilon"] = {{"mean", s.epsilon_mean}, {"variance", s.epsilon_var}, {"count", s.epsilon_count}};
    out["bounds"] = {{"flagged_steps", b.flagged}, {"flagged_fraction", b.flagged_fraction}};
    if (full_matrices) {
        json mp = json::array(), ec = json::array(), se = json::array();
        for (std::size_t k = 0; k < s.mean_P.size(); ++k) {
            mp.push_back(to_json(s.mean_P[k]));
            ec.push_back(to_json(s.empirical_cov[k]));
            se.push_back(to_json(s.se_P[k]));
        }
        out["mean_P"] = std::move(mp);
        out["empirical_cov"] = std::move(ec);
        out["se_mean_P"] = std::move(se);
    }
    return out;
}

}  // namespace pskf::io
