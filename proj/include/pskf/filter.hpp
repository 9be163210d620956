// Remote MMSE estimator for the power-scheduled sequential Kalman filter.
//
// Each sampling instant is split into m slots. Slot i carries the scalar
// y^i, sent with high power (gamma = 1, always delivered) when the
// normalized innovation exceeds the threshold, otherwise with low power
// (gamma = 0, delivered when beta_bit = 1). The estimator knows (gamma,
// beta_bit) for every slot, so an undelivered low-power slot still tells it
// |eps| <= eta and the covariance shrinks by the truncated-Gaussian factor nu.
#pragma once

#include "linalg.hpp"
#include "model.hpp"
#include "stats.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace pskf {

struct FilterState {
    Vector x_hat;
    Matrix P;
    long k = 0;

    static FilterState initial(const LinearSystem& sys) { return {sys.x0_mean, symmetrized(sys.P0), 0}; }
};

struct SlotUpdateInput {
    Eigen::Index component = 0;  // zero-based row of C
    std::optional<double> y;     // present iff delivered
    bool gamma = false;
    bool beta_bit = false;

    bool delivered() const { return gamma || beta_bit; }
};

struct InnovationStats {
    double z_pred = 0.0;  // C_i x_hat
    double sigma = 0.0;   // sqrt(C_i P C_i' + R_i)
};

struct SlotTrace {
    double sigma = 0.0;
    std::optional<double> epsilon;  // only observable when the value arrived
    Vector gain;
    double weight = 0.0;  // t(gamma, beta)
};

/// Mean weight s(gamma, beta) = gamma + (1 - gamma) beta.
inline double mean_weight(bool gamma, bool beta_bit) { return (gamma || beta_bit) ? 1.0 : 0.0; }

/// Covariance weight t(gamma, beta) = gamma + (1 - gamma)(beta + (1 - beta) nu).
inline double covariance_weight(bool gamma, bool beta_bit, double nu) {
    if (gamma || beta_bit) return 1.0;
    return nu;
}

/// x <- A x, P <- A P A' + Q.
inline FilterState predict(const FilterState& state, const LinearSystem& sys) {
    FilterState out;
    out.x_hat = sys.A * state.x_hat;
    out.P = symmetrized(sys.A * state.P * sys.A.transpose() + sys.Q);
    out.k = state.k + 1;
    return out;
}

inline InnovationStats innovation_stats(const FilterState& state, const LinearSystem& sys, Eigen::Index i) {
    const auto c = sys.C.row(i);
    const double var = c.dot(state.P * c.transpose()) + sys.R(i, i);
    return {c.dot(state.x_hat), std::sqrt(var)};
}

/// One slot of the sequential measurement update. Requires diagonal R
/// (whiten the system otherwise).
inline FilterState update_component(const FilterState& state, const LinearSystem& sys, const SlotUpdateInput& in,
                                    const ComponentStats& stats_i, SlotTrace* trace = nullptr) {
    if (in.component < 0 || in.component >= sys.meas_dim())
        throw ContractError("update_component: component index out of range");
    if (in.delivered() != in.y.has_value())
        throw ContractError(in.delivered() ? "update_component: delivered slot has no measurement"
                                           : "update_component: measurement present on a dropped slot");

    const auto i = in.component;
    const auto c = sys.C.row(i);
    const Vector pc = state.P * c.transpose();
    const double innov_var = c.dot(pc) + sys.R(i, i);
    const Vector gain = pc / innov_var;

    FilterState out = state;
    const double s = mean_weight(in.gamma, in.beta_bit);
    if (s > 0.0) out.x_hat += s * gain * (in.y.value_or(0.0) - c.dot(state.x_hat));

    const double t = covariance_weight(in.gamma, in.beta_bit, stats_i.nu);
    out.P = state.P - t * gain * pc.transpose();
    symmetrize(out.P);
    psd_floor(out.P);

    if (trace) {
        trace->sigma = std::sqrt(innov_var);
        trace->epsilon = in.y ? std::optional<double>((*in.y - c.dot(state.x_hat)) / trace->sigma) : std::nullopt;
        trace->gain = gain;
        trace->weight = t;
    }
    return out;
}

/// Prediction followed by the m slot updates in index order.
inline std::pair<FilterState, std::vector<SlotTrace>> step(const FilterState& state, const LinearSystem& sys,
                                                           std::span<const SlotUpdateInput> slots,
                                                           std::span<const ComponentStats> stats) {
    const auto m = sys.meas_dim();
    if (static_cast<Eigen::Index>(slots.size()) != m || static_cast<Eigen::Index>(stats.size()) != m)
        throw ContractError("step: need exactly one slot and one ComponentStats per measurement component");
    for (Eigen::Index i = 0; i < m; ++i)
        if (slots[i].component != i) throw ContractError("step: slots must be ordered by component index");

    std::vector<SlotTrace> traces(m);
    FilterState cur = predict(state, sys);
    for (Eigen::Index i = 0; i < m; ++i) cur = update_component(cur, sys, slots[i], stats[i], &traces[i]);
    return {std::move(cur), std::move(traces)};
}

}  // namespace pskf
