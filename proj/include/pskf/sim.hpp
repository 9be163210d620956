// Closed-loop sensor / channel / estimator simulation and Monte Carlo
// aggregation of the reported covariance, the empirical error second moment,
// and energy use.
#pragma once

#include "channel.hpp"
#include "filter.hpp"
#include "linalg.hpp"
#include "mare.hpp"
#include "model.hpp"
#include "stats.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace pskf {

struct StepRecord {
    Vector error;  // x_k - x_hat_{k|k}
    Matrix P;      // reported P_{k|k}
    std::vector<SlotOutcome> slots;
    double energy = 0.0;
};

struct TrialRecord {
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;  // steps[0] is the prior at k = 0
    bool truncated = false;
    long truncated_at = -1;
};

struct SimOptions {
    /// Trials whose trace(P) exceeds this stop early and are flagged.
    double trace_ceiling = 1e15;
    /// 0 means: PSKF_WORKERS from the environment, else hardware concurrency.
    unsigned workers = 0;
};

inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PSKF_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline void check_sim_inputs(const LinearSystem& sys, const SchedulerConfig& cfg, long horizon) {
    require_well_formed(sys);
    cfg.check();
    if (static_cast<Eigen::Index>(cfg.eta.size()) != sys.meas_dim())
        throw std::invalid_argument("scheduler: need one threshold per measurement component");
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
}

inline Vector draw_normal(const Matrix& factor, Rng& rng, std::normal_distribution<double>& nd) {
    Vector z(factor.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = nd(rng);
    return factor * z;
}

}  // namespace detail

/// One closed-loop run. Non-diagonal R is whitened first; the reported
/// covariance is unaffected by that transform.
inline TrialRecord simulate_trial(const LinearSystem& sys_in, const SchedulerConfig& cfg, long horizon,
                                  std::uint64_t seed, const SimOptions& opt = {}) {
    detail::check_sim_inputs(sys_in, cfg, horizon);
    const LinearSystem sys = ensure_diagonal_r(sys_in);
    const auto m = sys.meas_dim();
    const std::vector<ComponentStats> stats = cfg.stats();
    const Matrix p0_factor = sampling_factor(sys.P0);
    const Matrix q_factor = sampling_factor(sys.Q);
    Vector r_std(m);
    for (Eigen::Index i = 0; i < m; ++i) r_std(i) = std::sqrt(sys.R(i, i));

    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);

    TrialRecord rec;
    rec.seed = seed;
    rec.steps.reserve(horizon + 1);

    Vector x = sys.x0_mean + detail::draw_normal(p0_factor, rng, nd);
    FilterState est = FilterState::initial(sys);
    rec.steps.push_back({x - est.x_hat, est.P, {}, 0.0});

    for (long k = 1; k <= horizon; ++k) {
        x = sys.A * x + detail::draw_normal(q_factor, rng, nd);
        Vector y = sys.C * x;
        for (Eigen::Index i = 0; i < m; ++i) y(i) += r_std(i) * nd(rng);

        StepRecord step;
        step.slots.reserve(m);
        est = predict(est, sys);
        for (Eigen::Index i = 0; i < m; ++i) {
            // Sensor side: the estimator has fed back C_i x_hat and sigma.
            const InnovationStats fb = innovation_stats(est, sys, i);
            const ScheduleDecision dec = schedule(y(i), fb.z_pred, fb.sigma, cfg.eta[i]);
            const bool arrived = transmit(dec.gamma, cfg.beta, rng);
            const SlotOutcome out = make_outcome(dec.gamma, arrived, dec.epsilon, cfg);
            // Estimator side.
            SlotUpdateInput in;
            in.component = i;
            in.gamma = out.gamma;
            in.beta_bit = out.beta_bit;
            if (out.delivered) in.y = y(i);
            est = update_component(est, sys, in, stats[i]);
            step.energy += out.energy;
            step.slots.push_back(out);
        }
        step.error = x - est.x_hat;
        step.P = est.P;
        // Re-center on the estimate so magnitudes stay at the error scale.
        x = step.error;
        est.x_hat.setZero();
        rec.steps.push_back(std::move(step));

        const double tr = est.P.trace();
        if (!std::isfinite(tr) || tr > opt.trace_ceiling) {
            rec.truncated = true;
            rec.truncated_at = k;
            break;
        }
    }
    return rec;
}

struct MonteCarloSummary {
    long horizon = 0;
    long trials = 0;
    long truncated_trials = 0;
    std::vector<long> active;             // trials contributing at step k
    std::vector<Matrix> mean_P;           // average reported P_{k|k}
    std::vector<Matrix> se_P;             // elementwise standard error of mean_P
    std::vector<Matrix> empirical_cov;    // average of e_k e_k'
    std::vector<double> energy_mean;      // per step, 0 at k = 0
    std::vector<Vector> high_rate_step;   // per step and component, NaN at k = 0
    double mean_energy_per_step = 0.0;
    Vector high_power_rate;               // pooled over all steps
    double epsilon_mean = 0.0;            // pooled normalized innovations
    double epsilon_var = 0.0;
    long epsilon_count = 0;
};

namespace detail {

/// Additive sufficient statistics; merging two accumulators is exact
/// addition, which makes pairwise reduction order-independent up to rounding.
struct Accumulator {
    std::vector<long> count;
    std::vector<Matrix> sum_p;
    std::vector<Matrix> sum_p2;
    std::vector<Matrix> sum_ee;
    std::vector<double> sum_energy;
    std::vector<Vector> sum_gamma;
    double sum_eps = 0.0;
    double sum_eps2 = 0.0;
    long n_eps = 0;
    long truncated = 0;
    long trials = 0;

    Accumulator() = default;
    Accumulator(long horizon, Eigen::Index n, Eigen::Index m)
        : count(horizon + 1, 0),
          sum_p(horizon + 1, Matrix::Zero(n, n)),
          sum_p2(horizon + 1, Matrix::Zero(n, n)),
          sum_ee(horizon + 1, Matrix::Zero(n, n)),
          sum_energy(horizon + 1, 0.0),
          sum_gamma(horizon + 1, Vector::Zero(m)) {}

    void add(const TrialRecord& t) {
        ++trials;
        if (t.truncated) ++truncated;
        for (std::size_t k = 0; k < t.steps.size() && k < count.size(); ++k) {
            const auto& s = t.steps[k];
            ++count[k];
            sum_p[k] += s.P;
            sum_p2[k] += s.P.cwiseProduct(s.P);
            sum_ee[k] += s.error * s.error.transpose();
            sum_energy[k] += s.energy;
            for (std::size_t i = 0; i < s.slots.size(); ++i) {
                if (s.slots[i].gamma) sum_gamma[k](static_cast<Eigen::Index>(i)) += 1.0;
                sum_eps += s.slots[i].epsilon;
                sum_eps2 += s.slots[i].epsilon * s.slots[i].epsilon;
                ++n_eps;
            }
        }
    }

    void merge(const Accumulator& o) {
        for (std::size_t k = 0; k < count.size(); ++k) {
            count[k] += o.count[k];
            sum_p[k] += o.sum_p[k];
            sum_p2[k] += o.sum_p2[k];
            sum_ee[k] += o.sum_ee[k];
            sum_energy[k] += o.sum_energy[k];
            sum_gamma[k] += o.sum_gamma[k];
        }
        sum_eps += o.sum_eps;
        sum_eps2 += o.sum_eps2;
        n_eps += o.n_eps;
        truncated += o.truncated;
        trials += o.trials;
    }
};

template <class Leaf>
Accumulator pairwise_reduce(std::size_t lo, std::size_t hi, const Leaf& leaf) {
    if (hi - lo == 1) return leaf(lo);
    const std::size_t mid = lo + (hi - lo) / 2;
    Accumulator left = pairwise_reduce(lo, mid, leaf);
    left.merge(pairwise_reduce(mid, hi, leaf));
    return left;
}

inline MonteCarloSummary finalize(const Accumulator& acc, long horizon, Eigen::Index n, Eigen::Index m) {
    MonteCarloSummary s;
    s.horizon = horizon;
    s.trials = acc.trials;
    s.truncated_trials = acc.truncated;
    s.active = acc.count;
    s.high_power_rate = Vector::Zero(m);
    double energy_total = 0.0;
    long step_total = 0;
    Vector gamma_total = Vector::Zero(m);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (long k = 0; k <= horizon; ++k) {
        const double c = static_cast<double>(acc.count[k]);
        if (acc.count[k] == 0) {
            s.mean_P.push_back(Matrix::Constant(n, n, nan));
            s.se_P.push_back(Matrix::Constant(n, n, nan));
            s.empirical_cov.push_back(Matrix::Constant(n, n, nan));
            s.energy_mean.push_back(nan);
            s.high_rate_step.push_back(Vector::Constant(m, nan));
            continue;
        }
        const Matrix mean = acc.sum_p[k] / c;
        s.mean_P.push_back(mean);
        Matrix se = Matrix::Zero(n, n);
        if (acc.count[k] > 1) {
            const Matrix var = (acc.sum_p2[k] / c - mean.cwiseProduct(mean)).cwiseMax(0.0) * (c / (c - 1.0));
            se = (var / c).cwiseSqrt();
        }
        s.se_P.push_back(se);
        s.empirical_cov.push_back(symmetrized(acc.sum_ee[k] / c));
        s.energy_mean.push_back(acc.sum_energy[k] / c);
        s.high_rate_step.push_back(k == 0 ? Vector::Constant(m, nan) : Vector(acc.sum_gamma[k] / c));
        if (k > 0) {
            energy_total += acc.sum_energy[k];
            step_total += acc.count[k];
            gamma_total += acc.sum_gamma[k];
        }
    }
    if (step_total > 0) {
        s.mean_energy_per_step = energy_total / static_cast<double>(step_total);
        s.high_power_rate = gamma_total / static_cast<double>(step_total);
    } else {
        s.mean_energy_per_step = nan;
        s.high_power_rate = Vector::Constant(m, nan);
    }
    s.epsilon_count = acc.n_eps;
    if (acc.n_eps > 0) {
        s.epsilon_mean = acc.sum_eps / static_cast<double>(acc.n_eps);
        s.epsilon_var = acc.sum_eps2 / static_cast<double>(acc.n_eps) - s.epsilon_mean * s.epsilon_mean;
    }
    return s;
}

}  // namespace detail

/// Aggregates already simulated trials with pairwise summation.
inline MonteCarloSummary aggregate(std::span<const TrialRecord> trials, long horizon, Eigen::Index n, Eigen::Index m) {
    if (trials.empty()) throw std::invalid_argument("aggregate: need at least one trial");
    auto leaf = [&](std::size_t i) {
        detail::Accumulator a(horizon, n, m);
        a.add(trials[i]);
        return a;
    };
    return detail::finalize(detail::pairwise_reduce(0, trials.size(), leaf), horizon, n, m);
}

/// Runs `trials` independent trials with seeds derive_seed(master_seed, i).
/// Trials are grouped in fixed blocks of 64, each block reduced pairwise and
/// the blocks reduced pairwise in index order, so the result does not depend
/// on the worker count.
inline MonteCarloSummary monte_carlo(const LinearSystem& sys, const SchedulerConfig& cfg, long horizon, long trials,
                                     std::uint64_t master_seed, const SimOptions& opt = {}) {
    if (trials < 1) throw std::invalid_argument("monte_carlo: trials must be >= 1");
    detail::check_sim_inputs(sys, cfg, horizon);
    const auto n = sys.state_dim();
    const auto m = sys.meas_dim();
    constexpr long block = 64;
    const long n_blocks = (trials + block - 1) / block;
    std::vector<detail::Accumulator> blocks(n_blocks);

    auto run_block = [&](long b) {
        const long first = b * block;
        const long last = std::min(trials, first + block);
        std::vector<TrialRecord> recs;
        recs.reserve(last - first);
        for (long t = first; t < last; ++t)
            recs.push_back(simulate_trial(sys, cfg, horizon, derive_seed(master_seed, static_cast<std::uint64_t>(t)), opt));
        auto leaf = [&](std::size_t i) {
            detail::Accumulator a(horizon, n, m);
            a.add(recs[i]);
            return a;
        };
        blocks[b] = detail::pairwise_reduce(0, recs.size(), leaf);
    };

    const unsigned workers = std::min<unsigned>(resolve_workers(opt.workers), static_cast<unsigned>(n_blocks));
    if (workers <= 1) {
        for (long b = 0; b < n_blocks; ++b) run_block(b);
    } else {
        std::atomic<long> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::atomic<bool> failed{false};
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (long b = next++; b < n_blocks; b = next++) {
                    try {
                        run_block(b);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    auto leaf = [&](std::size_t i) { return blocks[i]; };
    return detail::finalize(detail::pairwise_reduce(0, blocks.size(), leaf), horizon, n, m);
}

// ---------------------------------------------------------------------------

struct BoundStep {
    long k = 0;  // compares mean_P[k + 1] against bounds built from mean_P[k]
    double lower_trace = 0.0;
    double upper_trace = 0.0;
    double lower_violation = 0.0;  // max(0, -min eig(mean_P[k+1] - lower))
    double upper_violation = 0.0;  // max(0, -min eig(upper - mean_P[k+1]))
    double slack = 0.0;
    bool flagged = false;
};

struct BoundReport {
    std::vector<BoundStep> steps;
    long flagged = 0;
    double flagged_fraction = 0.0;
};

struct BoundOptions {
    double se_multiplier = 5.0;
    /// Relative floor for round-off when the standard error vanishes.
    double rel_floor = 1e-9;
};

/// Checks prod(1 - l) h(M_k) <= M_{k+1} <= varphi(M_k) for the mean filtered
/// covariances M_k. Applying h to all three sides gives the bound on mean
/// predicted covariances, prod(1 - l) A h(M_k) A' + Q <= h(M_{k+1}). The slack is se_multiplier times the standard
/// error of both sides (Frobenius norm of the elementwise SE, the M_k part
/// propagated through ||A||^2), applied as a multiple of the identity.
inline BoundReport bound_check(const MonteCarloSummary& s, const MareProblem& p, const BoundOptions& opt = {}) {
    p.check();
    BoundReport rep;
    double shrink = 1.0;
    for (Eigen::Index i = 0; i < p.lambdas.size(); ++i) shrink *= 1.0 - p.lambdas(i);
    const double a_norm2 = std::pow(p.sys.A.operatorNorm(), 2);
    long considered = 0;
    for (long k = 0; k + 1 < static_cast<long>(s.mean_P.size()); ++k) {
        if (s.active[k] == 0 || s.active[k + 1] == 0) break;
        const Matrix& cur = s.mean_P[k];
        const Matrix& nxt = s.mean_P[k + 1];
        const Matrix lower = shrink * h_op(cur, p.sys);
        const Matrix upper = varphi(cur, p);
        BoundStep b;
        b.k = k;
        b.lower_trace = lower.trace();
        b.upper_trace = upper.trace();
        b.lower_violation = std::max(0.0, -min_eigenvalue(nxt - lower));
        b.upper_violation = std::max(0.0, -min_eigenvalue(upper - nxt));
        b.slack = opt.se_multiplier * (s.se_P[k + 1].norm() + a_norm2 * s.se_P[k].norm()) +
                  opt.rel_floor * (1.0 + max_abs(nxt));
        b.flagged = b.lower_violation > b.slack || b.upper_violation > b.slack;
        rep.flagged += b.flagged ? 1 : 0;
        rep.steps.push_back(b);
        ++considered;
    }
    rep.flagged_fraction = considered ? static_cast<double>(rep.flagged) / static_cast<double>(considered) : 0.0;
    return rep;
}

/// Lambda vector implied by a scheduler configuration.
inline Vector lambdas_of(const SchedulerConfig& cfg) {
    Vector l(static_cast<Eigen::Index>(cfg.eta.size()));
    for (std::size_t i = 0; i < cfg.eta.size(); ++i) l(static_cast<Eigen::Index>(i)) = component_stats(cfg.eta[i], cfg.beta).lambda;
    return l;
}

}  // namespace pskf
