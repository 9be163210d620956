// Composite modified algebraic Riccati operator of the scheduled sequential
// filter and its stability tests.
//
// Notation used throughout (row i of C is C_i, R_i = R(i, i)):
//
//   h(X)          = A X A' + Q
//   g_l(X)        = X - l X C_i'(C_i X C_i' + R_i)^{-1} C_i X
//   varphi(X)     = g_{l_m} o ... o g_{l_1} o h (X)
//   psi_l(L, X)   = (1 - l) X + l (E X E' + L R_i L'),   E = I + L C_i
//
// The gain-parameterised envelope T_s unrolls psi_{l_s} o ... o psi_{l_1}:
//
//   T_s = sum_{j=0}^{s} w_{j,s} (E_j T_{j-1} E_j' + L_j R_j L_j'),
//   w_{j,s} = l_j prod_{i=j+1}^{s} (1 - l_i),   l_0 = 1, E_0 = I, R_0 = 0,
//   T_{-1} = T_0 = X,
//
// and phi_m is the same recursion started from h(X). At the sequentially
// optimal gains T_m equals g_{l_m} o ... o g_{l_1}(X) and phi_m equals
// varphi(X); for any other gains they are upper bounds.
#pragma once

#include "linalg.hpp"
#include "model.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pskf {

struct MareProblem {
    LinearSystem sys;  // diagonal R
    Vector lambdas;

    Eigen::Index n() const { return sys.state_dim(); }
    Eigen::Index m() const { return sys.meas_dim(); }

    void check() const {
        check_dimensions(sys);
        if (!is_diagonal(sys.R)) throw std::invalid_argument("MareProblem: R must be diagonal (whiten first)");
        if (lambdas.size() != m()) throw std::invalid_argument("MareProblem: need one lambda per measurement component");
        for (Eigen::Index i = 0; i < lambdas.size(); ++i)
            if (!(lambdas(i) >= 0.0 && lambdas(i) <= 1.0))
                throw std::invalid_argument("MareProblem: lambda[" + std::to_string(i) + "] outside [0, 1]");
    }
};

using Gains = std::vector<Vector>;

inline Matrix h_op(const Matrix& x, const LinearSystem& sys) {
    return symmetrized(sys.A * x * sys.A.transpose() + sys.Q);
}

inline Matrix g_lambda(const Matrix& x, double lambda, const RowVector& c, double r) {
    const Vector xc = x * c.transpose();
    const double s = c.dot(xc) + r;
    return symmetrized(x - (lambda / s) * xc * xc.transpose());
}

/// g_{l_m} o ... o g_{l_1}(X), without the time update.
inline Matrix sequential_update(const Matrix& x, const MareProblem& p) {
    Matrix cur = x;
    for (Eigen::Index i = 0; i < p.m(); ++i) cur = g_lambda(cur, p.lambdas(i), p.sys.C.row(i), p.sys.R(i, i));
    return cur;
}

inline Matrix varphi(const Matrix& x, const MareProblem& p) { return sequential_update(h_op(x, p.sys), p); }

/// Gain that makes psi_l(L, X) coincide with g_l(X).
inline Vector optimal_gain(const Matrix& x, const RowVector& c, double r) {
    const Vector xc = x * c.transpose();
    return -xc / (c.dot(xc) + r);
}

inline Matrix psi_lambda(const Vector& gain, const Matrix& x, double lambda, const RowVector& c, double r) {
    const auto n = x.rows();
    const Matrix e = Matrix::Identity(n, n) + gain * c;
    return symmetrized((1.0 - lambda) * x + lambda * (e * x * e.transpose() + r * gain * gain.transpose()));
}

/// Weights w_{0,s}, ..., w_{s,s} (s + 1 entries) using the first s lambdas.
inline Vector eta_coeffs(const Vector& lambdas, Eigen::Index s) {
    if (s < 0 || s > lambdas.size()) throw std::invalid_argument("eta_coeffs: s outside [0, m]");
    Vector w(s + 1);
    double tail = 1.0;  // prod_{i=j+1}^{s} (1 - l_i)
    for (Eigen::Index j = s; j >= 0; --j) {
        const double lj = j == 0 ? 1.0 : lambdas(j - 1);
        w(j) = lj * tail;
        if (j > 0) tail *= 1.0 - lj;
    }
    return w;
}

namespace detail {

/// Shared body of T_s, phi_m and the linear part. `base` is T_{-1} = T_0.
/// With `with_noise == false` the L R L' terms are dropped.
inline std::vector<Matrix> envelope_recursion(const Matrix& base, std::span<const Vector> gains, const MareProblem& p,
                                              Eigen::Index s_max, bool with_noise) {
    const auto n = base.rows();
    // terms[j] = E_j T_{j-1} E_j' + L_j R_j L_j' for j >= 1; levels[s] = T_s.
    std::vector<Matrix> levels;
    levels.reserve(s_max + 1);
    levels.push_back(base);  // T_0
    std::vector<Matrix> terms(s_max + 1);
    for (Eigen::Index s = 1; s <= s_max; ++s) {
        const Vector& l = gains[s - 1];
        const RowVector c = p.sys.C.row(s - 1);
        const Matrix e = Matrix::Identity(n, n) + l * c;
        // T_{s-1} for j = s; j = 1 uses T_0 = X.
        terms[s] = e * levels[s - 1] * e.transpose();
        if (with_noise) terms[s] += p.sys.R(s - 1, s - 1) * l * l.transpose();
        const Vector w = eta_coeffs(p.lambdas, s);
        Matrix t = w(0) * base;
        for (Eigen::Index j = 1; j <= s; ++j) t += w(j) * terms[j];
        levels.push_back(symmetrized(t));
    }
    return levels;
}

inline void check_gains(std::span<const Vector> gains, const MareProblem& p, Eigen::Index s) {
    if (s < 0 || s > p.m()) throw std::invalid_argument("gain recursion: s outside [0, m]");
    if (static_cast<Eigen::Index>(gains.size()) < s) throw std::invalid_argument("gain recursion: need at least s gains");
    for (Eigen::Index j = 0; j < s; ++j)
        if (gains[j].size() != p.n()) throw std::invalid_argument("gain recursion: each gain must have length n");
}

}  // namespace detail

/// T_s(L_1, ..., L_s, X).
inline Matrix t_recursion(std::span<const Vector> gains, const Matrix& x, const MareProblem& p, Eigen::Index s) {
    detail::check_gains(gains, p, s);
    return detail::envelope_recursion(x, gains, p, s, true).back();
}

inline Matrix t_recursion(std::span<const Vector> gains, const Matrix& x, const MareProblem& p) {
    return t_recursion(gains, x, p, p.m());
}

/// phi_m(L_1, ..., L_m, X): the envelope started from h(X).
inline Matrix phi_m(std::span<const Vector> gains, const Matrix& x, const MareProblem& p) {
    detail::check_gains(gains, p, p.m());
    return detail::envelope_recursion(h_op(x, p.sys), gains, p, p.m(), true).back();
}

/// Linear-in-Y part of phi_m: the same recursion from A Y A' with every
/// L R L' and Q term removed.
inline Matrix linear_part(const Matrix& y, std::span<const Vector> gains, const MareProblem& p) {
    detail::check_gains(gains, p, p.m());
    const Matrix base = symmetrized(p.sys.A * y * p.sys.A.transpose());
    return detail::envelope_recursion(base, gains, p, p.m(), false).back();
}

/// Sequentially optimal gains for T_m at X: L_j = -T_{j-1} C_j'(C_j T_{j-1} C_j' + R_j)^{-1},
/// where T_{j-1} is itself evaluated through the weighted recursion with the
/// gains found so far. For phi_m pass h(X).
inline Gains optimal_gains(const Matrix& x, const MareProblem& p) {
    Gains gains;
    gains.reserve(p.m());
    Matrix t_prev = x;
    for (Eigen::Index j = 1; j <= p.m(); ++j) {
        gains.push_back(optimal_gain(t_prev, p.sys.C.row(j - 1), p.sys.R(j - 1, j - 1)));
        t_prev = detail::envelope_recursion(x, gains, p, j, true).back();
    }
    return gains;
}

// ---------------------------------------------------------------------------
// Fixed-point iteration and stability tests

enum class IterationStatus { converged, diverged, undetermined };

inline const char* to_string(IterationStatus s) {
    switch (s) {
        case IterationStatus::converged: return "converged";
        case IterationStatus::diverged: return "diverged";
        case IterationStatus::undetermined: return "undetermined";
    }
    return "unknown";
}

struct IterationOptions {
    double tol = 1e-9;
    long max_iter = 100000;
    double trace_ceiling = 1e12;
    int growth_window = 10;
};

struct FixedPointResult {
    IterationStatus status = IterationStatus::undetermined;
    Matrix P;  // last iterate (the fixed point when converged)
    long iterations = 0;
    std::vector<double> trace_history;  // trace of P_0, P_1, ...
    double last_increment = std::numeric_limits<double>::infinity();
};

inline FixedPointResult iterate_fixed_point(const MareProblem& p, const Matrix& x0, const IterationOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("iterate_fixed_point: tol must be positive");
    p.check();
    FixedPointResult res;
    Matrix cur = symmetrized(x0);
    res.trace_history.push_back(cur.trace());
    for (long it = 1; it <= opt.max_iter; ++it) {
        Matrix next = varphi(cur, p);
        res.last_increment = max_abs(next - cur);
        cur = std::move(next);
        res.iterations = it;
        const double tr = cur.trace();
        res.trace_history.push_back(tr);
        if (!std::isfinite(tr) || tr > opt.trace_ceiling) {
            res.status = IterationStatus::diverged;
            res.P = cur;
            return res;
        }
        if (res.last_increment <= opt.tol) {
            res.status = IterationStatus::converged;
            res.P = cur;
            return res;
        }
    }
    res.P = cur;
    // Budget exhausted: growth with non-shrinking increments over the trailing
    // window reads as divergence.
    const auto& th = res.trace_history;
    const auto w = static_cast<std::size_t>(std::max(1, opt.growth_window));
    bool growing = th.size() > w + 1;
    for (std::size_t i = th.size() - w; growing && i < th.size(); ++i)
        growing = th[i] > th[i - 1] && th[i] - th[i - 1] >= th[i - 1] - th[i - 2];
    res.status = growing ? IterationStatus::diverged : IterationStatus::undetermined;
    return res;
}

struct NecessaryCheck {
    bool ok = false;
    double lhs = 0.0;  // prod (1 - lambda_i)
    double rhs = 0.0;  // 1 / rho(A)^2
};

inline NecessaryCheck necessary_check(const MareProblem& p) {
    NecessaryCheck out;
    out.lhs = 1.0;
    for (Eigen::Index i = 0; i < p.lambdas.size(); ++i) out.lhs *= 1.0 - p.lambdas(i);
    const double rho = spectral_radius(p.sys.A);
    out.rhs = rho > 0.0 ? 1.0 / (rho * rho) : std::numeric_limits<double>::infinity();
    out.ok = out.lhs <= out.rhs;
    return out;
}

struct Certificate {
    Gains gains;
    Matrix p_tilde;
    double margin = 0.0;  // min eigenvalue of P~ - phi_m(L~, P~)
    double inflation = 0.0;
    std::string direction;  // "identity" or "fixed_point"
};

struct SufficientCheck {
    bool ok = false;
    std::optional<Certificate> certificate;
    std::vector<std::string> notes;
};

struct SufficientOptions {
    double margin_tol = 1e-12;
    IterationOptions iteration{};
};

/// Builds a candidate certificate from the converged fixed point P of varphi:
/// gains are the optimal gains at h(P), and P~ = P + c D for a geometric
/// ladder of c, first with D = (trace(P)/n) I, then D = P. A false result
/// means no certificate was found, not that none exists.
inline SufficientCheck sufficient_check(const MareProblem& p, const SufficientOptions& opt,
                                        const FixedPointResult* precomputed = nullptr) {
    p.check();
    SufficientCheck out;
    FixedPointResult local;
    if (!precomputed) {
        local = iterate_fixed_point(p, Matrix::Zero(p.n(), p.n()), opt.iteration);
        precomputed = &local;
    }
    if (precomputed->status != IterationStatus::converged) {
        out.notes.push_back(std::string("fixed-point iteration ") + to_string(precomputed->status) + "; no certificate");
        return out;
    }
    const Matrix& pbar = precomputed->P;
    const auto n = p.n();
    const Gains gains = optimal_gains(h_op(pbar, p.sys), p);
    const double scale = std::max(pbar.trace() / static_cast<double>(n), std::numeric_limits<double>::min());

    struct Direction {
        const char* name;
        Matrix d;
    };
    const Direction directions[] = {{"identity", scale * Matrix::Identity(n, n)}, {"fixed_point", pbar}};
    for (const auto& dir : directions) {
        for (double c : {1e-6, 1e-4, 1e-2, 1.0}) {
            const Matrix p_tilde = symmetrized(pbar + c * dir.d);
            if (!is_pd(p_tilde)) continue;
            const double margin = min_eigenvalue(p_tilde - phi_m(gains, p_tilde, p));
            if (margin > opt.margin_tol) {
                // A certificate dominates varphi as well; that makes P~ positive
                // definite by the Lyapunov argument, so check both.
                if (min_eigenvalue(p_tilde - varphi(p_tilde, p)) <= 0.0 || min_eigenvalue(p_tilde) <= 0.0) {
                    out.notes.push_back("certificate candidate failed the varphi-domination consistency check");
                    continue;
                }
                out.ok = true;
                out.certificate = Certificate{gains, p_tilde, margin, c, dir.name};
                return out;
            }
        }
    }
    out.notes.push_back("no certificate found on the inflation ladder");
    return out;
}

struct MareReport {
    FixedPointResult iteration;
    NecessaryCheck necessary;
    SufficientCheck sufficient;
    std::vector<std::string> notes;
};

struct AnalyzeOptions {
    bool iterate = true;
    bool necessary = true;
    bool sufficient = true;
    SufficientOptions sufficient_opts{};
};

inline MareReport analyze(const MareProblem& p, const AnalyzeOptions& opt = {}) {
    p.check();
    MareReport rep;
    const auto n = p.n();
    if (opt.iterate || opt.sufficient) {
        rep.iteration = iterate_fixed_point(p, Matrix::Zero(n, n), opt.sufficient_opts.iteration);
        if (rep.iteration.status == IterationStatus::converged && min_eigenvalue(rep.iteration.P) <= 0.0) {
            if (is_pd(p.sys.Q))
                throw std::logic_error("analyze: fixed point is not positive definite although Q is");
            rep.notes.push_back("fixed point is singular (Q is only semidefinite)");
        }
    }
    if (opt.necessary) rep.necessary = necessary_check(p);
    if (opt.sufficient) rep.sufficient = sufficient_check(p, opt.sufficient_opts, &rep.iteration);
    return rep;
}

}  // namespace pskf
