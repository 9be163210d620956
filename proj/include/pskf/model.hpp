// Linear Gaussian plant description, structural checks, and measurement
// whitening.
//
//   x_{k+1} = A x_k + w_k,   w_k ~ N(0, Q)
//   y_k     = C x_k + v_k,   v_k ~ N(0, R)
//   x_0     ~ N(x0_mean, P0)
#pragma once

#include "linalg.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace pskf {

struct LinearSystem {
    Matrix A;
    Matrix C;
    Matrix Q;
    Matrix R;
    Vector x0_mean;
    Matrix P0;

    Eigen::Index state_dim() const { return A.rows(); }
    Eigen::Index meas_dim() const { return C.rows(); }
};

struct ValidationReport {
    bool controllable = false;  // (A, Q^{1/2})
    bool observable = false;    // (C, A)
    bool r_diagonal = false;
    bool covariances_ok = false;
    std::vector<std::string> messages;

    bool all_ok() const { return controllable && observable && r_diagonal && covariances_ok; }
};

/// Throws std::invalid_argument when the matrix shapes do not fit together.
inline void check_dimensions(const LinearSystem& sys) {
    const auto n = sys.A.rows();
    const auto m = sys.C.rows();
    std::ostringstream err;
    if (n == 0 || sys.A.cols() != n) err << "A must be square and non-empty (got " << sys.A.rows() << "x" << sys.A.cols() << "); ";
    if (m == 0 || sys.C.cols() != n) err << "C must be m x " << n << " with m >= 1 (got " << sys.C.rows() << "x" << sys.C.cols() << "); ";
    if (sys.Q.rows() != n || sys.Q.cols() != n) err << "Q must be " << n << "x" << n << "; ";
    if (sys.R.rows() != m || sys.R.cols() != m) err << "R must be " << m << "x" << m << "; ";
    if (sys.x0_mean.size() != n) err << "x0_mean must have length " << n << "; ";
    if (sys.P0.rows() != n || sys.P0.cols() != n) err << "P0 must be " << n << "x" << n << "; ";
    const std::string msg = err.str();
    if (!msg.empty()) throw std::invalid_argument("dimension mismatch: " + msg);
}

namespace detail {

inline void check_covariances(const LinearSystem& sys, std::vector<std::string>& out) {
    constexpr double sym_tol = 1e-10;
    auto sym_ok = [&](const Matrix& m, const char* name) {
        if (asymmetry(m) > sym_tol * (1.0 + max_abs(m))) {
            out.push_back(std::string(name) + " is not symmetric");
            return false;
        }
        return true;
    };
    if (sym_ok(sys.Q, "Q") && !is_psd(sys.Q))
        out.push_back("Q is not positive semidefinite (min eigenvalue " + std::to_string(min_eigenvalue(sys.Q)) + ")");
    if (sym_ok(sys.R, "R") && !is_pd(sys.R))
        out.push_back("R is not positive definite (min eigenvalue " + std::to_string(min_eigenvalue(sys.R)) + ")");
    if (sym_ok(sys.P0, "P0") && !is_pd(sys.P0))
        out.push_back("P0 is not positive definite (min eigenvalue " + std::to_string(min_eigenvalue(sys.P0)) + ")");
}

inline Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
    const auto n = a.rows();
    Matrix out(n, n * b.cols());
    Matrix block = b;
    for (Eigen::Index i = 0; i < n; ++i) {
        out.middleCols(i * b.cols(), b.cols()) = block;
        block = a * block;
    }
    return out;
}

inline Matrix observability_matrix(const Matrix& c, const Matrix& a) {
    const auto n = a.rows();
    Matrix out(n * c.rows(), n);
    Matrix block = c;
    for (Eigen::Index i = 0; i < n; ++i) {
        out.middleRows(i * c.rows(), c.rows()) = block;
        block = block * a;
    }
    return out;
}

}  // namespace detail

/// Dimension check plus covariance invariants; throws on any failure. Use this
/// at ingestion boundaries where a malformed plant must not proceed.
inline void require_well_formed(const LinearSystem& sys) {
    check_dimensions(sys);
    std::vector<std::string> problems;
    detail::check_covariances(sys, problems);
    if (!problems.empty()) {
        std::string msg = "invalid system:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw std::invalid_argument(msg);
    }
}

/// Advisory structural report. Only a dimension mismatch is fatal; everything
/// else is flagged so the caller can decide whether the stability theory
/// applies.
inline ValidationReport validate(const LinearSystem& sys) {
    check_dimensions(sys);
    ValidationReport rep;
    const auto n = sys.state_dim();

    std::vector<std::string> cov_problems;
    detail::check_covariances(sys, cov_problems);
    rep.covariances_ok = cov_problems.empty();
    for (auto& p : cov_problems) rep.messages.push_back(std::move(p));

    auto note_fragile = [&](const RankResult& r, const char* what) {
        if (r.threshold > 0.0 && r.decision_margin < 1e3)
            rep.messages.push_back(std::string(what) + " rank test is numerically fragile (singular value within 1e3x of threshold)");
    };

    const RankResult ctrb = numerical_rank(detail::controllability_matrix(sys.A, sym_sqrt(sys.Q)));
    rep.controllable = ctrb.rank == n;
    if (!rep.controllable)
        rep.messages.push_back("(A, Q^1/2) is not controllable: rank " + std::to_string(ctrb.rank) + " < " + std::to_string(n));
    note_fragile(ctrb, "controllability");

    const RankResult obsv = numerical_rank(detail::observability_matrix(sys.C, sys.A));
    rep.observable = obsv.rank == n;
    if (!rep.observable)
        rep.messages.push_back("(C, A) is not observable: rank " + std::to_string(obsv.rank) + " < " + std::to_string(n));
    note_fragile(obsv, "observability");

    rep.r_diagonal = is_diagonal(sys.R);
    if (!rep.r_diagonal) rep.messages.push_back("R is not diagonal; whiten() the system before filtering");
    return rep;
}

/// Returns the system with C~ = R^{-1/2} C and R~ = I. The state equation is
/// untouched. Diagonal R is handled by per-row scaling.
inline LinearSystem whiten(const LinearSystem& sys) {
    check_dimensions(sys);
    if (asymmetry(sys.R) > 1e-10 * (1.0 + max_abs(sys.R)))
        throw std::invalid_argument("whiten: R is not symmetric");

    LinearSystem out = sys;
    const auto m = sys.meas_dim();
    if (is_diagonal(sys.R)) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const double r = sys.R(i, i);
            if (!(r > 0.0))
                throw std::invalid_argument("whiten: R is not positive definite (eigenvalue " + std::to_string(r) +
                                            " at index " + std::to_string(i) + ")");
            out.C.row(i) = sys.C.row(i) / std::sqrt(r);
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(sys.R));
        const Vector& ev = es.eigenvalues();
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            if (!(ev(i) > 0.0))
                throw std::invalid_argument("whiten: R is not positive definite (eigenvalue " + std::to_string(ev(i)) +
                                            " at index " + std::to_string(i) + ")");
        const Matrix inv_root =
            symmetrized(es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose());
        out.C = inv_root * sys.C;
    }
    out.R = Matrix::Identity(m, m);
    return out;
}

/// Whitens only when R is not already diagonal.
inline LinearSystem ensure_diagonal_r(const LinearSystem& sys) {
    return is_diagonal(sys.R) ? sys : whiten(sys);
}

}  // namespace pskf
