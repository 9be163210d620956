// Small dense linear-algebra helpers shared by the estimator and the
// Riccati-operator code. Everything here works on symmetric matrices.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pskf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Raised when a caller violates a documented precondition of an operation
/// (as opposed to bad user data, which raises std::invalid_argument).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline constexpr double kPsdRelTol = 1e-10;

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline void symmetrize(Matrix& m) { m = symmetrized(m); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double asymmetry(const Matrix& m) { return max_abs(m - m.transpose()); }

inline bool is_square(const Matrix& m) { return m.rows() == m.cols(); }

inline bool is_diagonal(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (i != j && m(i, j) != 0.0) return false;
    return true;
}

/// Eigenvalues of the symmetric part, ascending.
inline Vector sym_eigenvalues(const Matrix& m) {
    if (m.size() == 0) return Vector{};
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& m) {
    Vector ev = sym_eigenvalues(m);
    return ev.size() == 0 ? 0.0 : ev(0);
}

inline double max_eigenvalue(const Matrix& m) {
    Vector ev = sym_eigenvalues(m);
    return ev.size() == 0 ? 0.0 : ev(ev.size() - 1);
}

/// PSD acceptance rule: min eigenvalue >= -1e-10 * (1 + max eigenvalue).
inline bool is_psd(const Matrix& m, double rel_tol = kPsdRelTol) {
    if (!is_square(m)) return false;
    if (m.size() == 0) return true;
    Vector ev = sym_eigenvalues(m);
    return ev(0) >= -rel_tol * (1.0 + std::max(0.0, ev(ev.size() - 1)));
}

inline bool is_pd(const Matrix& m) {
    if (!is_square(m) || m.size() == 0) return false;
    return min_eigenvalue(m) > 0.0;
}

/// Loewner order test: lhs <= rhs up to `slack` on the minimum eigenvalue.
inline bool psd_leq(const Matrix& lhs, const Matrix& rhs, double slack) {
    return min_eigenvalue(rhs - lhs) >= -slack;
}

/// Clips eigenvalues in (-floor_tol, 0) to zero. Larger negative eigenvalues
/// are left alone so that genuine indefiniteness stays visible.
inline void psd_floor(Matrix& m, double floor_tol = 1e-10) {
    if (m.size() == 0) return;
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() == Eigen::Success) return;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    Vector ev = es.eigenvalues();
    if (ev(0) >= 0.0) return;
    bool changed = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < 0.0 && ev(i) > -floor_tol) {
            ev(i) = 0.0;
            changed = true;
        }
    }
    if (changed) m = symmetrized(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

/// Unique symmetric square root of a PSD matrix; small negative eigenvalues
/// from round-off are clipped to zero.
inline Matrix sym_sqrt(const Matrix& m) {
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return symmetrized(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
}

/// Factor F with F F' = m, for sampling. Cholesky when m is positive definite,
/// otherwise the clipped symmetric root.
inline Matrix sampling_factor(const Matrix& m) {
    if (m.size() == 0) return m;
    Eigen::LLT<Matrix> llt(symmetrized(m));
    if (llt.info() == Eigen::Success) return llt.matrixL();
    return sym_sqrt(m);
}

inline double spectral_radius(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Numerical rank with threshold max(rows, cols) * eps * sigma_max.
struct RankResult {
    Eigen::Index rank = 0;
    double threshold = 0.0;
    /// Smallest ratio sigma / threshold among singular values on either side
    /// of the cut; values near 1 mean the decision is fragile.
    double decision_margin = std::numeric_limits<double>::infinity();
};

inline RankResult numerical_rank(const Matrix& m) {
    RankResult out;
    if (m.size() == 0) return out;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    out.threshold = static_cast<double>(std::max(m.rows(), m.cols())) *
                    std::numeric_limits<double>::epsilon() * smax;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > out.threshold) ++out.rank;
        if (out.threshold > 0.0) {
            const double ratio = s(i) > out.threshold ? s(i) / out.threshold : out.threshold / std::max(s(i), 1e-300);
            out.decision_margin = std::min(out.decision_margin, ratio);
        }
    }
    return out;
}

}  // namespace pskf
