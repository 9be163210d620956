#include "oracles.hpp"

#include <pskf/model.hpp>

#include <gtest/gtest.h>

#include <random>

using pskf::LinearSystem;
using pskf::Matrix;
using pskf::Vector;

namespace {

LinearSystem one_state(double a, double c, double q, double r) {
    LinearSystem s;
    s.A = Matrix::Constant(1, 1, a);
    s.C = Matrix::Constant(1, 1, c);
    s.Q = Matrix::Constant(1, 1, q);
    s.R = Matrix::Constant(1, 1, r);
    s.x0_mean = Vector::Zero(1);
    s.P0 = Matrix::Identity(1, 1);
    return s;
}

}  // namespace

TEST(Validate, TwoSensorScalarPlantSatisfiesAssumptions) {
    const auto rep = pskf::validate(oracle::scalar_two_sensor_system());
    EXPECT_TRUE(rep.controllable);
    EXPECT_TRUE(rep.observable);
    EXPECT_TRUE(rep.r_diagonal);
    EXPECT_TRUE(rep.covariances_ok);
    EXPECT_TRUE(rep.all_ok());
}

TEST(Validate, ZeroDynamicsAndNoiseIsNotControllable) {
    const auto rep = pskf::validate(one_state(0.0, 1.0, 0.0, 1.0));
    EXPECT_FALSE(rep.controllable);
    EXPECT_FALSE(rep.messages.empty());
}

TEST(Validate, RepeatedDirectionIsNotObservable) {
    LinearSystem s;
    s.A = Matrix::Identity(2, 2);
    s.C = (Matrix(1, 2) << 1.0, 0.0).finished();
    s.Q = Matrix::Identity(2, 2);
    s.R = Matrix::Identity(1, 1);
    s.x0_mean = Vector::Zero(2);
    s.P0 = Matrix::Identity(2, 2);
    const auto rep = pskf::validate(s);
    EXPECT_TRUE(rep.controllable);
    EXPECT_FALSE(rep.observable);
    // Brute force: stacked [C; CA] has identical rows.
    const Matrix o = (Matrix(2, 2) << s.C, s.C * s.A).finished();
    EXPECT_EQ(Eigen::FullPivLU<Matrix>(o).rank(), 1);
}

TEST(Validate, NonDiagonalRIsFlaggedNotFatal) {
    auto s = oracle::scalar_two_sensor_system();
    s.R(0, 1) = s.R(1, 0) = 0.05;
    const auto rep = pskf::validate(s);
    EXPECT_FALSE(rep.r_diagonal);
    EXPECT_TRUE(rep.covariances_ok);
}

TEST(Validate, DimensionMismatchThrows) {
    auto s = oracle::scalar_two_sensor_system();
    s.C = Matrix::Ones(2, 2);
    EXPECT_THROW(pskf::validate(s), std::invalid_argument);
    s = oracle::scalar_two_sensor_system();
    s.R = Matrix::Identity(3, 3);
    EXPECT_THROW(pskf::validate(s), std::invalid_argument);
    s = oracle::scalar_two_sensor_system();
    s.x0_mean = Vector::Zero(2);
    EXPECT_THROW(pskf::validate(s), std::invalid_argument);
}

TEST(Validate, CovarianceViolationsAreReported) {
    auto s = one_state(1.0, 1.0, -1.0, 1.0);
    EXPECT_FALSE(pskf::validate(s).covariances_ok);
    EXPECT_THROW(pskf::require_well_formed(s), std::invalid_argument);
    s = one_state(1.0, 1.0, 1.0, 0.0);
    EXPECT_FALSE(pskf::validate(s).covariances_ok);
    EXPECT_THROW(pskf::require_well_formed(s), std::invalid_argument);
    EXPECT_NO_THROW(pskf::require_well_formed(oracle::scalar_two_sensor_system()));
}

TEST(Whiten, IdentityNoiseLeavesObservationUnchanged) {
    LinearSystem s = one_state(0.5, 3.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(pskf::whiten(s).C(0, 0), 3.0);
}

TEST(Whiten, ScalesByInverseRoot) {
    const auto w = pskf::whiten(one_state(0.5, 2.0, 1.0, 4.0));
    EXPECT_DOUBLE_EQ(w.C(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(w.R(0, 0), 1.0);
}

TEST(Whiten, DiagonalTwoSensorSystem) {
    const auto w = pskf::whiten(oracle::scalar_two_sensor_system());
    EXPECT_NEAR(w.C(0, 0), 1.0 / std::sqrt(0.1), 1e-15);
    EXPECT_NEAR(w.C(1, 0), 1.0, 1e-15);
    EXPECT_TRUE(w.R.isIdentity(0.0));
    EXPECT_EQ(w.A, oracle::scalar_two_sensor_system().A);
}

TEST(Whiten, FullNoiseMatchesSymmetricInverseRoot) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = oracle::random_system(gen, 3, 3);
        s.R = oracle::random_psd(gen, 3) + 0.2 * Matrix::Identity(3, 3);
        const auto w = pskf::whiten(s);
        // C~' C~ = C' R^{-1} C for any valid root.
        EXPECT_LT((w.C.transpose() * w.C - s.C.transpose() * s.R.inverse() * s.C).cwiseAbs().maxCoeff(), 1e-9);
        // The symmetric root: R^{1/2} C~ = C with a symmetric R^{1/2}.
        const Matrix root = pskf::sym_sqrt(s.R);
        EXPECT_LT((root * w.C - s.C).cwiseAbs().maxCoeff(), 1e-9);
        const auto ww = pskf::whiten(w);
        EXPECT_LT((ww.R - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((ww.C - w.C).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Whiten, IndefiniteNoiseNamesEigenvalue) {
    auto s = oracle::scalar_two_sensor_system();
    s.R << 1.0, 2.0, 2.0, 1.0;  // eigenvalues -1 and 3
    try {
        pskf::whiten(s);
        FAIL() << "expected whiten to throw";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("eigenvalue -1"), std::string::npos) << e.what();
    }
}

TEST(Linalg, PsdToleranceIsRelative) {
    Matrix m = Matrix::Identity(2, 2) * 1e6;
    m(1, 1) = -1e-5;  // -1e-5 >= -1e-10 * (1 + 1e6)
    EXPECT_TRUE(pskf::is_psd(m));
    m(1, 1) = -1e-3;
    EXPECT_FALSE(pskf::is_psd(m));
}

TEST(Linalg, NumericalRankUsesSingularValueThreshold) {
    Matrix m = Matrix::Identity(3, 3);
    m(2, 2) = 1e-20;
    EXPECT_EQ(pskf::numerical_rank(m).rank, 2);
    m(2, 2) = 1e-10;
    EXPECT_EQ(pskf::numerical_rank(m).rank, 3);
}

TEST(Linalg, PsdFloorClipsOnlyRoundoff) {
    Matrix m(2, 2);
    m << 1.0, 0.0, 0.0, -1e-12;
    pskf::psd_floor(m);
    EXPECT_GE(pskf::min_eigenvalue(m), 0.0);
    m << 1.0, 0.0, 0.0, -1e-6;
    pskf::psd_floor(m);
    EXPECT_DOUBLE_EQ(m(1, 1), -1e-6);
}
