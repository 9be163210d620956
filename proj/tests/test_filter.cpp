#include "oracles.hpp"

#include <pskf/filter.hpp>

#include <gtest/gtest.h>

#include <random>

using pskf::ComponentStats;
using pskf::FilterState;
using pskf::LinearSystem;
using pskf::Matrix;
using pskf::SlotUpdateInput;
using pskf::Vector;

namespace {

ComponentStats with_nu(double nu) {
    ComponentStats s;
    s.nu = nu;
    return s;
}

SlotUpdateInput delivered(Eigen::Index i, double y, bool gamma = true) {
    SlotUpdateInput in;
    in.component = i;
    in.y = y;
    in.gamma = gamma;
    in.beta_bit = !gamma;
    return in;
}

SlotUpdateInput dropped(Eigen::Index i) {
    SlotUpdateInput in;
    in.component = i;
    return in;
}

}  // namespace

TEST(Predict, Examples) {
    auto s = oracle::scalar_two_sensor_system();
    FilterState st{Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 2.0), 0};
    const auto p = pskf::predict(st, s);
    EXPECT_NEAR(p.P(0, 0), 3.88, 1e-14);
    EXPECT_NEAR(p.x_hat(0), 2.4, 1e-14);
    EXPECT_EQ(p.k, 1);

    st.P.setZero();
    EXPECT_EQ(pskf::predict(st, s).P, s.Q);

    s.A.setIdentity();
    s.Q.setZero();
    const auto same = pskf::predict(st, s);
    EXPECT_EQ(same.x_hat, st.x_hat);
    EXPECT_EQ(same.P, st.P);
}

TEST(InnovationStats, Examples) {
    LinearSystem s;
    s.A = Matrix::Identity(2, 2);
    s.C = (Matrix(2, 2) << 1.0, 1.0, 0.0, 0.0).finished();
    s.Q = Matrix::Identity(2, 2);
    s.R = (Matrix(2, 2) << 0.1, 0.0, 0.0, 0.7).finished();
    s.x0_mean = Vector::Zero(2);
    s.P0 = Matrix::Identity(2, 2);
    FilterState st{Vector::Constant(2, 3.0), Matrix::Identity(2, 2), 0};
    EXPECT_NEAR(pskf::innovation_stats(st, s, 0).sigma, std::sqrt(2.1), 1e-15);
    EXPECT_NEAR(pskf::innovation_stats(st, s, 0).z_pred, 6.0, 1e-15);
    EXPECT_NEAR(pskf::innovation_stats(st, s, 1).z_pred, 0.0, 0.0);
    EXPECT_NEAR(pskf::innovation_stats(st, s, 1).sigma, std::sqrt(0.7), 1e-15);
    st.P.setZero();
    EXPECT_NEAR(pskf::innovation_stats(st, s, 0).sigma, std::sqrt(0.1), 1e-15);
}

TEST(UpdateComponent, DroppedSlotShrinksByDeficit) {
    LinearSystem s;
    s.A = s.C = s.Q = s.R = s.P0 = Matrix::Identity(1, 1);
    s.x0_mean = Vector::Zero(1);
    FilterState st{Vector::Constant(1, 0.3), Matrix::Identity(1, 1), 0};
    pskf::SlotTrace trace;
    const auto out = pskf::update_component(st, s, dropped(0), with_nu(0.5), &trace);
    EXPECT_NEAR(out.P(0, 0), 0.75, 1e-15);
    EXPECT_EQ(out.x_hat(0), 0.3);
    EXPECT_NEAR(trace.gain(0), 0.5, 1e-15);
    EXPECT_EQ(trace.weight, 0.5);
    EXPECT_FALSE(trace.epsilon.has_value());
}

TEST(UpdateComponent, DeliveredSlotIsTextbookScalarUpdate) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = oracle::random_system(gen, 3, 2);
        FilterState st{oracle::random_matrix(gen, 3, 1), oracle::random_psd(gen, 3) + 0.1 * Matrix::Identity(3, 3), 0};
        const double y = 0.7;
        for (bool gamma : {true, false}) {
            const auto out = pskf::update_component(st, s, delivered(1, y, gamma), with_nu(0.2));
            const oracle::KfState ref = oracle::batch_update({st.x_hat, st.P}, s.C.row(1), s.R.block(1, 1, 1, 1),
                                                             Vector::Constant(1, y));
            EXPECT_LT((out.x_hat - ref.x).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((out.P - ref.P).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(UpdateComponent, ContractViolations) {
    const auto s = oracle::scalar_two_sensor_system();
    const auto st = FilterState::initial(s);
    auto in = delivered(0, 1.0);
    in.y.reset();
    EXPECT_THROW(pskf::update_component(st, s, in, with_nu(0.5)), pskf::ContractError);
    auto drop = dropped(0);
    drop.y = 1.0;
    EXPECT_THROW(pskf::update_component(st, s, drop, with_nu(0.5)), pskf::ContractError);
    EXPECT_THROW(pskf::update_component(st, s, delivered(2, 1.0), with_nu(0.5)), pskf::ContractError);
}

TEST(CovarianceWeight, BoundedByDeficitAndOne) {
    for (double nu : {0.0, 0.3, 1.0})
        for (bool g : {false, true})
            for (bool b : {false, true}) {
                const double t = pskf::covariance_weight(g, b, nu);
                EXPECT_GE(t, nu);
                EXPECT_LE(t, 1.0);
                EXPECT_EQ(pskf::mean_weight(g, b), (g || b) ? 1.0 : 0.0);
            }
}

TEST(Step, AllDeliveredEqualsBatchVectorUpdate) {
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = oracle::random_system(gen, 3, 3, 1.1);
        FilterState st{oracle::random_matrix(gen, 3, 1), oracle::random_psd(gen, 3), 0};
        const Vector y = oracle::random_matrix(gen, 3, 1);
        std::vector<SlotUpdateInput> slots;
        for (Eigen::Index i = 0; i < 3; ++i) slots.push_back(delivered(i, y(i)));
        const std::vector<ComponentStats> stats(3, with_nu(0.3));
        const auto [out, traces] = pskf::step(st, s, slots, stats);
        const auto ref = oracle::batch_update(oracle::batch_predict({st.x_hat, st.P}, s.A, s.Q), s.C, s.R, y);
        EXPECT_LT((out.x_hat - ref.x).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((out.P - ref.P).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_EQ(traces.size(), 3u);
    }
}

TEST(Step, NoInformationLeavesPrediction) {
    const auto s = oracle::scalar_two_sensor_system();
    const auto st = FilterState::initial(s);
    const std::vector<SlotUpdateInput> slots{dropped(0), dropped(1)};
    const std::vector<ComponentStats> stats{pskf::component_stats(40.0, 0.5), pskf::component_stats(40.0, 0.5)};
    const auto [out, traces] = pskf::step(st, s, slots, stats);
    const auto pred = pskf::predict(st, s);
    EXPECT_NEAR(out.P(0, 0), pred.P(0, 0), 1e-12);
    EXPECT_EQ(out.x_hat, pred.x_hat);
}

TEST(Step, RejectsMisorderedSlots) {
    const auto s = oracle::scalar_two_sensor_system();
    const auto st = FilterState::initial(s);
    const std::vector<ComponentStats> stats(2, with_nu(0.5));
    const std::vector<SlotUpdateInput> swapped{dropped(1), dropped(0)};
    EXPECT_THROW(pskf::step(st, s, swapped, stats), pskf::ContractError);
    const std::vector<SlotUpdateInput> short_slots{dropped(0)};
    EXPECT_THROW(pskf::step(st, s, short_slots, stats), pskf::ContractError);
}

TEST(UpdateComponent, PerSlotMonotoneAndSymmetric) {
    std::mt19937_64 gen(4);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unu(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = oracle::random_system(gen, 4, 3, 1.2);
        FilterState st{Vector::Zero(4), oracle::random_psd(gen, 4, 2), 0};
        for (int k = 0; k < 10; ++k) {
            st = pskf::predict(st, s);
            for (Eigen::Index i = 0; i < 3; ++i) {
                const bool arrive = coin(gen);
                const auto next = pskf::update_component(st, s, arrive ? delivered(i, 0.1, coin(gen)) : dropped(i),
                                                         with_nu(unu(gen)));
                EXPECT_GE(oracle::min_eig(st.P - next.P), -1e-10);
                EXPECT_LE(pskf::asymmetry(next.P), 1e-12);
                EXPECT_GE(oracle::min_eig(next.P), -1e-10);
                st = next;
            }
        }
    }
}

TEST(Whiten, PreservesCovarianceSequence) {
    std::mt19937_64 gen(8);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = oracle::random_system(gen, 3, 2, 1.0);
        for (Eigen::Index i = 0; i < 2; ++i) s.R(i, i) *= 5.0;
        const auto w = pskf::whiten(s);
        const std::vector<ComponentStats> stats{pskf::component_stats(0.8, 0.3), pskf::component_stats(1.4, 0.3)};
        FilterState a = FilterState::initial(s), b = FilterState::initial(w);
        for (int k = 0; k < 100; ++k) {
            std::vector<SlotUpdateInput> sa, sb;
            for (Eigen::Index i = 0; i < 2; ++i) {
                const bool arrive = coin(gen);
                const double y = 0.3 * static_cast<double>(k % 7) - 1.0;
                sa.push_back(arrive ? delivered(i, y) : dropped(i));
                sb.push_back(arrive ? delivered(i, y / std::sqrt(s.R(i, i))) : dropped(i));
            }
            a = pskf::step(a, s, sa, stats).first;
            b = pskf::step(b, w, sb, stats).first;
            ASSERT_LT((a.P - b.P).cwiseAbs().maxCoeff(), 1e-9);
            ASSERT_LT((a.x_hat - b.x_hat).cwiseAbs().maxCoeff(), 1e-9);
        }
    }
}
