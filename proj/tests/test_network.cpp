#include <gtest/gtest.h>

#include <cmath>

#include "racedyn/network.hpp"
#include "support.hpp"

using namespace racedyn;
using racedyn::testing::central_difference;
using racedyn::testing::loss_of;
using racedyn::testing::random_instance;
using racedyn::testing::relative_error;

namespace {

/// Finite-difference gradient of every parameter block.
Gradients numeric_gradients(const NetworkParams& p, const BinaryDataset& data) {
    Gradients g = Gradients::zeros_like(p);
    NetworkParams base = p;
    auto fill = [&](auto&& block, auto&& out) {
        for (Eigen::Index i = 0; i < block(base).size(); ++i) {
            out.data()[i] = central_difference([&](double h) {
                NetworkParams q = p;
                block(q).data()[i] += h;
                return loss_of(q, data);
            });
        }
    };
    fill([](NetworkParams& q) -> Matrix& { return q.w1; }, g.w1);
    fill([](NetworkParams& q) -> Vector& { return q.b1; }, g.b1);
    fill([](NetworkParams& q) -> Matrix& { return q.w2; }, g.w2);
    fill([](NetworkParams& q) -> Vector& { return q.b2; }, g.b2);
    return g;
}

template <typename A, typename B>
double max_relative_error(const A& a, const B& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        worst = std::max(worst, relative_error(a.data()[i], b.data()[i]));
    }
    return worst;
}

}  // namespace

TEST(Forward, ZeroParamsGiveUniformPrediction) {
    Rng rng(1);
    auto inst = random_instance(3, 4, 6, rng);
    const NetworkParams p = NetworkParams::zeros(4, 3);
    const ForwardCache c = forward(p, inst.data);
    EXPECT_TRUE((c.logits.array() == 0.0).all());
    EXPECT_TRUE((c.probabilities.array() == 0.5).all());
    for (Eigen::Index s = 0; s < c.delta_y.rows(); ++s) {
        EXPECT_NEAR(c.delta_y.row(s).norm(), std::sqrt(2.0) / 2.0, 1e-15);
    }
    EXPECT_NEAR(cross_entropy_loss(c), std::log(2.0), 1e-15);
}

TEST(Forward, ReluBlocksNegativeInput) {
    NetworkParams p = NetworkParams::zeros(1, 1);
    p.w1(0, 0) = 1.0;
    Matrix x(1, 1);
    x << -3.0;
    Matrix y(1, 2);
    y << 1.0, 0.0;
    const ForwardCache c = forward(p, x, y);
    EXPECT_FALSE(c.gating(0, 0));
    EXPECT_EQ(c.hidden(0, 0), 0.0);
}

TEST(Forward, CacheInvariantsAndLossOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = random_instance(5, 7, 9, rng, 0.0);
        const ForwardCache c = forward(inst.params, inst.data);
        double oracle = 0.0;
        for (Eigen::Index s = 0; s < c.probabilities.rows(); ++s) {
            EXPECT_NEAR(c.probabilities.row(s).sum(), 1.0, 1e-12);
            EXPECT_GT(c.probabilities.row(s).minCoeff(), 0.0);
            EXPECT_LT(c.probabilities.row(s).maxCoeff(), 1.0);
            for (Eigen::Index a = 0; a < c.preactivations.cols(); ++a) {
                EXPECT_EQ(c.gating(s, a), c.preactivations(s, a) > 0.0);
                if (!c.gating(s, a)) {
                    EXPECT_EQ(c.hidden(s, a), 0.0);
                }
            }
            EXPECT_NEAR((c.delta_y.row(s) - (c.labels.row(s) - c.probabilities.row(s))).norm(), 0.0, 1e-15);
            const Eigen::RowVectorXd z = c.logits.row(s);
            const double lse = std::log(std::exp(z[0]) + std::exp(z[1]));
            oracle -= (c.labels(s, 0) * (z[0] - lse) + c.labels(s, 1) * (z[1] - lse));
        }
        EXPECT_NEAR(cross_entropy_loss(c), oracle / static_cast<double>(c.probabilities.rows()), 1e-12);
    }
}

TEST(Forward, HugeLogitsStayFinite) {
    NetworkParams p = NetworkParams::zeros(1, 1);
    p.w1(0, 0) = 1.0;
    p.w2(0, 0) = 1e4;
    p.w2(1, 0) = -1e4;
    Matrix x(1, 1);
    x << 1.0;
    Matrix y(1, 2);
    y << 0.0, 1.0;
    const ForwardCache c = forward(p, x, y);
    EXPECT_TRUE(c.log_probabilities.allFinite());
    EXPECT_NEAR(cross_entropy_loss(c), 2e4, 1e-6);
}

TEST(Forward, DimensionMismatchThrows) {
    const NetworkParams p = NetworkParams::zeros(2, 3);
    EXPECT_THROW(forward(p, Matrix::Zero(4, 2), Matrix::Zero(4, 2)), DimensionMismatch);
    EXPECT_THROW(forward(p, Matrix::Zero(4, 3), Matrix::Zero(3, 2)), DimensionMismatch);
}

TEST(Backward, MatchesFiniteDifferences) {
    Rng rng(3);
    auto inst = random_instance(2, 3, 4, rng);
    const ForwardCache c = forward(inst.params, inst.data);
    const Gradients g = backward(inst.params, c, inst.data.inputs);
    const Gradients fd = numeric_gradients(inst.params, inst.data);
    EXPECT_LT(max_relative_error(g.w1, fd.w1), 1e-5);
    EXPECT_LT(max_relative_error(g.b1, fd.b1), 1e-5);
    EXPECT_LT(max_relative_error(g.w2, fd.w2), 1e-5);
    EXPECT_LT(max_relative_error(g.b2, fd.b2), 1e-5);
}

TEST(Backward, TwentyRandomInstances) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t din = trial % 2 == 0 ? 2 : 8;
        const std::size_t d = trial % 4 < 2 ? 3 : 16;
        const std::size_t n = trial % 3 == 0 ? 4 : 32;
        auto inst = random_instance(din, d, n, rng);
        const Gradients g = backward(inst.params, forward(inst.params, inst.data), inst.data.inputs);
        const Gradients fd = numeric_gradients(inst.params, inst.data);
        EXPECT_LT(max_relative_error(g.w1, fd.w1), 1e-5) << "trial " << trial;
        EXPECT_LT(max_relative_error(g.w2, fd.w2), 1e-5) << "trial " << trial;
        EXPECT_LT(max_relative_error(g.b1, fd.b1), 1e-5) << "trial " << trial;
        EXPECT_LT(max_relative_error(g.b2, fd.b2), 1e-5) << "trial " << trial;
    }
}

TEST(Backward, DeadNeuronHasZeroGradient) {
    Rng rng(5);
    auto inst = random_instance(3, 4, 10, rng);
    inst.params.w1.row(2).setZero();
    inst.params.b1[2] = -1.0;
    const Gradients g = backward(inst.params, forward(inst.params, inst.data), inst.data.inputs);
    EXPECT_TRUE((g.w1.row(2).array() == 0.0).all());
    EXPECT_EQ(g.b1[2], 0.0);
    EXPECT_TRUE((g.w2.col(2).array() == 0.0).all());
}

TEST(Backward, LogitGradientIsMinusMeanDeltaY) {
    Rng rng(6);
    auto inst = random_instance(3, 4, 10, rng);
    const ForwardCache c = forward(inst.params, inst.data);
    const Gradients g = backward(inst.params, c, inst.data.inputs);
    const Vector expect = -c.delta_y.colwise().mean().transpose();
    EXPECT_NEAR((g.b2 - expect).norm(), 0.0, 1e-15);
}

TEST(Backward, StaleCacheThrows) {
    Rng rng(7);
    auto inst = random_instance(3, 4, 10, rng);
    const ForwardCache c = forward(inst.params, inst.data);
    const Matrix fewer = inst.data.inputs.topRows(5);
    EXPECT_THROW(backward(inst.params, c, fewer), DimensionMismatch);
}

TEST(SgdMomentum, ClosedForms) {
    Rng rng(8);
    auto inst = random_instance(2, 3, 4, rng);
    const Gradients g = backward(inst.params, forward(inst.params, inst.data), inst.data.inputs);

    NetworkParams p = inst.params;
    Gradients v = Gradients::zeros_like(p);
    sgd_momentum_step(p, g, v, 0.1, 0.0);
    EXPECT_NEAR((p.w1 - (inst.params.w1 - 0.1 * g.w1)).norm(), 0.0, 1e-15);

    NetworkParams q = inst.params;
    Gradients zero = Gradients::zeros_like(q);
    Gradients v0 = Gradients::zeros_like(q);
    sgd_momentum_step(q, zero, v0, 0.1, 0.9);
    EXPECT_TRUE(q.w1 == inst.params.w1);

    NetworkParams r = inst.params;
    Gradients vr = Gradients::zeros_like(r);
    sgd_momentum_step(r, g, vr, 0.01, 0.9);
    sgd_momentum_step(r, g, vr, 0.01, 0.9);
    EXPECT_NEAR((r.w2 - (inst.params.w2 - 0.01 * 2.9 * g.w2)).norm(), 0.0, 1e-14);
    EXPECT_NEAR((r.b2 - (inst.params.b2 - 0.01 * 2.9 * g.b2)).norm(), 0.0, 1e-14);
}

TEST(InitParams, BiasesZeroAndW1DrawnFirst) {
    Rng a(9);
    const NetworkParams p = init_params(5, 3, 0.1, a);
    EXPECT_TRUE((p.b1.array() == 0.0).all());
    EXPECT_TRUE((p.b2.array() == 0.0).all());
    Rng b(9);
    const Matrix w1 = gaussian_matrix(5, 3, 0.1, b);
    const Matrix w2 = gaussian_matrix(2, 5, 0.1, b);
    EXPECT_TRUE(p.w1 == w1);
    EXPECT_TRUE(p.w2 == w2);
}
