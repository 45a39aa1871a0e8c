#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <string>

#include "racedyn/training.hpp"

using namespace racedyn;

namespace {

BinaryDataset xor_data(std::uint64_t seed, std::size_t per_cluster = 50) {
    Rng rng(seed);
    return generate_cluster_dataset(xor_like_clusters(per_cluster), rng);
}

bool same_bits(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(TrainConfig, ValidationNamesField) {
    TrainConfig c;
    c.learning_rate = -1.0;
    try {
        c.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
    c = TrainConfig{};
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), Error);
    c = TrainConfig{};
    c.snapshot_steps = {5, 3};
    EXPECT_THROW(c.validate(), Error);
    c.snapshot_steps = {3, 5000};
    EXPECT_THROW(c.validate(), Error);
}

TEST(TrainConfig, EverySchedule) {
    EXPECT_EQ(TrainConfig::every(3, 7), (std::vector<std::size_t>{0, 3, 6, 7}));
    EXPECT_EQ(TrainConfig::every(5, 10), (std::vector<std::size_t>{0, 5, 10}));
}

TEST(Train, ZeroStepsGivesInitialSnapshotOnly) {
    TrainConfig c;
    c.steps = 0;
    c.width = 5;
    const TrainingTrace t = train(c, xor_data(1, 5));
    ASSERT_EQ(t.snapshots.size(), 1u);
    EXPECT_EQ(t.snapshots[0].step, 0u);
    EXPECT_TRUE((t.snapshots[0].params.b1.array() == 0.0).all());
}

TEST(Train, DeterministicBitwise) {
    TrainConfig c;
    c.steps = 200;
    c.width = 8;
    c.batch_size = 16;
    c.init_std = 0.1;
    c.learning_rate = 0.05;
    c.snapshot_steps = TrainConfig::every(50, 200);
    c.seed = 77;
    const BinaryDataset d = xor_data(2, 20);
    const TrainingTrace a = train(c, d);
    const TrainingTrace b = train(c, d);
    ASSERT_EQ(a.snapshots.size(), b.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
        EXPECT_EQ(a.snapshots[i].step, b.snapshots[i].step);
        EXPECT_EQ(a.snapshots[i].loss, b.snapshots[i].loss);
        EXPECT_TRUE(same_bits(a.snapshots[i].params.w1, b.snapshots[i].params.w1));
        EXPECT_TRUE(same_bits(a.snapshots[i].params.w2, b.snapshots[i].params.w2));
    }
    c.seed = 78;
    const TrainingTrace other = train(c, d);
    EXPECT_FALSE(same_bits(other.final().params.w1, a.final().params.w1));
}

TEST(Train, SnapshotsOrderedAndHookCalled) {
    TrainConfig c;
    c.steps = 30;
    c.width = 4;
    c.snapshot_steps = {0, 0, 10, 30};
    std::vector<std::size_t> seen;
    const TrainingTrace t = train(c, xor_data(3, 10), std::nullopt, [&](const Snapshot& s) { seen.push_back(s.step); });
    EXPECT_EQ(t.steps(), (std::vector<std::size_t>{0, 10, 30}));
    EXPECT_EQ(seen, t.steps());
    EXPECT_EQ(t.at_step(10).step, 10u);
    EXPECT_THROW(t.at_step(11), Error);
}

TEST(Train, InitialParamsDimensionChecked) {
    TrainConfig c;
    c.steps = 1;
    EXPECT_THROW(train(c, xor_data(4, 5), NetworkParams::zeros(3, 5)), DimensionMismatch);
}

TEST(Train, GradientFlowLossNeverJumps) {
    TrainConfig c;
    c.steps = 3000;
    c.width = 20;
    c.init_std = 0.1;
    c.learning_rate = 1e-4;
    c.momentum = 0.0;
    c.snapshot_steps = TrainConfig::every(1, 3000);
    const TrainingTrace t = train(c, xor_data(5));
    for (std::size_t i = 1; i < t.snapshots.size(); ++i) {
        ASSERT_LE(t.snapshots[i].loss - t.snapshots[i - 1].loss, 1e-3) << "step " << t.snapshots[i].step;
    }
}

TEST(Train, DeltaYStaysQuantised) {
    TrainConfig c;
    c.steps = 2000;
    c.width = 20;
    c.init_std = 0.5;
    c.learning_rate = 0.05;
    c.snapshot_steps = TrainConfig::every(100, 2000);
    const TrainingTrace t = train(c, xor_data(6));
    for (const auto& s : t.snapshots) {
        EXPECT_LT(s.max_delta_y_angle_error, 1e-9);
    }
    EXPECT_LT(t.final().loss, 0.1);
}

TEST(Train, XorLikeSmallInitConverges) {
    TrainConfig c;
    c.width = 100;
    c.init_std = 1e-3;
    c.learning_rate = 1e-3;
    c.momentum = 0.9;
    c.steps = 20000;
    c.snapshot_steps = TrainConfig::every(50, c.steps);
    c.seed = 1;
    const TrainingTrace t = train(c, xor_data(1));
    EXPECT_LT(t.final().loss, 0.05);

    // 50-step smoothing: the snapshot grid is already 50 steps apart, so
    // average consecutive snapshot pairs and require no increase.
    std::vector<double> smooth;
    for (std::size_t i = 1; i < t.snapshots.size(); ++i) {
        smooth.push_back(0.5 * (t.snapshots[i - 1].loss + t.snapshots[i].loss));
    }
    for (std::size_t i = 1; i < smooth.size(); ++i) {
        EXPECT_LE(smooth[i], smooth[i - 1] + 1e-9) << "around step " << t.snapshots[i].step;
    }
}
