#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "racedyn/datasets.hpp"
#include "racedyn/dynamics.hpp"
#include "racedyn/network.hpp"

namespace racedyn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::size_t batch_size = 0;   // 0 or >= N means full batch
    std::size_t steps = 1000;
    double init_std = 1e-3;
    std::size_t width = 100;
    std::vector<std::size_t> snapshot_steps;   // sorted, within [0, steps]; step 0 is always recorded
    std::uint64_t seed = 0;

    /// Throws Error naming the first invalid field.
    void validate() const;

    /// 0, every, 2*every, ..., and `steps` itself.
    static std::vector<std::size_t> every(std::size_t every, std::size_t steps);
};

/// State of the network after `step` parameter updates.
struct Snapshot {
    std::size_t step = 0;
    double loss = 0.0;   // mean cross-entropy over the whole training set
    NetworkParams params;
    std::vector<NeuronDiagnostics> neurons;
    double max_delta_y_angle_error = 0.0;
};

struct TrainingTrace {
    TrainConfig config;
    std::vector<Snapshot> snapshots;   // ordered by step, first at step 0

    const Snapshot& at_step(std::size_t step) const;   // throws Error if absent
    const Snapshot& final() const { return snapshots.back(); }
    std::vector<std::size_t> steps() const;
};

using SnapshotHook = std::function<void(const Snapshot&)>;

/// Minibatch SGD with momentum from a fresh init_params(width, d_input,
/// init_std, Rng(seed)) or from `initial` when given. Minibatches are drawn
/// from a per-epoch shuffle using the same seeded stream after
/// initialisation; full-batch runs never shuffle.
TrainingTrace train(const TrainConfig& config, const BinaryDataset& dataset,
                    const std::optional<NetworkParams>& initial = std::nullopt, const SnapshotHook& hook = {});

/// Snapshot of `params` evaluated on `dataset` (loss, diagnostics, dy check).
Snapshot make_snapshot(std::size_t step, const NetworkParams& params, const BinaryDataset& dataset);

}  // namespace racedyn
