#include "racedyn/training.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace racedyn {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw Error("train.learning_rate must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw Error("train.momentum must be in [0, 1)");
    }
    if (!(init_std >= 0.0)) {
        throw Error("train.init_std must be >= 0");
    }
    if (width == 0) {
        throw Error("train.width must be >= 1");
    }
    if (!std::is_sorted(snapshot_steps.begin(), snapshot_steps.end())) {
        throw Error("train.snapshot_steps must be sorted");
    }
    if (!snapshot_steps.empty() && snapshot_steps.back() > steps) {
        throw Error("train.snapshot_steps: step " + std::to_string(snapshot_steps.back()) + " exceeds steps (" +
                    std::to_string(steps) + ")");
    }
}

std::vector<std::size_t> TrainConfig::every(std::size_t every, std::size_t steps) {
    if (every == 0) {
        throw Error("snapshot interval must be positive");
    }
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s <= steps; s += every) {
        out.push_back(s);
    }
    if (out.back() != steps) {
        out.push_back(steps);
    }
    return out;
}

const Snapshot& TrainingTrace::at_step(std::size_t step) const {
    const auto it = std::lower_bound(snapshots.begin(), snapshots.end(), step,
                                     [](const Snapshot& s, std::size_t v) { return s.step < v; });
    if (it == snapshots.end() || it->step != step) {
        throw Error("trace has no snapshot at step " + std::to_string(step));
    }
    return *it;
}

std::vector<std::size_t> TrainingTrace::steps() const {
    std::vector<std::size_t> out;
    out.reserve(snapshots.size());
    for (const auto& s : snapshots) {
        out.push_back(s.step);
    }
    return out;
}

Snapshot make_snapshot(std::size_t step, const NetworkParams& params, const BinaryDataset& dataset) {
    const ForwardCache cache = forward(params, dataset);
    Snapshot snap;
    snap.step = step;
    snap.loss = cross_entropy_loss(cache);
    snap.params = params;
    snap.neurons = all_diagnostics(params, dataset, cache);
    snap.max_delta_y_angle_error = max_delta_y_angle_error(cache);
    return snap;
}

TrainingTrace train(const TrainConfig& config, const BinaryDataset& dataset, const std::optional<NetworkParams>& initial,
                    const SnapshotHook& hook) {
    config.validate();
    dataset.validate();

    Rng rng(config.seed);
    NetworkParams params = initial ? *initial : init_params(config.width, dataset.input_dim(), config.init_std, rng);
    params.validate();
    if (params.input_dim() != dataset.input_dim()) {
        throw DimensionMismatch("train: initial parameters expect " + std::to_string(params.input_dim()) +
                                " inputs, dataset has " + std::to_string(dataset.input_dim()));
    }

    std::vector<std::size_t> schedule = config.snapshot_steps;
    if (schedule.empty() || schedule.front() != 0) {
        schedule.insert(schedule.begin(), 0);
    }
    schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());

    TrainingTrace trace;
    trace.config = config;
    auto record = [&](std::size_t step) {
        trace.snapshots.push_back(make_snapshot(step, params, dataset));
        if (hook) {
            hook(trace.snapshots.back());
        }
    };

    const std::size_t n = dataset.size();
    const bool full_batch = config.batch_size == 0 || config.batch_size >= n;
    const std::size_t batch = full_batch ? n : config.batch_size;
    const Matrix all_labels = dataset.label_matrix();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = n;   // forces a shuffle before the first minibatch

    Gradients velocity = Gradients::zeros_like(params);
    Matrix batch_inputs(static_cast<Eigen::Index>(batch), dataset.inputs.cols());
    Matrix batch_labels(static_cast<Eigen::Index>(batch), 2);

    std::size_t next = 0;
    for (std::size_t step = 0;; ++step) {
        if (next < schedule.size() && schedule[next] == step) {
            record(step);
            ++next;
        }
        if (step == config.steps) {
            break;
        }
        Gradients grads;
        if (full_batch) {
            const ForwardCache cache = forward(params, dataset.inputs, all_labels);
            grads = backward(params, cache, dataset.inputs);
        } else {
            for (std::size_t i = 0; i < batch; ++i) {
                if (cursor == n) {
                    shuffle(order, rng);
                    cursor = 0;
                }
                const auto src = static_cast<Eigen::Index>(order[cursor++]);
                batch_inputs.row(static_cast<Eigen::Index>(i)) = dataset.inputs.row(src);
                batch_labels.row(static_cast<Eigen::Index>(i)) = all_labels.row(src);
            }
            const ForwardCache cache = forward(params, batch_inputs, batch_labels);
            grads = backward(params, cache, batch_inputs);
        }
        sgd_momentum_step(params, grads, velocity, config.learning_rate, config.momentum);
        if (!params.w1.allFinite() || !params.w2.allFinite()) {
            throw Error("train: parameters diverged at step " + std::to_string(step + 1));
        }
    }
    return trace;
}

}  // namespace racedyn
