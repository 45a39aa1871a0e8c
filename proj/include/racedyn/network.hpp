#pragma once

#include <cstddef>

#include "racedyn/datasets.hpp"
#include "racedyn/numerics.hpp"

namespace racedyn {

using GateMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameters of  y = softmax(W2 relu(W1 x + b1) + b2).
///
/// Neuron a owns row a of w1 (incoming weights), b1[a] and column a of w2
/// (outgoing weights). b2 belongs to no neuron.
struct NetworkParams {
    Matrix w1;   // d x d_input
    Vector b1;   // d
    Matrix w2;   // 2 x d
    Vector b2;   // 2

    std::size_t width() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }

    Vector incoming(std::size_t neuron) const { return w1.row(static_cast<Eigen::Index>(neuron)).transpose(); }
    Vector outgoing(std::size_t neuron) const { return w2.col(static_cast<Eigen::Index>(neuron)); }

    /// Throws DimensionMismatch / Error on inconsistent shapes or non-finite entries.
    void validate() const;

    static NetworkParams zeros(std::size_t width, std::size_t input_dim);
};

/// Same block layout as NetworkParams.
struct Gradients {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;

    static Gradients zeros_like(const NetworkParams& params);
};

/// W1, W2 ~ Normal(0, std^2) (W1 drawn first), both biases zero.
NetworkParams init_params(std::size_t width, std::size_t input_dim, double std, Rng& rng);

/// Everything the backward pass and the per-neuron diagnostics need.
struct ForwardCache {
    Matrix preactivations;    // N x d
    Matrix hidden;            // N x d, post-ReLU
    GateMatrix gating;        // N x d, preactivation > 0
    Matrix logits;            // N x 2
    Matrix probabilities;     // N x 2 softmax; rounds to 0/1 once the logit gap exceeds ~37
    Matrix log_probabilities; // N x 2
    Matrix labels;            // N x 2
    Matrix delta_y;           // N x 2, labels - probabilities

    std::size_t batch_size() const { return static_cast<std::size_t>(preactivations.rows()); }
    std::size_t width() const { return static_cast<std::size_t>(preactivations.cols()); }
};

/// inputs: N x d_input, labels: N x 2 rows summing to one.
ForwardCache forward(const NetworkParams& params, const Eigen::Ref<const Matrix>& inputs,
                     const Eigen::Ref<const Matrix>& labels);
ForwardCache forward(const NetworkParams& params, const BinaryDataset& dataset);

/// Batch mean of -sum_k y_k log(yhat_k).
double cross_entropy_loss(const ForwardCache& cache);

/// Batch-mean gradients of cross_entropy_loss. The ReLU derivative is taken
/// as 0 at a preactivation of exactly 0.
Gradients backward(const NetworkParams& params, const ForwardCache& cache, const Eigen::Ref<const Matrix>& inputs);

/// Classical momentum:
///   velocity <- momentum * velocity + grads
///   params   <- params - learning_rate * velocity
void sgd_momentum_step(NetworkParams& params, const Gradients& grads, Gradients& velocity, double learning_rate,
                       double momentum);

}  // namespace racedyn
