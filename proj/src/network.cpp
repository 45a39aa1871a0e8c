#include "racedyn/network.hpp"

#include <cmath>
#include <string>

namespace racedyn {

namespace {

std::string shape(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

void NetworkParams::validate() const {
    const auto d = w1.rows();
    if (d == 0 || w1.cols() == 0) {
        throw DimensionMismatch("network: empty W1 (" + shape(w1.rows(), w1.cols()) + ")");
    }
    if (b1.size() != d) {
        throw DimensionMismatch("network: b1 has " + std::to_string(b1.size()) + " entries, expected " +
                                std::to_string(d));
    }
    if (w2.rows() != 2 || w2.cols() != d) {
        throw DimensionMismatch("network: W2 is " + shape(w2.rows(), w2.cols()) + ", expected " + shape(2, d));
    }
    if (b2.size() != 2) {
        throw DimensionMismatch("network: b2 must have 2 entries");
    }
    require_finite(w1, "network W1");
    require_finite(w2, "network W2");
    if (!b1.allFinite() || !b2.allFinite()) {
        throw Error("network: non-finite bias");
    }
}

NetworkParams NetworkParams::zeros(std::size_t width, std::size_t input_dim) {
    const auto d = static_cast<Eigen::Index>(width);
    NetworkParams p;
    p.w1 = Matrix::Zero(d, static_cast<Eigen::Index>(input_dim));
    p.b1 = Vector::Zero(d);
    p.w2 = Matrix::Zero(2, d);
    p.b2 = Vector::Zero(2);
    return p;
}

Gradients Gradients::zeros_like(const NetworkParams& params) {
    Gradients g;
    g.w1 = Matrix::Zero(params.w1.rows(), params.w1.cols());
    g.b1 = Vector::Zero(params.b1.size());
    g.w2 = Matrix::Zero(params.w2.rows(), params.w2.cols());
    g.b2 = Vector::Zero(params.b2.size());
    return g;
}

NetworkParams init_params(std::size_t width, std::size_t input_dim, double std, Rng& rng) {
    NetworkParams p = NetworkParams::zeros(width, input_dim);
    p.w1 = gaussian_matrix(width, input_dim, std, rng);
    p.w2 = gaussian_matrix(2, width, std, rng);
    return p;
}

ForwardCache forward(const NetworkParams& params, const Eigen::Ref<const Matrix>& inputs,
                     const Eigen::Ref<const Matrix>& labels) {
    params.validate();
    if (inputs.cols() != params.w1.cols()) {
        throw DimensionMismatch("forward: inputs have " + std::to_string(inputs.cols()) +
                                " features, network expects " + std::to_string(params.w1.cols()));
    }
    if (labels.rows() != inputs.rows() || labels.cols() != 2) {
        throw DimensionMismatch("forward: labels are " + shape(labels.rows(), labels.cols()) + ", expected " +
                                shape(inputs.rows(), 2));
    }

    ForwardCache c;
    const auto n = inputs.rows();
    c.preactivations = (inputs * params.w1.transpose()).rowwise() + params.b1.transpose();
    c.gating = c.preactivations.array() > 0.0;
    c.hidden = c.gating.select(c.preactivations.array(), 0.0).matrix();
    c.logits = (c.hidden * params.w2.transpose()).rowwise() + params.b2.transpose();
    c.labels = labels;
    c.probabilities.resize(n, 2);
    c.log_probabilities.resize(n, 2);
    c.delta_y.resize(n, 2);

    for (Eigen::Index s = 0; s < n; ++s) {
        const double z0 = c.logits(s, 0);
        const double z1 = c.logits(s, 1);
        const double top = std::max(z0, z1);
        const double e0 = std::exp(z0 - top);
        const double e1 = std::exp(z1 - top);
        const double log_sum = std::log(e0 + e1);
        c.probabilities(s, 0) = e0 / (e0 + e1);
        c.probabilities(s, 1) = e1 / (e0 + e1);
        c.log_probabilities(s, 0) = z0 - top - log_sum;
        c.log_probabilities(s, 1) = z1 - top - log_sum;

        const double y0 = labels(s, 0);
        const double y1 = labels(s, 1);
        if (y0 == 1.0 && y1 == 0.0) {
            // 1 - p0 == p1 exactly in real arithmetic; using p1 keeps the
            // error vector on the 7pi/4 ray even when it is tiny.
            c.delta_y(s, 0) = c.probabilities(s, 1);
            c.delta_y(s, 1) = -c.probabilities(s, 1);
        } else if (y0 == 0.0 && y1 == 1.0) {
            c.delta_y(s, 0) = -c.probabilities(s, 0);
            c.delta_y(s, 1) = c.probabilities(s, 0);
        } else {
            c.delta_y(s, 0) = y0 - c.probabilities(s, 0);
            c.delta_y(s, 1) = y1 - c.probabilities(s, 1);
        }
    }
    return c;
}

ForwardCache forward(const NetworkParams& params, const BinaryDataset& dataset) {
    return forward(params, dataset.inputs, dataset.label_matrix());
}

double cross_entropy_loss(const ForwardCache& cache) {
    const auto n = cache.labels.rows();
    if (n == 0) {
        throw Error("cross_entropy_loss: empty batch");
    }
    const double total = -(cache.labels.array() * cache.log_probabilities.array()).sum();
    return total / static_cast<double>(n);
}

Gradients backward(const NetworkParams& params, const ForwardCache& cache, const Eigen::Ref<const Matrix>& inputs) {
    const auto n = inputs.rows();
    if (cache.preactivations.rows() != n || cache.preactivations.cols() != params.w1.rows() ||
        inputs.cols() != params.w1.cols() || cache.delta_y.rows() != n) {
        throw DimensionMismatch("backward: cache does not match parameters/inputs (stale cache?)");
    }
    if (n == 0) {
        throw Error("backward: empty batch");
    }
    // dL/dz = -(y - yhat), averaged over the batch.
    const Matrix d_logits = -cache.delta_y / static_cast<double>(n);

    Gradients g;
    g.w2 = d_logits.transpose() * cache.hidden;
    g.b2 = d_logits.colwise().sum().transpose();
    const Matrix d_hidden = d_logits * params.w2;
    const Matrix d_pre = cache.gating.select(d_hidden.array(), 0.0).matrix();
    g.w1 = d_pre.transpose() * inputs;
    g.b1 = d_pre.colwise().sum().transpose();
    return g;
}

void sgd_momentum_step(NetworkParams& params, const Gradients& grads, Gradients& velocity, double learning_rate,
                       double momentum) {
    if (grads.w1.rows() != params.w1.rows() || grads.w1.cols() != params.w1.cols() ||
        velocity.w1.rows() != params.w1.rows() || velocity.w1.cols() != params.w1.cols() ||
        grads.w2.cols() != params.w2.cols() || velocity.w2.cols() != params.w2.cols()) {
        throw DimensionMismatch("sgd_momentum_step: gradient/velocity shapes differ from parameters");
    }
    velocity.w1 = momentum * velocity.w1 + grads.w1;
    velocity.b1 = momentum * velocity.b1 + grads.b1;
    velocity.w2 = momentum * velocity.w2 + grads.w2;
    velocity.b2 = momentum * velocity.b2 + grads.b2;
    params.w1 -= learning_rate * velocity.w1;
    params.b1 -= learning_rate * velocity.b1;
    params.w2 -= learning_rate * velocity.w2;
    params.b2 -= learning_rate * velocity.b2;
}

}  // namespace racedyn
