#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include "racedyn/datasets.hpp"
#include "racedyn/network.hpp"
#include "racedyn/numerics.hpp"

namespace racedyn::testing {

struct Instance {
    NetworkParams params;
    BinaryDataset data;
};

/// Random network and dataset with every |preactivation| >= min_margin and
/// at least one sample of each class. Redraws until the margin holds.
inline Instance random_instance(std::size_t d_input, std::size_t width, std::size_t n, Rng& rng,
                                double min_margin = 1e-4) {
    for (;;) {
        Instance inst;
        inst.params.w1 = gaussian_matrix(width, d_input, 1.0, rng);
        inst.params.b1 = gaussian_matrix(width, 1, 0.5, rng);
        inst.params.w2 = gaussian_matrix(2, width, 1.0, rng);
        inst.params.b2 = gaussian_matrix(2, 1, 0.5, rng);
        inst.data.inputs = gaussian_matrix(n, d_input, 1.0, rng);
        inst.data.labels.resize(n);
        for (std::size_t s = 0; s < n; ++s) {
            inst.data.labels[s] = s % 2 == 0 ? ClassLabel::class1 : ClassLabel::class2;
        }
        const Matrix pre = (inst.data.inputs * inst.params.w1.transpose()).rowwise() + inst.params.b1.transpose();
        if (pre.cwiseAbs().minCoeff() >= min_margin) {
            return inst;
        }
    }
}

/// Central difference of f at 0.
inline double central_difference(const std::function<double(double)>& f, double h = 1e-6) {
    return (f(h) - f(-h)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double loss_of(const NetworkParams& p, const BinaryDataset& data) {
    return cross_entropy_loss(forward(p, data));
}

}  // namespace racedyn::testing
