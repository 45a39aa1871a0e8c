#include "racedyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace racedyn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_neuron(const NetworkParams& params, std::size_t neuron, const char* op) {
    if (neuron >= params.width()) {
        throw Error(std::string(op) + ": neuron index " + std::to_string(neuron) + " out of range (width " +
                    std::to_string(params.width()) + ")");
    }
}

void check_cache(const NetworkParams& params, const BinaryDataset& dataset, const ForwardCache& cache, const char* op) {
    if (cache.batch_size() != dataset.size() || cache.width() != params.width() ||
        dataset.input_dim() != params.input_dim()) {
        throw DimensionMismatch(std::string(op) + ": forward cache does not match parameters/dataset");
    }
}

bool is_class1(const ForwardCache& cache, Eigen::Index s) {
    return cache.labels(s, 0) > cache.labels(s, 1);
}

}  // namespace

std::size_t GatingVector::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

GatingVector gating_vector(const NetworkParams& params, const BinaryDataset& dataset, std::size_t neuron) {
    check_neuron(params, neuron, "gating_vector");
    if (dataset.input_dim() != params.input_dim()) {
        throw DimensionMismatch("gating_vector: dataset dimension differs from network input");
    }
    const auto a = static_cast<Eigen::Index>(neuron);
    const Vector pre = (dataset.inputs * params.w1.row(a).transpose()).array() + params.b1[a];
    GatingVector g;
    g.bits.resize(dataset.size());
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        g.bits[s] = pre[static_cast<Eigen::Index>(s)] > 0.0 ? 1 : 0;
    }
    return g;
}

GatingVector gating_from_cache(const ForwardCache& cache, std::size_t neuron) {
    if (neuron >= cache.width()) {
        throw Error("gating_from_cache: neuron index out of range");
    }
    GatingVector g;
    g.bits.resize(cache.batch_size());
    for (std::size_t s = 0; s < cache.batch_size(); ++s) {
        g.bits[s] = cache.gating(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(neuron)) ? 1 : 0;
    }
    return g;
}

EffectiveStats effective_stats(const BinaryDataset& dataset, const GatingVector& gating) {
    if (gating.size() != dataset.size()) {
        throw DimensionMismatch("effective_stats: gating has " + std::to_string(gating.size()) + " bits for " +
                                std::to_string(dataset.size()) + " samples");
    }
    const auto dim = static_cast<Eigen::Index>(dataset.input_dim());
    Vector sum1 = Vector::Zero(dim);
    Vector sum2 = Vector::Zero(dim);
    Matrix outer1 = Matrix::Zero(dim, dim);
    Matrix outer2 = Matrix::Zero(dim, dim);
    EffectiveStats st;
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        if (!gating[s]) {
            continue;
        }
        const Vector x = dataset.inputs.row(static_cast<Eigen::Index>(s)).transpose();
        if (dataset.labels[s] == ClassLabel::class1) {
            ++st.n_eff1;
            sum1 += x;
            outer1 += x * x.transpose();
        } else {
            ++st.n_eff2;
            sum2 += x;
            outer2 += x * x.transpose();
        }
    }
    st.n_eff = st.n_eff1 + st.n_eff2;
    if (st.n_eff1 > 0) {
        const double n1 = static_cast<double>(st.n_eff1);
        st.mean1 = sum1 / n1;
        st.second_moment1 = outer1 / n1;
    }
    if (st.n_eff2 > 0) {
        const double n2 = static_cast<double>(st.n_eff2);
        st.mean2 = sum2 / n2;
        st.second_moment2 = outer2 / n2;
    }
    return st;
}

GammaVector gamma(const NetworkParams& params, const BinaryDataset& dataset, const ForwardCache& cache,
                  std::size_t neuron) {
    check_neuron(params, neuron, "gamma");
    check_cache(params, dataset, cache, "gamma");
    const auto a = static_cast<Eigen::Index>(neuron);
    const Vector w2 = params.w2.col(a);
    const double w2_norm = w2.norm();
    if (w2_norm == 0.0) {
        throw DegenerateInput("gamma: outgoing weights of neuron " + std::to_string(neuron) + " are zero");
    }
    const Vector w2_hat = w2 / w2_norm;
    // |dy| cos(phi_dy - phi_a) is the projection of dy onto the unit outgoing direction.
    const Vector weight = cache.gating.col(a).select((cache.delta_y * w2_hat).array(), 0.0).matrix();

    GammaVector out;
    out.gamma = dataset.inputs.transpose() * weight / static_cast<double>(dataset.size());
    out.norm = out.gamma.norm();
    if (out.norm >= kGammaDegenerateNorm) {
        out.direction = out.gamma / out.norm;
    }
    return out;
}

TargetVectors target_vectors(const BinaryDataset& dataset, const ForwardCache& cache, const GatingVector& gating) {
    if (gating.size() != dataset.size() || cache.batch_size() != dataset.size()) {
        throw DimensionMismatch("target_vectors: gating/cache do not match dataset");
    }
    const auto dim = static_cast<Eigen::Index>(dataset.input_dim());
    TargetVectors tv;
    tv.xi1 = Vector::Zero(dim);
    tv.xi2 = Vector::Zero(dim);
    tv.m1 = Vector::Zero(dim);
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        if (!gating[s]) {
            continue;
        }
        const auto row = static_cast<Eigen::Index>(s);
        const double err = cache.delta_y.row(row).norm();
        if (dataset.labels[s] == ClassLabel::class1) {
            ++tv.n_eff1;
            tv.xi1 += err * dataset.inputs.row(row).transpose();
            tv.m1 += dataset.inputs.row(row).transpose();
        } else {
            ++tv.n_eff2;
            tv.xi2 += err * dataset.inputs.row(row).transpose();
            tv.m1 -= dataset.inputs.row(row).transpose();
        }
    }
    tv.m2 = -tv.m1;
    return tv;
}

double branch_angle(Branch branch) {
    return branch == Branch::class1 ? kClass1Angle : kClass2Angle;
}

BranchPrediction target_phi_branch(const NetworkParams& params, std::size_t neuron, const TargetVectors& tv) {
    check_neuron(params, neuron, "target_phi_branch");
    const Vector w1 = params.incoming(neuron);
    BranchPrediction p;
    const double s1 = w1.dot(tv.xi1);
    const double s2 = w1.dot(tv.xi2);
    p.margin = s1 - s2;
    if (s1 > s2) {
        p.branch = Branch::class1;
    } else {
        p.branch = Branch::class2;
        p.tie = s1 == s2;
    }
    return p;
}

PolarGradients polar_gradients(const NetworkParams& params, const BinaryDataset& dataset, const ForwardCache& cache,
                               std::size_t neuron) {
    check_neuron(params, neuron, "polar_gradients");
    check_cache(params, dataset, cache, "polar_gradients");
    const auto a = static_cast<Eigen::Index>(neuron);
    const Vector w1 = params.incoming(neuron);
    const Vector w2 = params.outgoing(neuron);
    const double n1 = w1.norm();
    const double n2 = w2.norm();
    if (n1 == 0.0 || n2 == 0.0) {
        throw DegenerateInput("polar_gradients: zero weight vector on neuron " + std::to_string(neuron));
    }
    const Vector w2_hat = w2 / n2;
    const double inv_n = 1.0 / static_cast<double>(dataset.size());

    // With u = (cos phi, sin phi):  |dy| cos(phi_dy - phi) = dy . u,
    //                               |dy| sin(phi_dy - phi) = u x dy.
    double sum_h_sin = 0.0;
    double sum_h_cos = 0.0;
    double sum_g_cos = 0.0;
    for (Eigen::Index s = 0; s < cache.delta_y.rows(); ++s) {
        if (!cache.gating(s, a)) {
            continue;
        }
        const double dy0 = cache.delta_y(s, 0);
        const double dy1 = cache.delta_y(s, 1);
        const double proj = dy0 * w2_hat[0] + dy1 * w2_hat[1];
        const double cross = w2_hat[0] * dy1 - w2_hat[1] * dy0;
        const double h = cache.hidden(s, a);
        sum_h_sin += h * cross;
        sum_h_cos += h * proj;
        sum_g_cos += proj;
    }

    const GammaVector gv = gamma(params, dataset, cache, neuron);
    const Vector w1_hat = w1 / n1;
    const double radial = w1_hat.dot(gv.gamma);              // |gamma| cos(delta)
    const double perpendicular = (gv.gamma - radial * w1_hat).norm();   // |gamma| sin(delta)

    PolarGradients g;
    g.d_phi = -n2 * sum_h_sin * inv_n;
    g.d_norm_w2 = -sum_h_cos * inv_n;
    g.d_norm_w1 = -n2 * radial;
    g.tangential_theta_magnitude = n2 * n1 * perpendicular;
    g.d_bias = -n2 * sum_g_cos * inv_n;
    return g;
}

GradientRatio gradient_ratio(double phi_target, double phi_alpha) {
    const double diff = phi_target - phi_alpha;
    const double c = std::cos(diff);
    const double s = std::sin(diff);
    if (std::abs(c) <= 1e-15) {
        return {s >= 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), true};
    }
    return {s / c, false};
}

double delta_alpha(const NetworkParams& params, std::size_t neuron, const GammaVector& gamma) {
    check_neuron(params, neuron, "delta_alpha");
    if (!gamma.has_direction()) {
        throw DegenerateInput("delta_alpha: gamma vector of neuron " + std::to_string(neuron) + " is zero");
    }
    return angular_distance(params.incoming(neuron), gamma.gamma);
}

double conserved_quantity(const NetworkParams& params, std::size_t neuron) {
    check_neuron(params, neuron, "conserved_quantity");
    const auto a = static_cast<Eigen::Index>(neuron);
    return params.w2.col(a).squaredNorm() - params.w1.row(a).squaredNorm();
}

Vector first_order_target(const EffectiveStats& stats, std::span<const GroupCoefficient> group) {
    if (stats.empty()) {
        throw DegenerateInput("first_order_target: no effective samples");
    }
    if (group.empty()) {
        throw Error("first_order_target: empty neuron group");
    }
    const auto dim = stats.mean1 ? stats.mean1->size() : stats.mean2->size();
    Vector m = Vector::Zero(dim);
    Matrix s = Matrix::Zero(dim, dim);
    if (stats.mean1) {
        const double n1 = static_cast<double>(stats.n_eff1);
        m += n1 * *stats.mean1;
        s += n1 * *stats.second_moment1;
    }
    if (stats.mean2) {
        const double n2 = static_cast<double>(stats.n_eff2);
        m -= n2 * *stats.mean2;
        s += n2 * *stats.second_moment2;
    }
    double k_total = 0.0;
    for (const auto& member : group) {
        k_total += branch_sign(member.branch) * member.k;
    }
    const Matrix q = -k_total * s;

    const Eigen::SelfAdjointEigenSolver<Matrix> eig(q);
    const auto abs_eigs = eig.eigenvalues().cwiseAbs();
    const double largest = abs_eigs.maxCoeff();
    const double smallest = abs_eigs.minCoeff();
    const double condition =
        smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();
    if (!(largest > 0.0) || !(condition <= 1e12)) {
        throw SingularSystem("first_order_target: Q is singular (condition estimate " +
                                 std::to_string(condition) + ")",
                             condition);
    }
    return -q.ldlt().solve(m);
}

LossSensitivity loss_sensitivity_sign(const NetworkParams& params, const BinaryDataset& dataset,
                                      const ForwardCache& cache, std::size_t neuron) {
    check_neuron(params, neuron, "loss_sensitivity_sign");
    check_cache(params, dataset, cache, "loss_sensitivity_sign");
    LossSensitivity out;
    const Vector w1 = params.incoming(neuron);
    const Vector w2 = params.outgoing(neuron);
    if (w1.norm() == 0.0 || w2.norm() == 0.0) {
        out.degenerate = true;
        return out;
    }
    const GatingVector g = gating_from_cache(cache, neuron);
    const TargetVectors tv = target_vectors(dataset, cache, g);
    const GammaVector gv = gamma(params, dataset, cache, neuron);
    const std::size_t n_eff = tv.n_eff1 + tv.n_eff2;
    if (!gv.has_direction() || n_eff == 0) {
        out.degenerate = true;
        return out;
    }

    const double phi = angle_2d(w2);
    out.value = -0.5 * std::cos(phi - kClass1Angle) * w1.normalized().dot(tv.m1) / static_cast<double>(n_eff);
    out.sign = out.value < 0.0 ? Sign::negative : (out.value > 0.0 ? Sign::positive : Sign::zero);

    const double delta = angular_distance(w1, gv.gamma);
    const BranchPrediction branch = target_phi_branch(params, neuron, tv);
    const double phi_error = std::abs(angle_difference(phi, branch_angle(branch.branch)));
    out.applicable = delta < kSensitivityMaxDelta && phi_error < kSensitivityMaxPhiError;
    return out;
}

NeuronDiagnostics neuron_diagnostics(const NetworkParams& params, const BinaryDataset& dataset,
                                     const ForwardCache& cache, std::size_t neuron) {
    check_neuron(params, neuron, "neuron_diagnostics");
    check_cache(params, dataset, cache, "neuron_diagnostics");
    const auto a = static_cast<Eigen::Index>(neuron);
    const Vector w1 = params.incoming(neuron);
    const Vector w2 = params.outgoing(neuron);

    NeuronDiagnostics d;
    d.neuron = neuron;
    d.norm_w1 = w1.norm();
    d.norm_w2 = w2.norm();
    d.a = d.norm_w1 * d.norm_w2;
    d.bias = params.b1[a];
    d.c = d.norm_w2 * d.norm_w2 - d.norm_w1 * d.norm_w1;
    d.phi = d.norm_w2 > 0.0 ? angle_2d(w2) : kNaN;

    const GatingVector g = gating_from_cache(cache, neuron);
    const TargetVectors tv = target_vectors(dataset, cache, g);
    d.n_eff1 = tv.n_eff1;
    d.n_eff2 = tv.n_eff2;
    d.n_eff = tv.n_eff1 + tv.n_eff2;
    const BranchPrediction bp = target_phi_branch(params, neuron, tv);
    d.branch = bp.branch;
    d.branch_tie = bp.tie;

    d.delta = kNaN;
    d.cos_delta = kNaN;
    d.gamma_norm = kNaN;
    if (d.norm_w2 > 0.0) {
        const GammaVector gv = gamma(params, dataset, cache, neuron);
        d.gamma_norm = gv.norm;
        if (gv.has_direction() && d.norm_w1 > 0.0) {
            d.delta = angular_distance(w1, gv.gamma);
            d.cos_delta = std::cos(d.delta);
        }
    }
    return d;
}

std::vector<NeuronDiagnostics> all_diagnostics(const NetworkParams& params, const BinaryDataset& dataset,
                                               const ForwardCache& cache) {
    std::vector<NeuronDiagnostics> out;
    out.reserve(params.width());
    for (std::size_t a = 0; a < params.width(); ++a) {
        out.push_back(neuron_diagnostics(params, dataset, cache, a));
    }
    return out;
}

std::vector<NeuronDiagnostics> all_diagnostics(const NetworkParams& params, const BinaryDataset& dataset) {
    return all_diagnostics(params, dataset, forward(params, dataset));
}

double max_delta_y_angle_error(const ForwardCache& cache) {
    double worst = 0.0;
    for (Eigen::Index s = 0; s < cache.delta_y.rows(); ++s) {
        const double x = cache.delta_y(s, 0);
        const double y = cache.delta_y(s, 1);
        if (x == 0.0 && y == 0.0) {
            continue;
        }
        const double expected = is_class1(cache, s) ? kClass1Angle : kClass2Angle;
        worst = std::max(worst, std::abs(angle_difference(angle_2d(x, y), expected)));
    }
    return worst;
}

}  // namespace racedyn
