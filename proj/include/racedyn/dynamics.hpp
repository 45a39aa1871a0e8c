#pragma once

// Per-neuron analytical quantities of a single-hidden-layer ReLU network
// trained with softmax cross-entropy.
//
// Averages written <.> below follow the convention (1/N) sum_s g_s (.),
// i.e. a sum over the neuron's effective samples divided by the full N,
// which is what makes them coincide with batch-mean Cartesian gradients.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "racedyn/datasets.hpp"
#include "racedyn/network.hpp"
#include "racedyn/numerics.hpp"

namespace racedyn {

/// One bit per sample: does neuron alpha pass it?
struct GatingVector {
    std::vector<std::uint8_t> bits;

    std::size_t size() const { return bits.size(); }
    std::size_t count() const;
    bool operator[](std::size_t s) const { return bits[s] != 0; }
    bool operator==(const GatingVector&) const = default;
};

GatingVector gating_vector(const NetworkParams& params, const BinaryDataset& dataset, std::size_t neuron);
/// Gating column of `neuron` from an existing forward pass.
GatingVector gating_from_cache(const ForwardCache& cache, std::size_t neuron);

/// Per-class statistics over the samples a gate lets through. Means and
/// second moments are empty optionals when the class has no effective sample.
struct EffectiveStats {
    std::size_t n_eff = 0;
    std::size_t n_eff1 = 0;
    std::size_t n_eff2 = 0;
    std::optional<Vector> mean1;
    std::optional<Vector> mean2;
    std::optional<Matrix> second_moment1;   // <x x^T> over effective class-1 samples
    std::optional<Matrix> second_moment2;

    bool empty() const { return n_eff == 0; }
};

EffectiveStats effective_stats(const BinaryDataset& dataset, const GatingVector& gating);

/// gamma = (1/N) sum_s g_s cos(phi_dy_s - phi_a) |dy_s| x_s
struct GammaVector {
    Vector gamma;
    double norm = 0.0;
    std::optional<Vector> direction;   // empty when norm < kGammaDegenerateNorm

    bool has_direction() const { return direction.has_value(); }
};

inline constexpr double kGammaDegenerateNorm = 1e-14;

/// Throws DegenerateInput when the neuron's outgoing weights are zero.
GammaVector gamma(const NetworkParams& params, const BinaryDataset& dataset, const ForwardCache& cache,
                  std::size_t neuron);

/// xi_k = sum over effective class-k samples of |dy_s| x_s
/// m1   = sum over effective class-1 x_s - sum over effective class-2 x_s,  m2 = -m1
/// A class without effective samples contributes a zero sum; the counts
/// tell the caller which sums are empty.
struct TargetVectors {
    Vector xi1;
    Vector xi2;
    Vector m1;
    Vector m2;
    std::size_t n_eff1 = 0;
    std::size_t n_eff2 = 0;

    bool xi1_defined() const { return n_eff1 > 0; }
    bool xi2_defined() const { return n_eff2 > 0; }
    bool m_defined() const { return n_eff1 + n_eff2 > 0; }
};

TargetVectors target_vectors(const BinaryDataset& dataset, const ForwardCache& cache, const GatingVector& gating);

/// Which stable direction the outgoing weights head to under fixed gating.
enum class Branch : std::uint8_t { class1, class2 };

/// 7pi/4 for class1, 3pi/4 for class2.
double branch_angle(Branch branch);
/// +1 for class1, -1 for class2.
inline double branch_sign(Branch branch) { return branch == Branch::class1 ? 1.0 : -1.0; }

struct BranchPrediction {
    Branch branch = Branch::class2;
    bool tie = false;
    double margin = 0.0;   // w1 . (xi1 - xi2)
};

/// class1 iff w1 . xi1 > w1 . xi2; an exact tie reports class2 with `tie` set.
BranchPrediction target_phi_branch(const NetworkParams& params, std::size_t neuron, const TargetVectors& tv);

/// Loss gradients in polar coordinates of one neuron, gating held fixed.
struct PolarGradients {
    double d_phi = 0.0;                        // dL/d phi_a
    double d_norm_w2 = 0.0;                    // dL/d |w2_a|
    double tangential_theta_magnitude = 0.0;   // |w2||w1||gamma| sin(delta)
    double d_norm_w1 = 0.0;                    // -|w2||gamma| cos(delta)
    double d_bias = 0.0;                       // dL/d b_a
};

/// Throws DegenerateInput when either weight vector of the neuron is zero.
PolarGradients polar_gradients(const NetworkParams& params, const BinaryDataset& dataset, const ForwardCache& cache,
                               std::size_t neuron);

/// tan(phi_target - phi_alpha); `diverges` when the cosine vanishes.
struct GradientRatio {
    double value = 0.0;
    bool diverges = false;
};

GradientRatio gradient_ratio(double phi_target, double phi_alpha);

/// Angle between the neuron's incoming weights and gamma, in [0, pi].
/// Throws DegenerateInput when gamma has no direction or w1 is zero.
double delta_alpha(const NetworkParams& params, std::size_t neuron, const GammaVector& gamma);

/// |w2_a|^2 - |w1_a|^2, constant under gradient flow while b_a stays 0.
double conserved_quantity(const NetworkParams& params, std::size_t neuron);

/// Scale k of one neuron sharing the target, signed by its outgoing branch.
struct GroupCoefficient {
    double k = 0.0;
    Branch branch = Branch::class1;
};

/// The ill-conditioned system the first-order target needs to invert.
class SingularSystem : public Error {
public:
    SingularSystem(const std::string& what, double condition) : Error(what), condition_(condition) {}
    double condition_estimate() const { return condition_; }

private:
    double condition_;
};

/// First-order (softmax linearised around 0) incoming-weight steady state
/// for neurons sharing one effective dataset:
///   Q  = -(sum_b sign(b) k_b) * S,   S = sum over effective samples of x x^T
///   m  = N_e1 <x>_C1 - N_e2 <x>_C2
///   w* = -Q^{-1} m
/// Throws SingularSystem when Q cannot be inverted (condition > 1e12).
Vector first_order_target(const EffectiveStats& stats, std::span<const GroupCoefficient> group);

enum class Sign : std::int8_t { negative = -1, zero = 0, positive = 1 };

/// Sign of d<|dy|>/d a_alpha from the first-order softmax expansion:
///   value = -1/2 cos(phi_a - 7pi/4) (w1_hat . m1) / N_e
/// `applicable` holds when delta < 0.2 rad and phi is within 0.05 rad of
/// the predicted branch; the value is reported either way.
struct LossSensitivity {
    double value = 0.0;
    Sign sign = Sign::zero;
    bool applicable = false;
    bool degenerate = false;   // zero gamma or no effective samples
};

inline constexpr double kSensitivityMaxDelta = 0.2;
inline constexpr double kSensitivityMaxPhiError = 0.05;

LossSensitivity loss_sensitivity_sign(const NetworkParams& params, const BinaryDataset& dataset,
                                      const ForwardCache& cache, std::size_t neuron);

/// Polar state of one neuron at one instant. Quantities that are undefined
/// for the current state (zero vectors) are NaN.
struct NeuronDiagnostics {
    std::size_t neuron = 0;
    double phi = 0.0;
    double norm_w1 = 0.0;
    double norm_w2 = 0.0;
    double a = 0.0;          // norm_w1 * norm_w2
    double bias = 0.0;
    double delta = 0.0;      // angle(w1, gamma)
    double cos_delta = 0.0;
    double c = 0.0;          // norm_w2^2 - norm_w1^2
    Branch branch = Branch::class2;
    bool branch_tie = false;
    double gamma_norm = 0.0;
    std::size_t n_eff = 0;
    std::size_t n_eff1 = 0;
    std::size_t n_eff2 = 0;

    /// cos_delta, negated for class-2 branch neurons.
    double branch_signed_cos_delta() const { return branch_sign(branch) * cos_delta; }
};

NeuronDiagnostics neuron_diagnostics(const NetworkParams& params, const BinaryDataset& dataset,
                                     const ForwardCache& cache, std::size_t neuron);

/// Diagnostics of every neuron from one forward pass over `dataset`.
std::vector<NeuronDiagnostics> all_diagnostics(const NetworkParams& params, const BinaryDataset& dataset);
std::vector<NeuronDiagnostics> all_diagnostics(const NetworkParams& params, const BinaryDataset& dataset,
                                               const ForwardCache& cache);

/// Largest deviation (radians) of angle_2d(dy_s) from 7pi/4 (class 1) or
/// 3pi/4 (class 2) over the batch. Samples with dy exactly zero are skipped.
double max_delta_y_angle_error(const ForwardCache& cache);

}  // namespace racedyn
