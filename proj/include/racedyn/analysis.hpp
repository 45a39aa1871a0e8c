#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "racedyn/datasets.hpp"
#include "racedyn/network.hpp"
#include "racedyn/training.hpp"

namespace racedyn {

/// Per neuron, the concatenation [w1_a, b_a, w2_a] (length d_input + 3).
std::vector<Vector> total_parameter_vectors(const NetworkParams& params);

/// Symmetric matrix of pairwise cosine similarities with unit diagonal.
struct SimilarityMatrix {
    Matrix values;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

/// Throws DegenerateInput naming the first zero vector.
SimilarityMatrix cosine_similarity_matrix(std::span<const Vector> vectors);

using NeuronGroups = std::vector<std::vector<std::size_t>>;

/// Greedy grouping in index order: a neuron joins the first group whose
/// representative (its lowest index) has similarity >= threshold with it,
/// otherwise it founds a new group. Every neuron ends up in exactly one group.
NeuronGroups alignment_clusters(const SimilarityMatrix& sim, double threshold);

struct MergeReport {
    NeuronGroups groups;          // groups with two or more members
    std::size_t original_width = 0;
    std::size_t merged_width = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double relative_loss_change = 0.0;   // (after - before) / before
};

/// Replaces every aligned group by one neuron placed at the representative's
/// position. The merged total vector has norm sqrt(sum |t_b|^2) and points
/// along sum |t_b| t_b (members weighted by squared norm), which reproduces
/// the group's summed output exactly for parallel members and to second
/// order in their spread otherwise.
std::pair<NetworkParams, MergeReport> merge_aligned_neurons(const NetworkParams& params, const BinaryDataset& dataset,
                                                            double threshold);

struct PruneReport {
    std::vector<std::size_t> pruned;
    std::vector<std::size_t> kept;
    double keep_fraction = 1.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
};

/// Keeps the ceil(keep_fraction * d) neurons with the largest a = |w1||w2|
/// (ties favour the lower index) and zeroes every parameter of the rest.
std::pair<NetworkParams, PruneReport> prune_by_norm(const NetworkParams& params, const BinaryDataset& dataset,
                                                    double keep_fraction);

struct StepWindow {
    std::size_t start = 0;
    std::size_t end = 0;   // inclusive
};

struct GrowthFit {
    std::size_t neuron = 0;
    StepWindow window;
    std::size_t points = 0;
    double fitted_slope = 0.0;      // d ln a / d step, least squares
    double intercept = 0.0;
    double r_squared = 0.0;
    double cos_delta_start = 0.0;
    /// Mean of lr |gamma| cos(delta) over the window's snapshots, lr taken
    /// as learning_rate / (1 - momentum).
    double predicted_slope = 0.0;
    /// Same law without assuming |w1| = |w2|, also averaged over the window:
    /// lr |gamma| cos(delta) (|w1|^2 + |w2|^2) / a.
    double predicted_slope_unequal_norms = 0.0;
};

/// Throws Error on fewer than 3 snapshots in the window or non-positive a.
GrowthFit fit_exponential_growth(const TrainingTrace& trace, std::size_t neuron, StepWindow window);

/// Least-squares line through (t, y); R^2 clamped to [0, 1] (1 for constant y).
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};
LineFit fit_line(std::span<const double> t, std::span<const double> y);

/// Number of separate stretches in which the loss falls by at least
/// `min_decrease` (relative) within `window_fraction` of the run's steps.
/// A stretch is a maximal run of consecutive snapshots from which such a
/// fall starts.
std::size_t count_drop_events(const TrainingTrace& trace, double min_decrease = 0.3, double window_fraction = 0.05);

inline constexpr double kPlateauTolerance = 0.10;

/// Leading run of snapshots whose loss stays within 10% of the step-0 loss.
/// A run of fewer than two snapshots counts as no plateau.
struct Plateau {
    std::size_t count = 0;   // snapshots in the run
    std::size_t start_step = 0;
    std::size_t end_step = 0;

    bool empty() const { return count < 2; }
    StepWindow window() const { return {start_step, end_step}; }
};

Plateau detect_plateau(const TrainingTrace& trace);

enum class CosineSigning { branch_signed, unsigned_cos };

/// Spearman rank correlation between cos(delta) at `t_early` and the final
/// a. With branch_signed, cos(delta) of neurons on the class-2 branch at
/// the final snapshot is negated. Neurons whose delta is undefined are
/// skipped; fewer than 3 usable neurons throws Error.
double early_prediction_correlation(const TrainingTrace& trace, std::size_t t_early,
                                    CosineSigning signing = CosineSigning::branch_signed);

/// Average-rank Spearman correlation; 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Multiplier applied to |gamma| over time, linearly interpolated between
/// points and held at the last value afterwards. An empty curve means no decay.
struct ErrorDecayCurve {
    std::vector<double> times;
    std::vector<double> factors;

    double at(double t) const;
    bool constant() const { return times.empty(); }
};

struct RaceSpec {
    double learning_rate = 1e-3;
    double gamma_norm = 1.0;
    std::vector<double> cos_delta;   // each in (-1, 1]
    std::vector<double> initial_a;   // each > 0
    ErrorDecayCurve decay;
    double duration = 1000.0;        // in optimiser steps
    double max_rate_step = 1e-3;     // bound on lr |gamma| dt

    void validate() const;
};

struct RaceTrajectory {
    std::vector<double> times;
    Matrix a;   // times.size() x group size

    double step() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

/// Explicit Euler for da_b/dt = lr |gamma(t)| cos(delta_b) a_b with
/// dt = duration / n, n the smallest count with n >= duration and
/// lr |gamma|_max dt <= max_rate_step. Every Euler step is recorded.
RaceTrajectory integrate_race(const RaceSpec& spec);

/// Mean pairwise cosine similarity of incoming-weight directions among
/// neurons sharing both a gating pattern and an outgoing branch; groups of
/// one and neurons with zero incoming weights are ignored.
struct AlignmentScore {
    double score = 0.0;
    std::size_t groups = 0;
    std::size_t neurons = 0;
    std::size_t pairs = 0;
};

AlignmentScore alignment_score(const NetworkParams& params, const BinaryDataset& dataset);

}  // namespace racedyn
