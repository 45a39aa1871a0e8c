#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "racedyn/numerics.hpp"

namespace racedyn {

enum class ClassLabel : std::uint8_t { class1 = 0, class2 = 1 };

inline Eigen::Index label_index(ClassLabel c) { return static_cast<Eigen::Index>(c); }

/// N labelled inputs for two-class classification.
struct BinaryDataset {
    Matrix inputs;                    // N x d_input, one sample per row
    std::vector<ClassLabel> labels;   // N entries

    std::size_t size() const { return labels.size(); }
    std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
    std::size_t count(ClassLabel c) const;

    /// N x 2 one-hot targets.
    Matrix label_matrix() const;

    /// Throws Error unless shapes agree, N >= 1 and every input is finite.
    /// With `require_both_classes`, also rejects single-class data.
    void validate(bool require_both_classes = false) const;
};

struct GaussianCluster {
    Vector direction;      // centroid direction, normalised on use
    double norm = 1.0;     // centroid magnitude, > 0
    double spread = 0.0;   // per-coordinate std, >= 0
    std::size_t count = 0;
    ClassLabel label = ClassLabel::class1;
};

/// Four 2-D clusters in XOR position: class 1 at angles pi/4 and 5pi/4,
/// class 2 at 3pi/4 and 7pi/4. Centroid norms are 1, 2, 3, 4 in order of
/// increasing angle.
std::vector<GaussianCluster> xor_like_clusters(std::size_t per_cluster = 50, double spread = 0.15);

/// Draws every cluster's points, then shuffles the sample order.
BinaryDataset generate_cluster_dataset(std::span<const GaussianCluster> clusters, Rng& rng);

/// Column selector for CSV ingestion: header name or zero-based index.
using LabelColumn = std::variant<std::string, std::size_t>;

/// Reads a comma-separated numeric table with one label column.
///
/// The first row is a header iff one of its non-label cells is not numeric
/// (a name selector always requires a header). The first label value seen
/// becomes class 1; exactly two distinct labels are required.
BinaryDataset load_csv_dataset(const std::filesystem::path& path, const LabelColumn& label_column);

/// Per-feature zero mean and unit (population) standard deviation. Columns
/// with zero variance are returned untouched. Requires N >= 2.
BinaryDataset standardize(const BinaryDataset& dataset);

/// Writes `dataset` as CSV with columns x0..x{d-1},label (label is 1 or 2).
void write_dataset_csv(const BinaryDataset& dataset, const std::filesystem::path& path);

}  // namespace racedyn
