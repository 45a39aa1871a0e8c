#include "racedyn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "racedyn/text.hpp"

namespace racedyn {

std::size_t BinaryDataset::count(ClassLabel c) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
}

Matrix BinaryDataset::label_matrix() const {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 2);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        y(static_cast<Eigen::Index>(s), label_index(labels[s])) = 1.0;
    }
    return y;
}

void BinaryDataset::validate(bool require_both_classes) const {
    if (labels.empty()) {
        throw Error("dataset: no samples");
    }
    if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
        throw DimensionMismatch("dataset: " + std::to_string(inputs.rows()) + " inputs but " +
                                std::to_string(labels.size()) + " labels");
    }
    if (inputs.cols() == 0) {
        throw Error("dataset: zero-dimensional inputs");
    }
    require_finite(inputs, "dataset inputs");
    if (require_both_classes && (count(ClassLabel::class1) == 0 || count(ClassLabel::class2) == 0)) {
        throw Error("dataset: both classes must be present");
    }
}

std::vector<GaussianCluster> xor_like_clusters(std::size_t per_cluster, double spread) {
    std::vector<GaussianCluster> clusters;
    const ClassLabel order[] = {ClassLabel::class1, ClassLabel::class2, ClassLabel::class1, ClassLabel::class2};
    for (int k = 0; k < 4; ++k) {
        const double angle = kPi / 4.0 + k * kPi / 2.0;
        GaussianCluster c;
        c.direction = Vector(2);
        c.direction << std::cos(angle), std::sin(angle);
        c.norm = static_cast<double>(k + 1);
        c.spread = spread;
        c.count = per_cluster;
        c.label = order[k];
        clusters.push_back(std::move(c));
    }
    return clusters;
}

BinaryDataset generate_cluster_dataset(std::span<const GaussianCluster> clusters, Rng& rng) {
    if (clusters.empty()) {
        throw Error("generate_cluster_dataset: empty cluster spec");
    }
    const auto dim = clusters.front().direction.size();
    bool has1 = false;
    bool has2 = false;
    std::size_t total = 0;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
        const auto& c = clusters[k];
        const std::string where = "cluster " + std::to_string(k) + ": ";
        if (c.direction.size() != dim || dim == 0) {
            throw DimensionMismatch(where + "direction dimension differs from cluster 0");
        }
        if (c.direction.norm() == 0.0) {
            throw Error(where + "zero centroid direction");
        }
        if (!(c.norm > 0.0)) {
            throw Error(where + "centroid norm must be positive");
        }
        if (!(c.spread >= 0.0)) {
            throw Error(where + "spread must be non-negative");
        }
        has1 = has1 || c.label == ClassLabel::class1;
        has2 = has2 || c.label == ClassLabel::class2;
        total += c.count;
    }
    if (!has1 || !has2) {
        throw Error("generate_cluster_dataset: need at least one cluster per class");
    }
    if (total == 0) {
        throw Error("generate_cluster_dataset: all cluster counts are zero");
    }

    Matrix points(static_cast<Eigen::Index>(total), dim);
    std::vector<ClassLabel> labels;
    labels.reserve(total);
    Eigen::Index row = 0;
    for (const auto& c : clusters) {
        const Vector centroid = c.norm * c.direction.normalized();
        for (std::size_t i = 0; i < c.count; ++i, ++row) {
            for (Eigen::Index j = 0; j < dim; ++j) {
                points(row, j) = centroid[j] + c.spread * rng.normal();
            }
            labels.push_back(c.label);
        }
    }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);

    BinaryDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(total), dim);
    out.labels.resize(total);
    for (std::size_t s = 0; s < total; ++s) {
        out.inputs.row(static_cast<Eigen::Index>(s)) = points.row(static_cast<Eigen::Index>(order[s]));
        out.labels[s] = labels[order[s]];
    }
    return out;
}

namespace {

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open dataset file '" + path.string() + "'");
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        first = false;
        if (trim(line).empty()) {
            continue;
        }
        auto cells = split(line, ',');
        for (auto& cell : cells) {
            cell = std::string(trim(cell));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

BinaryDataset load_csv_dataset(const std::filesystem::path& path, const LabelColumn& label_column) {
    auto rows = read_rows(path);
    if (rows.empty()) {
        throw Error("dataset file '" + path.string() + "' is empty");
    }
    const std::size_t width = rows.front().size();
    if (width < 2) {
        throw Error("dataset file '" + path.string() + "' needs at least one feature and a label column");
    }

    std::optional<std::size_t> label_col;
    if (const auto* index = std::get_if<std::size_t>(&label_column)) {
        if (*index >= width) {
            throw Error("label column index " + std::to_string(*index) + " out of range (" +
                        std::to_string(width) + " columns)");
        }
        label_col = *index;
    }

    bool has_header = false;
    if (label_col) {
        for (std::size_t j = 0; j < width; ++j) {
            if (j != *label_col && !parse_real(rows.front()[j])) {
                has_header = true;
            }
        }
    } else {
        const auto& name = std::get<std::string>(label_column);
        const auto& head = rows.front();
        const auto it = std::find(head.begin(), head.end(), name);
        if (it == head.end()) {
            throw Error("label column '" + name + "' not found in header of '" + path.string() + "'");
        }
        has_header = true;
        label_col = static_cast<std::size_t>(it - head.begin());
    }

    const std::size_t first_data = has_header ? 1 : 0;
    if (rows.size() <= first_data) {
        throw Error("dataset file '" + path.string() + "' has no data rows");
    }
    const std::size_t n = rows.size() - first_data;

    BinaryDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width - 1));
    out.labels.reserve(n);
    std::vector<std::string> seen;
    std::vector<std::string> raw_labels;
    raw_labels.reserve(n);

    for (std::size_t r = first_data; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        const std::size_t line_no = r + 1;
        if (cells.size() != width) {
            throw Error("row " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                        " cells, found " + std::to_string(cells.size()));
        }
        Eigen::Index col = 0;
        for (std::size_t j = 0; j < width; ++j) {
            if (j == *label_col) {
                continue;
            }
            const auto value = parse_real(cells[j]);
            if (!value || !std::isfinite(*value)) {
                throw Error("row " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                            ": non-numeric cell '" + cells[j] + "'");
            }
            out.inputs(static_cast<Eigen::Index>(r - first_data), col++) = *value;
        }
        const auto& label = cells[*label_col];
        if (std::find(seen.begin(), seen.end(), label) == seen.end()) {
            seen.push_back(label);
        }
        raw_labels.push_back(label);
    }

    if (seen.size() != 2) {
        std::ostringstream msg;
        msg << "label column must hold exactly two distinct values, found " << seen.size() << ":";
        for (const auto& v : seen) {
            msg << " '" << v << "'";
        }
        throw Error(msg.str());
    }
    for (const auto& label : raw_labels) {
        out.labels.push_back(label == seen[0] ? ClassLabel::class1 : ClassLabel::class2);
    }
    return out;
}

BinaryDataset standardize(const BinaryDataset& dataset) {
    dataset.validate();
    if (dataset.size() < 2) {
        throw Error("standardize: need at least 2 samples");
    }
    BinaryDataset out = dataset;
    const double n = static_cast<double>(dataset.size());
    for (Eigen::Index j = 0; j < out.inputs.cols(); ++j) {
        auto col = out.inputs.col(j);
        const double mean = col.sum() / n;
        const double var = (col.array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
            continue;
        }
        col = (col.array() - mean) / sd;
    }
    return out;
}

void write_dataset_csv(const BinaryDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    for (Eigen::Index j = 0; j < dataset.inputs.cols(); ++j) {
        out << 'x' << j << ',';
    }
    out << "label\n";
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        for (Eigen::Index j = 0; j < dataset.inputs.cols(); ++j) {
            out << format_real(dataset.inputs(static_cast<Eigen::Index>(s), j)) << ',';
        }
        out << (dataset.labels[s] == ClassLabel::class1 ? 1 : 2) << '\n';
    }
}

}  // namespace racedyn
