#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "racedyn/analysis.hpp"
#include "racedyn/datasets.hpp"
#include "racedyn/training.hpp"

namespace racedyn {

std::string tool_version();

/// Configuration rejected before any work started. Messages start with the
/// dotted path of the offending field.
class ValidationError : public Error {
public:
    using Error::Error;
};

enum class DatasetKind { xor_like, clusters, csv };

struct DatasetSection {
    DatasetKind kind = DatasetKind::xor_like;
    std::size_t per_cluster = 50;   // xor_like
    double spread = 0.15;           // xor_like
    std::vector<GaussianCluster> clusters;   // clusters
    std::filesystem::path csv_path;          // csv; relative paths resolve against the config file
    LabelColumn label_column = std::string("label");
    bool standardize = false;
};

struct AnalysisSection {
    double merge_threshold = 0.999;
    double keep_fraction = 0.1;
    std::optional<std::size_t> t_early;            // default: plateau end
    std::vector<std::size_t> similarity_steps;     // default: 0, plateau end, final
    std::vector<RaceSpec> races;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;   // drives both data generation and training
    std::filesystem::path output_dir = "out";
    DatasetSection dataset;
    TrainConfig train;        // train.seed mirrors `seed`
    AnalysisSection analysis;

    /// Throws ValidationError naming the field.
    void validate() const;

    /// Strict parse: unknown keys, wrong types and missing sections are
    /// ValidationErrors. `base_dir` anchors relative dataset paths.
    static ExperimentConfig parse(const std::string& json_text, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);

    /// Fully expanded JSON form; parse(to_json()) round-trips.
    std::string to_json() const;

    void set_seed(std::uint64_t value) {
        seed = value;
        train.seed = value;
    }
};

BinaryDataset build_dataset(const ExperimentConfig& config);

struct ArtifactEntry {
    std::string path;     // relative to the run directory, '/' separated
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string name;
    std::filesystem::path directory;
    std::string config_json;
    std::vector<ArtifactEntry> artifacts;
    std::string tool_version;
    double duration_seconds = 0.0;
    bool complete = false;
    std::string error;   // set when complete is false

    const ArtifactEntry* find(const std::string& relative_path) const;
};

enum class Stage {
    data,       // dataset only
    train,      // dataset, training traces
    analyze,    // everything
};

/// Runs the pipeline into config.output_dir and writes manifest.json there.
/// Validation problems throw ValidationError before anything is written;
/// later failures leave a manifest with complete = false and rethrow.
RunManifest run_experiment(const ExperimentConfig& config, Stage stage = Stage::analyze);
RunManifest run_experiment(const std::filesystem::path& config_path);

std::string sha256_file(const std::filesystem::path& path);

struct SweepResult {
    std::vector<double> stds;
    std::vector<RunManifest> runs;
    std::vector<AlignmentScore> alignment;
    std::vector<double> final_loss;
    std::filesystem::path summary_csv;
};

/// One full run per std under <output_dir>/std_<k>, then summary.csv in
/// output_dir. Runs are independent and may execute on `jobs` threads.
SweepResult sweep_init_scale(const ExperimentConfig& base, std::span<const double> stds, std::size_t jobs = 1);

/// One matrix per distinct step: <dir>/similarity_step_<step>.csv, row and
/// column = neuron index. Unknown steps throw Error listing the available ones.
std::vector<std::filesystem::path> export_similarity_snapshots(const TrainingTrace& trace,
                                                               std::span<const std::size_t> steps,
                                                               const std::filesystem::path& dir);

void write_loss_csv(const TrainingTrace& trace, const std::filesystem::path& path);
void write_neurons_csv(const TrainingTrace& trace, const std::filesystem::path& path);
void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path);
void write_race_csv(std::span<const RaceTrajectory> races, const std::filesystem::path& path);

}  // namespace racedyn
