#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "racedyn/experiment.hpp"

namespace py = pybind11;
using namespace racedyn;

namespace {

std::vector<int> labels_to_ints(const BinaryDataset& d) {
    std::vector<int> out(d.size());
    for (std::size_t s = 0; s < d.size(); ++s) {
        out[s] = d.labels[s] == ClassLabel::class1 ? 1 : 2;
    }
    return out;
}

BinaryDataset make_dataset(const Matrix& inputs, const std::vector<int>& labels) {
    BinaryDataset d;
    d.inputs = inputs;
    d.labels.reserve(labels.size());
    for (const int l : labels) {
        if (l != 1 && l != 2) {
            throw Error("labels must be 1 or 2");
        }
        d.labels.push_back(l == 1 ? ClassLabel::class1 : ClassLabel::class2);
    }
    d.validate();
    return d;
}

}  // namespace

PYBIND11_MODULE(_racedyn, m) {
    m.doc() = "Neuron-level training dynamics of two-layer ReLU classifiers";
    m.attr("__version__") = tool_version();

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", error.ptr());

    py::class_<BinaryDataset>(m, "Dataset")
        .def(py::init(&make_dataset), py::arg("inputs"), py::arg("labels"))
        .def_readonly("inputs", &BinaryDataset::inputs)
        .def_property_readonly("labels", &labels_to_ints)
        .def("__len__", &BinaryDataset::size)
        .def_property_readonly("input_dim", &BinaryDataset::input_dim);

    m.def(
        "xor_like_dataset",
        [](std::size_t per_cluster, double spread, std::uint64_t seed) {
            Rng rng(seed);
            const auto clusters = xor_like_clusters(per_cluster, spread);
            return generate_cluster_dataset(clusters, rng);
        },
        py::arg("per_cluster") = 50, py::arg("spread") = 0.15, py::arg("seed") = 0);
    m.def(
        "load_csv_dataset",
        [](const std::filesystem::path& path, const std::variant<std::size_t, std::string>& label_column) {
            const LabelColumn col = std::holds_alternative<std::string>(label_column)
                                        ? LabelColumn{std::get<std::string>(label_column)}
                                        : LabelColumn{std::get<std::size_t>(label_column)};
            return load_csv_dataset(path, col);
        },
        py::arg("path"), py::arg("label_column") = std::string("label"));
    m.def("standardize", &standardize, py::arg("dataset"));

    py::class_<NetworkParams>(m, "NetworkParams")
        .def(py::init(&NetworkParams::zeros), py::arg("width"), py::arg("input_dim"))
        .def_readwrite("w1", &NetworkParams::w1)
        .def_readwrite("b1", &NetworkParams::b1)
        .def_readwrite("w2", &NetworkParams::w2)
        .def_readwrite("b2", &NetworkParams::b2)
        .def_property_readonly("width", &NetworkParams::width)
        .def_property_readonly("input_dim", &NetworkParams::input_dim);

    m.def(
        "init_params",
        [](std::size_t width, std::size_t input_dim, double std_dev, std::uint64_t seed) {
            Rng rng(seed);
            return init_params(width, input_dim, std_dev, rng);
        },
        py::arg("width"), py::arg("input_dim"), py::arg("std"), py::arg("seed") = 0);
    m.def(
        "loss", [](const NetworkParams& p, const BinaryDataset& d) { return cross_entropy_loss(forward(p, d)); },
        py::arg("params"), py::arg("dataset"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("momentum", &TrainConfig::momentum)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("steps", &TrainConfig::steps)
        .def_readwrite("init_std", &TrainConfig::init_std)
        .def_readwrite("width", &TrainConfig::width)
        .def_readwrite("snapshot_steps", &TrainConfig::snapshot_steps)
        .def_readwrite("seed", &TrainConfig::seed)
        .def("validate", &TrainConfig::validate)
        .def_static("every", &TrainConfig::every, py::arg("every"), py::arg("steps"));

    py::class_<NeuronDiagnostics>(m, "NeuronDiagnostics")
        .def_readonly("neuron", &NeuronDiagnostics::neuron)
        .def_readonly("phi", &NeuronDiagnostics::phi)
        .def_readonly("norm_w1", &NeuronDiagnostics::norm_w1)
        .def_readonly("norm_w2", &NeuronDiagnostics::norm_w2)
        .def_readonly("a", &NeuronDiagnostics::a)
        .def_readonly("bias", &NeuronDiagnostics::bias)
        .def_readonly("delta", &NeuronDiagnostics::delta)
        .def_readonly("cos_delta", &NeuronDiagnostics::cos_delta)
        .def_readonly("c", &NeuronDiagnostics::c)
        .def_readonly("gamma_norm", &NeuronDiagnostics::gamma_norm)
        .def_readonly("n_eff", &NeuronDiagnostics::n_eff)
        .def_property_readonly("branch", [](const NeuronDiagnostics& d) { return d.branch == Branch::class1 ? 1 : 2; })
        .def_property_readonly("branch_signed_cos_delta", &NeuronDiagnostics::branch_signed_cos_delta);

    py::class_<Snapshot>(m, "Snapshot")
        .def_readonly("step", &Snapshot::step)
        .def_readonly("loss", &Snapshot::loss)
        .def_readonly("params", &Snapshot::params)
        .def_readonly("neurons", &Snapshot::neurons)
        .def_readonly("max_delta_y_angle_error", &Snapshot::max_delta_y_angle_error);

    py::class_<TrainingTrace>(m, "TrainingTrace")
        .def_readonly("config", &TrainingTrace::config)
        .def_readonly("snapshots", &TrainingTrace::snapshots)
        .def("at_step", &TrainingTrace::at_step, py::arg("step"), py::return_value_policy::reference_internal)
        .def("final", &TrainingTrace::final, py::return_value_policy::reference_internal)
        .def("steps", &TrainingTrace::steps)
        .def("losses", [](const TrainingTrace& t) {
            std::vector<double> out;
            for (const auto& s : t.snapshots) {
                out.push_back(s.loss);
            }
            return out;
        });

    m.def(
        "train",
        [](const TrainConfig& c, const BinaryDataset& d, const std::optional<NetworkParams>& initial) {
            py::gil_scoped_release release;
            return train(c, d, initial);
        },
        py::arg("config"), py::arg("dataset"), py::arg("initial") = py::none());
    m.def("diagnostics", py::overload_cast<const NetworkParams&, const BinaryDataset&>(&all_diagnostics),
          py::arg("params"), py::arg("dataset"));
    m.def(
        "similarity_matrix",
        [](const NetworkParams& p) {
            const auto vecs = total_parameter_vectors(p);
            return cosine_similarity_matrix(vecs).values;
        },
        py::arg("params"));

    py::class_<MergeReport>(m, "MergeReport")
        .def_readonly("groups", &MergeReport::groups)
        .def_readonly("original_width", &MergeReport::original_width)
        .def_readonly("merged_width", &MergeReport::merged_width)
        .def_readonly("loss_before", &MergeReport::loss_before)
        .def_readonly("loss_after", &MergeReport::loss_after)
        .def_readonly("relative_loss_change", &MergeReport::relative_loss_change);
    m.def("merge_aligned_neurons", &merge_aligned_neurons, py::arg("params"), py::arg("dataset"),
          py::arg("threshold") = 0.999);

    py::class_<PruneReport>(m, "PruneReport")
        .def_readonly("pruned", &PruneReport::pruned)
        .def_readonly("kept", &PruneReport::kept)
        .def_readonly("keep_fraction", &PruneReport::keep_fraction)
        .def_readonly("loss_before", &PruneReport::loss_before)
        .def_readonly("loss_after", &PruneReport::loss_after);
    m.def("prune_by_norm", &prune_by_norm, py::arg("params"), py::arg("dataset"), py::arg("keep_fraction"));

    py::class_<AlignmentScore>(m, "AlignmentScore")
        .def_readonly("score", &AlignmentScore::score)
        .def_readonly("groups", &AlignmentScore::groups)
        .def_readonly("neurons", &AlignmentScore::neurons)
        .def_readonly("pairs", &AlignmentScore::pairs);
    m.def("alignment_score", &alignment_score, py::arg("params"), py::arg("dataset"));

    py::class_<Plateau>(m, "Plateau")
        .def_readonly("count", &Plateau::count)
        .def_readonly("start_step", &Plateau::start_step)
        .def_readonly("end_step", &Plateau::end_step)
        .def("empty", &Plateau::empty);
    m.def("detect_plateau", &detect_plateau, py::arg("trace"));
    m.def("count_drop_events", &count_drop_events, py::arg("trace"), py::arg("min_decrease") = 0.3,
          py::arg("window_fraction") = 0.05);

    py::class_<GrowthFit>(m, "GrowthFit")
        .def_readonly("neuron", &GrowthFit::neuron)
        .def_readonly("points", &GrowthFit::points)
        .def_readonly("fitted_slope", &GrowthFit::fitted_slope)
        .def_readonly("r_squared", &GrowthFit::r_squared)
        .def_readonly("cos_delta_start", &GrowthFit::cos_delta_start)
        .def_readonly("predicted_slope", &GrowthFit::predicted_slope)
        .def_readonly("predicted_slope_unequal_norms", &GrowthFit::predicted_slope_unequal_norms);
    m.def(
        "fit_exponential_growth",
        [](const TrainingTrace& t, std::size_t neuron, std::size_t start, std::size_t end) {
            return fit_exponential_growth(t, neuron, {start, end});
        },
        py::arg("trace"), py::arg("neuron"), py::arg("start_step"), py::arg("end_step"));
    m.def(
        "early_prediction_correlation",
        [](const TrainingTrace& t, std::size_t t_early, bool branch_signed) {
            return early_prediction_correlation(t, t_early,
                                                branch_signed ? CosineSigning::branch_signed : CosineSigning::unsigned_cos);
        },
        py::arg("trace"), py::arg("t_early"), py::arg("branch_signed") = true);

    py::class_<RaceSpec>(m, "RaceSpec")
        .def(py::init<>())
        .def_readwrite("learning_rate", &RaceSpec::learning_rate)
        .def_readwrite("gamma_norm", &RaceSpec::gamma_norm)
        .def_readwrite("cos_delta", &RaceSpec::cos_delta)
        .def_readwrite("initial_a", &RaceSpec::initial_a)
        .def_readwrite("duration", &RaceSpec::duration)
        .def_readwrite("max_rate_step", &RaceSpec::max_rate_step)
        .def_property(
            "decay_times", [](const RaceSpec& r) { return r.decay.times; },
            [](RaceSpec& r, std::vector<double> v) { r.decay.times = std::move(v); })
        .def_property(
            "decay_factors", [](const RaceSpec& r) { return r.decay.factors; },
            [](RaceSpec& r, std::vector<double> v) { r.decay.factors = std::move(v); })
        .def("validate", &RaceSpec::validate);
    py::class_<RaceTrajectory>(m, "RaceTrajectory")
        .def_readonly("times", &RaceTrajectory::times)
        .def_readonly("a", &RaceTrajectory::a);
    m.def("integrate_race", &integrate_race, py::arg("spec"));

    py::class_<ArtifactEntry>(m, "ArtifactEntry")
        .def_readonly("path", &ArtifactEntry::path)
        .def_readonly("sha256", &ArtifactEntry::sha256)
        .def_readonly("bytes", &ArtifactEntry::bytes);
    py::class_<RunManifest>(m, "RunManifest")
        .def_readonly("name", &RunManifest::name)
        .def_readonly("directory", &RunManifest::directory)
        .def_readonly("artifacts", &RunManifest::artifacts)
        .def_readonly("tool_version", &RunManifest::tool_version)
        .def_readonly("duration_seconds", &RunManifest::duration_seconds)
        .def_readonly("complete", &RunManifest::complete)
        .def_readonly("error", &RunManifest::error);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_static("parse", &ExperimentConfig::parse, py::arg("json_text"),
                    py::arg("base_dir") = std::filesystem::path{})
        .def_static("load", &ExperimentConfig::load, py::arg("path"))
        .def_readwrite("name", &ExperimentConfig::name)
        .def_property("seed", [](const ExperimentConfig& c) { return c.seed; }, &ExperimentConfig::set_seed)
        .def_readwrite("output_dir", &ExperimentConfig::output_dir)
        .def_readwrite("train", &ExperimentConfig::train)
        .def("validate", &ExperimentConfig::validate)
        .def("to_json", &ExperimentConfig::to_json);
    m.def("build_dataset", &build_dataset, py::arg("config"));

    m.def(
        "run_experiment",
        [](const ExperimentConfig& c, const std::string& stage) {
            Stage s = Stage::analyze;
            if (stage == "data") {
                s = Stage::data;
            } else if (stage == "train") {
                s = Stage::train;
            } else if (stage != "analyze") {
                throw ValidationError("stage must be one of data, train, analyze");
            }
            py::gil_scoped_release release;
            return run_experiment(c, s);
        },
        py::arg("config"), py::arg("stage") = "analyze");

    py::class_<SweepResult>(m, "SweepResult")
        .def_readonly("stds", &SweepResult::stds)
        .def_readonly("runs", &SweepResult::runs)
        .def_readonly("alignment", &SweepResult::alignment)
        .def_readonly("final_loss", &SweepResult::final_loss)
        .def_readonly("summary_csv", &SweepResult::summary_csv);
    m.def(
        "sweep_init_scale",
        [](const ExperimentConfig& c, const std::vector<double>& stds, std::size_t jobs) {
            py::gil_scoped_release release;
            return sweep_init_scale(c, stds, jobs);
        },
        py::arg("config"), py::arg("stds"), py::arg("jobs") = 1);
}
