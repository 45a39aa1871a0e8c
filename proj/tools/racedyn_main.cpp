#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "racedyn/experiment.hpp"

namespace fs = std::filesystem;
using namespace racedyn;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "output directory, overrides output_dir");
    cmd->add_option("--seed", opts.seed, "seed, overrides the config seed");
}

ExperimentConfig load(const CommonOptions& opts) {
    ExperimentConfig c = ExperimentConfig::load(opts.config);
    if (!opts.out.empty()) {
        c.output_dir = opts.out;
    }
    if (opts.seed) {
        c.set_seed(*opts.seed);
    }
    c.validate();
    return c;
}

void report(const RunManifest& m) {
    std::cout << "wrote " << m.artifacts.size() << " artifacts to " << m.directory.string() << " in "
              << m.duration_seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-dynamics experiments for two-layer ReLU networks"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);

    CommonOptions opts;
    auto* gen = app.add_subcommand("gen-data", "generate or load the dataset and write dataset.csv");
    auto* train_cmd = app.add_subcommand("train", "train and write loss and per-neuron traces");
    auto* analyze_cmd = app.add_subcommand("analyze", "train, then run every analysis");
    auto* sweep = app.add_subcommand("sweep-init", "repeat the full run over initialisation scales");
    auto* race = app.add_subcommand("race-sim", "integrate the racing model for analysis.races");
    auto* export_sim = app.add_subcommand("export-sim", "train, then write similarity matrices at given steps");
    for (auto* cmd : {gen, train_cmd, analyze_cmd, sweep, race, export_sim}) {
        add_common(cmd, opts);
    }

    std::vector<double> stds;
    std::size_t jobs = 1;
    sweep->add_option("--stds", stds, "initialisation std values")->delimiter(',')->required();
    sweep->add_option("--jobs", jobs, "runs executed concurrently")->check(CLI::PositiveNumber);

    std::vector<std::size_t> steps;
    export_sim->add_option("--steps", steps, "snapshot steps to export")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (gen->parsed()) {
            report(run_experiment(load(opts), Stage::data));
        } else if (train_cmd->parsed()) {
            report(run_experiment(load(opts), Stage::train));
        } else if (analyze_cmd->parsed()) {
            report(run_experiment(load(opts), Stage::analyze));
        } else if (sweep->parsed()) {
            const SweepResult r = sweep_init_scale(load(opts), stds, jobs);
            for (std::size_t k = 0; k < r.stds.size(); ++k) {
                std::cout << "std " << r.stds[k] << ": alignment " << r.alignment[k].score << ", final loss "
                          << r.final_loss[k] << '\n';
            }
            std::cout << "summary: " << r.summary_csv.string() << '\n';
        } else if (race->parsed()) {
            const ExperimentConfig c = load(opts);
            if (c.analysis.races.empty()) {
                throw ValidationError("analysis.races: no race specs in config");
            }
            std::vector<RaceTrajectory> races;
            for (const auto& spec : c.analysis.races) {
                races.push_back(integrate_race(spec));
            }
            const fs::path path = c.output_dir / "race.csv";
            write_race_csv(races, path);
            std::cout << "wrote " << path.string() << '\n';
        } else if (export_sim->parsed()) {
            const ExperimentConfig c = load(opts);
            for (const std::size_t s : steps) {
                const auto& sched = c.train.snapshot_steps;
                if (s != 0 && !std::binary_search(sched.begin(), sched.end(), s)) {
                    throw ValidationError("--steps: " + std::to_string(s) +
                                          " is not a snapshot step of train.snapshot_steps");
                }
            }
            const TrainingTrace trace = train(c.train, build_dataset(c));
            const auto files = export_similarity_snapshots(trace, steps, c.output_dir);
            std::cout << "wrote " << files.size() << " similarity matrices to " << c.output_dir.string() << '\n';
        }
    } catch (const ValidationError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
