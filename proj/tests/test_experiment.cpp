#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "racedyn/experiment.hpp"
#include "racedyn/text.hpp"

namespace fs = std::filesystem;
using namespace racedyn;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("racedyn_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string tiny_config(const fs::path& out) {
    return R"({
  "name": "tiny",
  "seed": 3,
  "output_dir": ")" + out.generic_string() + R"(",
  "dataset": {"kind": "xor_like", "per_cluster": 6, "spread": 0.1},
  "train": {"width": 6, "init_std": 0.01, "learning_rate": 0.05, "momentum": 0.5, "steps": 60,
            "snapshot_every": 10},
  "analysis": {"merge_threshold": 0.999, "keep_fraction": 0.5,
               "races": [{"cos_delta": [0.9, 0.5], "initial_a": [1e-3, 1e-3], "duration": 50}]}
})";
}

std::string validation_message(const std::string& json) {
    try {
        ExperimentConfig::parse(json).validate();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        rows.push_back(split(line, ','));
    }
    return rows;
}

TrainingTrace tiny_trace() {
    ExperimentConfig c = ExperimentConfig::parse(tiny_config("unused"));
    return train(c.train, build_dataset(c));
}

}  // namespace

TEST(ExperimentConfig, ParsesAndRoundTrips) {
    const ExperimentConfig c = ExperimentConfig::parse(tiny_config("out/x"));
    EXPECT_EQ(c.name, "tiny");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.train.seed, 3u);
    EXPECT_EQ(c.train.width, 6u);
    EXPECT_EQ(c.train.snapshot_steps, (std::vector<std::size_t>{0, 10, 20, 30, 40, 50, 60}));
    EXPECT_DOUBLE_EQ(c.analysis.keep_fraction, 0.5);
    ASSERT_EQ(c.analysis.races.size(), 1u);
    EXPECT_EQ(c.analysis.races[0].cos_delta.size(), 2u);
    const ExperimentConfig back = ExperimentConfig::parse(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(ExperimentConfig, NegativeLearningRateNamesField) {
    std::string json = tiny_config("o");
    const std::string key = "\"learning_rate\": 0.05";
    json.replace(json.find(key), key.size(), "\"learning_rate\": -1");
    const std::string msg = validation_message(json);
    EXPECT_NE(msg.find("train.learning_rate"), std::string::npos) << msg;
}

TEST(ExperimentConfig, UnknownKeysRejectedWithPath) {
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "xor_like", "sprad": 1}, "train": {}})").find("dataset.sprad"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "xor_like"}, "train": {}, "extra": 1})").find("extra"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "xor_like"}, "train": {"setps": 1}})").find("train.setps"),
              std::string::npos);
}

TEST(ExperimentConfig, StructuralErrors) {
    EXPECT_NE(validation_message("{").find("JSON"), std::string::npos);
    EXPECT_NE(validation_message(R"({"train": {}})").find("dataset"), std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "png"}, "train": {}})").find("dataset.kind"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "csv", "path": "/no/such.csv"}, "train": {}})")
                  .find("dataset.path"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "xor_like"}, "train": {"width": -2}})").find("train.width"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "xor_like"}, "train": {"steps": 100},
                                    "analysis": {"t_early": 33}})")
                  .find("analysis.t_early"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "xor_like"}, "train": {},
                                    "analysis": {"races": [{"cos_delta": [2], "initial_a": [1]}]}})")
                  .find("analysis.races[0].cos_delta[0]"),
              std::string::npos);
    EXPECT_NE(validation_message(R"({"dataset": {"kind": "clusters", "clusters": [
                                    {"direction": [1, 0], "norm": 1, "count": 2, "label": 1}]}, "train": {}})")
                  .find("both labels"),
              std::string::npos);
}

TEST(ExperimentConfig, CsvPathResolvesAgainstConfigDirectory) {
    TempDir dir;
    std::ofstream(dir.path() / "d.csv") << "1,2,a\n-1,-2,b\n";
    std::ofstream(dir.path() / "c.json")
        << R"({"dataset": {"kind": "csv", "path": "d.csv", "label_column": 2}, "train": {"steps": 2}})";
    const ExperimentConfig c = ExperimentConfig::load(dir.path() / "c.json");
    c.validate();
    EXPECT_EQ(build_dataset(c).size(), 2u);
}

TEST(RunExperiment, WritesArtifactsWithMatchingChecksums) {
    TempDir dir;
    const ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "run"));
    const RunManifest m = run_experiment(c);
    EXPECT_TRUE(m.complete);
    EXPECT_EQ(m.tool_version, tool_version());
    for (const char* name : {"dataset.csv", "loss.csv", "neurons.csv", "merge.json", "prune.json", "growth.json",
                             "prediction.json", "sensitivity.json", "summary.json", "race.csv",
                             "similarity/similarity_step_0.csv", "similarity/similarity_step_60.csv"}) {
        const ArtifactEntry* a = m.find(name);
        ASSERT_NE(a, nullptr) << name;
        const fs::path p = dir.path() / "run" / a->path;
        ASSERT_TRUE(fs::exists(p)) << name;
        EXPECT_EQ(sha256_file(p), a->sha256) << name;
        EXPECT_EQ(fs::file_size(p), a->bytes);
    }
    EXPECT_TRUE(fs::exists(dir.path() / "run" / "manifest.json"));

    const auto loss = read_csv_rows(dir.path() / "run" / "loss.csv");
    ASSERT_GE(loss.size(), 2u);
    EXPECT_EQ(loss[0][0].rfind("#schema=", 0), 0u);
    EXPECT_EQ(loss.size(), 2u + 7u);
}

TEST(RunExperiment, SameSeedSameChecksums) {
    TempDir dir;
    ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "a"));
    const RunManifest a = run_experiment(c);
    c.output_dir = dir.path() / "b";
    const RunManifest b = run_experiment(c);
    ASSERT_EQ(a.artifacts.size(), b.artifacts.size());
    for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
        EXPECT_EQ(a.artifacts[i].path, b.artifacts[i].path);
        EXPECT_EQ(a.artifacts[i].sha256, b.artifacts[i].sha256) << a.artifacts[i].path;
    }
    c.set_seed(4);
    c.output_dir = dir.path() / "c";
    const RunManifest other = run_experiment(c);
    EXPECT_NE(other.find("loss.csv")->sha256, a.find("loss.csv")->sha256);
}

TEST(RunExperiment, StagesLimitArtifacts) {
    TempDir dir;
    ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "d"));
    const RunManifest data = run_experiment(c, Stage::data);
    EXPECT_EQ(data.artifacts.size(), 1u);
    c.output_dir = dir.path() / "t";
    const RunManifest t = run_experiment(c, Stage::train);
    EXPECT_NE(t.find("neurons.csv"), nullptr);
    EXPECT_EQ(t.find("merge.json"), nullptr);
}

TEST(RunExperiment, RuntimeFailureLeavesIncompleteManifest) {
    TempDir dir;
    std::ofstream(dir.path() / "three.csv") << "1,a\n2,b\n3,c\n";
    ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "run"));
    c.dataset = DatasetSection{};
    c.dataset.kind = DatasetKind::csv;
    c.dataset.csv_path = dir.path() / "three.csv";
    c.dataset.label_column = std::size_t{1};
    EXPECT_THROW(run_experiment(c), Error);
    std::ifstream in(dir.path() / "run" / "manifest.json");
    std::stringstream text;
    text << in.rdbuf();
    EXPECT_NE(text.str().find("\"complete\": false"), std::string::npos);
    EXPECT_NE(text.str().find("exactly two"), std::string::npos);
}

TEST(RunExperiment, ValidationFailureWritesNothing) {
    TempDir dir;
    ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "run"));
    c.train.learning_rate = -1.0;
    EXPECT_THROW(run_experiment(c), ValidationError);
    EXPECT_FALSE(fs::exists(dir.path() / "run"));
}

TEST(SweepInitScale, EmptyListIsValidationError) {
    const ExperimentConfig c = ExperimentConfig::parse(tiny_config("o"));
    EXPECT_THROW(sweep_init_scale(c, std::vector<double>{}), ValidationError);
    EXPECT_THROW(sweep_init_scale(c, std::vector<double>{1e-3, -1.0}), ValidationError);
}

TEST(SweepInitScale, SingletonMatchesPlainRun) {
    TempDir dir;
    ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "sweep"));
    const std::vector<double> stds = {0.02};
    const SweepResult r = sweep_init_scale(c, stds);
    ASSERT_EQ(r.runs.size(), 1u);
    ExperimentConfig plain = c;
    plain.train.init_std = 0.02;
    plain.output_dir = dir.path() / "plain";
    const RunManifest m = run_experiment(plain);
    EXPECT_EQ(r.runs[0].find("neurons.csv")->sha256, m.find("neurons.csv")->sha256);
    const auto rows = read_csv_rows(r.summary_csv);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][3], "alignment_score");
}

TEST(SweepInitScale, ParallelEqualsSequential) {
    TempDir dir;
    ExperimentConfig c = ExperimentConfig::parse(tiny_config(dir.path() / "seq"));
    const std::vector<double> stds = {0.01, 0.1};
    const SweepResult a = sweep_init_scale(c, stds, 1);
    c.output_dir = dir.path() / "par";
    const SweepResult b = sweep_init_scale(c, stds, 2);
    for (std::size_t k = 0; k < stds.size(); ++k) {
        EXPECT_EQ(a.runs[k].find("neurons.csv")->sha256, b.runs[k].find("neurons.csv")->sha256);
        EXPECT_EQ(a.alignment[k].score, b.alignment[k].score);
    }
}

TEST(ExportSimilarity, StepZeroMatchesDirectComputation) {
    TempDir dir;
    const TrainingTrace t = tiny_trace();
    const std::vector<std::size_t> steps = {0};
    const auto files = export_similarity_snapshots(t, steps, dir.path());
    ASSERT_EQ(files.size(), 1u);
    const auto rows = read_csv_rows(files[0]);
    const auto vecs = total_parameter_vectors(t.at_step(0).params);
    ASSERT_EQ(rows.size(), 2u + vecs.size());
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        for (std::size_t j = 0; j < vecs.size(); ++j) {
            const double direct = vecs[i].dot(vecs[j]) / (vecs[i].norm() * vecs[j].norm());
            EXPECT_NEAR(*parse_real(rows[2 + i][1 + j]), direct, 1e-14);
        }
    }
}

TEST(ExportSimilarity, EmptyDuplicateAndUnknownSteps) {
    TempDir dir;
    const TrainingTrace t = tiny_trace();
    EXPECT_TRUE(export_similarity_snapshots(t, std::vector<std::size_t>{}, dir.path()).empty());
    EXPECT_TRUE(fs::is_empty(dir.path()));
    EXPECT_EQ(export_similarity_snapshots(t, std::vector<std::size_t>{10, 0, 10}, dir.path()).size(), 2u);
    try {
        export_similarity_snapshots(t, std::vector<std::size_t>{15}, dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("0, 10, 20, 30, 40, 50, 60"), std::string::npos) << e.what();
    }
}

TEST(BundledConfigs, AllParseAndValidate) {
    std::size_t seen = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(RACEDYN_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() == ".json") {
            EXPECT_NO_THROW(ExperimentConfig::load(entry.path()).validate()) << entry.path();
            ++seen;
        }
    }
    EXPECT_GE(seen, 1u);
}

TEST(BundledConfigs, XorSmallInitShowsMultipleDrops) {
    TempDir dir;
    ExperimentConfig c = ExperimentConfig::load(fs::path(RACEDYN_SOURCE_DIR) / "configs" / "xor_smallinit.json");
    const TrainingTrace t = train(c.train, build_dataset(c));
    EXPECT_GE(count_drop_events(t), 2u);
}
