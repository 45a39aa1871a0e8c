#include "racedyn/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "racedyn/text.hpp"

#ifndef RACEDYN_VERSION
#define RACEDYN_VERSION "0.0.0"
#endif

namespace racedyn {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string tool_version() { return RACEDYN_VERSION; }

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
    throw ValidationError(field + ": " + what);
}

/// Strict view of one JSON object: every key must be consumed.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            invalid(path_.empty() ? "config" : path_, "must be a JSON object");
        }
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* get(const std::string& key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const json& require(const std::string& key) {
        const json* v = get(key);
        if (v == nullptr) {
            invalid(at(key), "is required");
        }
        return *v;
    }

    void real(const std::string& key, double& out) {
        if (const json* v = get(key)) {
            out = as_real(*v, at(key));
        }
    }

    void count(const std::string& key, std::size_t& out) {
        if (const json* v = get(key)) {
            out = as_count(*v, at(key));
        }
    }

    void flag(const std::string& key, bool& out) {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) {
                invalid(at(key), "must be true or false");
            }
            out = v->get<bool>();
        }
    }

    void text(const std::string& key, std::string& out) {
        if (const json* v = get(key)) {
            if (!v->is_string()) {
                invalid(at(key), "must be a string");
            }
            out = v->get<std::string>();
        }
    }

    void reals(const std::string& key, std::vector<double>& out) {
        if (const json* v = get(key)) {
            out = as_reals(*v, at(key));
        }
    }

    void counts(const std::string& key, std::vector<std::size_t>& out) {
        if (const json* v = get(key)) {
            if (!v->is_array()) {
                invalid(at(key), "must be an array of non-negative integers");
            }
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                out.push_back(as_count((*v)[i], at(key) + "[" + std::to_string(i) + "]"));
            }
        }
    }

    void finish() const {
        for (const auto& item : obj_.items()) {
            if (seen_.count(item.key()) == 0) {
                invalid(at(item.key()), "unknown key");
            }
        }
    }

    static double as_real(const json& v, const std::string& field) {
        if (!v.is_number()) {
            invalid(field, "must be a number");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            invalid(field, "must be finite");
        }
        return x;
    }

    static std::uint64_t as_u64(const json& v, const std::string& field) {
        if (v.is_number_unsigned()) {
            return v.get<std::uint64_t>();
        }
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        }
        invalid(field, "must be a non-negative integer");
    }

    static std::size_t as_count(const json& v, const std::string& field) {
        return static_cast<std::size_t>(as_u64(v, field));
    }

    static std::vector<double> as_reals(const json& v, const std::string& field) {
        if (!v.is_array()) {
            invalid(field, "must be an array of numbers");
        }
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(as_real(v[i], field + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

const char* kind_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::xor_like: return "xor_like";
        case DatasetKind::clusters: return "clusters";
        case DatasetKind::csv: return "csv";
    }
    return "?";
}

int label_number(ClassLabel c) { return c == ClassLabel::class1 ? 1 : 2; }

DatasetSection parse_dataset(const json& j, const fs::path& base_dir) {
    Fields f(j, "dataset");
    DatasetSection d;
    const json& kind = f.require("kind");
    const std::string kind_text = kind.is_string() ? kind.get<std::string>() : "";
    if (kind_text == "xor_like") {
        d.kind = DatasetKind::xor_like;
        f.count("per_cluster", d.per_cluster);
        f.real("spread", d.spread);
    } else if (kind_text == "clusters") {
        d.kind = DatasetKind::clusters;
        const json& list = f.require("clusters");
        if (!list.is_array()) {
            invalid("dataset.clusters", "must be an array");
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string path = "dataset.clusters[" + std::to_string(i) + "]";
            Fields c(list[i], path);
            GaussianCluster g;
            const std::vector<double> dir = Fields::as_reals(c.require("direction"), c.at("direction"));
            g.direction = Eigen::Map<const Vector>(dir.data(), static_cast<Eigen::Index>(dir.size()));
            g.norm = Fields::as_real(c.require("norm"), c.at("norm"));
            c.real("spread", g.spread);
            g.count = Fields::as_count(c.require("count"), c.at("count"));
            const std::uint64_t label = Fields::as_u64(c.require("label"), c.at("label"));
            if (label != 1 && label != 2) {
                invalid(c.at("label"), "must be 1 or 2");
            }
            g.label = label == 1 ? ClassLabel::class1 : ClassLabel::class2;
            c.finish();
            d.clusters.push_back(std::move(g));
        }
    } else if (kind_text == "csv") {
        d.kind = DatasetKind::csv;
        const json& path = f.require("path");
        if (!path.is_string()) {
            invalid("dataset.path", "must be a string");
        }
        d.csv_path = fs::path(path.get<std::string>());
        if (d.csv_path.is_relative() && !base_dir.empty()) {
            d.csv_path = base_dir / d.csv_path;
        }
        if (const json* col = f.get("label_column")) {
            if (col->is_string()) {
                d.label_column = col->get<std::string>();
            } else {
                d.label_column = Fields::as_count(*col, "dataset.label_column");
            }
        }
    } else {
        invalid("dataset.kind", "must be one of xor_like, clusters, csv");
    }
    f.flag("standardize", d.standardize);
    f.finish();
    return d;
}

TrainConfig parse_train(const json& j) {
    Fields f(j, "train");
    TrainConfig t;
    f.count("width", t.width);
    f.real("init_std", t.init_std);
    f.real("learning_rate", t.learning_rate);
    f.real("momentum", t.momentum);
    f.count("batch_size", t.batch_size);
    f.count("steps", t.steps);
    const json* every = f.get("snapshot_every");
    const json* list = f.get("snapshot_steps");
    if (every != nullptr && list != nullptr) {
        invalid("train.snapshot_every", "conflicts with train.snapshot_steps; give one of them");
    }
    if (list != nullptr) {
        f.counts("snapshot_steps", t.snapshot_steps);
    } else {
        const std::size_t interval = every != nullptr ? Fields::as_count(*every, "train.snapshot_every") : 50;
        if (interval == 0) {
            invalid("train.snapshot_every", "must be >= 1");
        }
        t.snapshot_steps = TrainConfig::every(interval, t.steps);
    }
    f.finish();
    return t;
}

RaceSpec parse_race(const json& j, const std::string& path) {
    Fields f(j, path);
    RaceSpec r;
    f.real("learning_rate", r.learning_rate);
    f.real("gamma_norm", r.gamma_norm);
    f.reals("cos_delta", r.cos_delta);
    f.reals("initial_a", r.initial_a);
    f.real("duration", r.duration);
    f.real("max_rate_step", r.max_rate_step);
    if (const json* decay = f.get("decay")) {
        Fields d(*decay, path + ".decay");
        d.reals("times", r.decay.times);
        d.reals("factors", r.decay.factors);
        d.finish();
    }
    f.finish();
    return r;
}

AnalysisSection parse_analysis(const json& j) {
    Fields f(j, "analysis");
    AnalysisSection a;
    f.real("merge_threshold", a.merge_threshold);
    f.real("keep_fraction", a.keep_fraction);
    if (const json* t = f.get("t_early"); t != nullptr && !t->is_null()) {
        a.t_early = Fields::as_count(*t, "analysis.t_early");
    }
    f.counts("similarity_steps", a.similarity_steps);
    if (const json* races = f.get("races")) {
        if (!races->is_array()) {
            invalid("analysis.races", "must be an array");
        }
        for (std::size_t i = 0; i < races->size(); ++i) {
            a.races.push_back(parse_race((*races)[i], "analysis.races[" + std::to_string(i) + "]"));
        }
    }
    f.finish();
    return a;
}

json race_json(const RaceSpec& r) {
    return {{"learning_rate", r.learning_rate},
            {"gamma_norm", r.gamma_norm},
            {"cos_delta", r.cos_delta},
            {"initial_a", r.initial_a},
            {"decay", {{"times", r.decay.times}, {"factors", r.decay.factors}}},
            {"duration", r.duration},
            {"max_rate_step", r.max_rate_step}};
}

json config_json(const ExperimentConfig& c) {
    json dataset = {{"kind", kind_name(c.dataset.kind)}, {"standardize", c.dataset.standardize}};
    switch (c.dataset.kind) {
        case DatasetKind::xor_like:
            dataset["per_cluster"] = c.dataset.per_cluster;
            dataset["spread"] = c.dataset.spread;
            break;
        case DatasetKind::clusters: {
            json list = json::array();
            for (const auto& g : c.dataset.clusters) {
                list.push_back({{"direction", std::vector<double>(g.direction.data(), g.direction.data() + g.direction.size())},
                                {"norm", g.norm},
                                {"spread", g.spread},
                                {"count", g.count},
                                {"label", label_number(g.label)}});
            }
            dataset["clusters"] = list;
            break;
        }
        case DatasetKind::csv:
            dataset["path"] = c.dataset.csv_path.generic_string();
            if (const auto* name = std::get_if<std::string>(&c.dataset.label_column)) {
                dataset["label_column"] = *name;
            } else {
                dataset["label_column"] = std::get<std::size_t>(c.dataset.label_column);
            }
            break;
    }
    json races = json::array();
    for (const auto& r : c.analysis.races) {
        races.push_back(race_json(r));
    }
    return {{"name", c.name},
            {"seed", c.seed},
            {"output_dir", c.output_dir.generic_string()},
            {"dataset", dataset},
            {"train",
             {{"width", c.train.width},
              {"init_std", c.train.init_std},
              {"learning_rate", c.train.learning_rate},
              {"momentum", c.train.momentum},
              {"batch_size", c.train.batch_size},
              {"steps", c.train.steps},
              {"snapshot_steps", c.train.snapshot_steps}}},
            {"analysis",
             {{"merge_threshold", c.analysis.merge_threshold},
              {"keep_fraction", c.analysis.keep_fraction},
              {"t_early", c.analysis.t_early ? json(*c.analysis.t_early) : json(nullptr)},
              {"similarity_steps", c.analysis.similarity_steps},
              {"races", races}}}};
}

void require_snapshot(const TrainConfig& t, std::size_t step, const std::string& field) {
    if (step != 0 && !std::binary_search(t.snapshot_steps.begin(), t.snapshot_steps.end(), step)) {
        invalid(field, "step " + std::to_string(step) + " is not a snapshot step");
    }
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out = open_output(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

std::string real(double v) { return format_real(v); }

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const char* branch_name(Branch b) { return b == Branch::class1 ? "1" : "2"; }

const char* sign_name(Sign s) {
    switch (s) {
        case Sign::negative: return "negative";
        case Sign::zero: return "zero";
        case Sign::positive: return "positive";
    }
    return "?";
}

/// Values collected during a run for callers that aggregate runs.
struct RunOutcome {
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    AlignmentScore alignment;
    std::size_t merged_width = 0;
};

class ArtifactWriter {
public:
    ArtifactWriter(fs::path root, RunManifest& manifest) : root_(std::move(root)), manifest_(manifest) {}

    template <typename Write>
    void emit(const std::string& relative, Write&& write) {
        const fs::path path = root_ / relative;
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
        write(path);
        record(relative);
    }

    void record(const std::string& relative) {
        const fs::path path = root_ / relative;
        manifest_.artifacts.push_back({relative, sha256_file(path), fs::file_size(path)});
    }

    const fs::path& root() const { return root_; }

private:
    fs::path root_;
    RunManifest& manifest_;
};

json manifest_json(const RunManifest& m) {
    json files = json::array();
    for (const auto& a : m.artifacts) {
        files.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    }
    json j = {{"name", m.name},
              {"tool_version", m.tool_version},
              {"complete", m.complete},
              {"duration_seconds", m.duration_seconds},
              {"config", json::parse(m.config_json)},
              {"artifacts", files}};
    if (!m.complete) {
        j["error"] = m.error;
    }
    return j;
}

void analyze(const ExperimentConfig& config, const BinaryDataset& data, const TrainingTrace& trace,
             ArtifactWriter& out, RunOutcome& outcome) {
    const Snapshot& last = trace.final();
    std::optional<Plateau> plateau;
    if (trace.snapshots.size() >= 3) {
        plateau = detect_plateau(trace);
    }
    const bool has_plateau = plateau && !plateau->empty();

    std::vector<std::size_t> sim_steps = config.analysis.similarity_steps;
    if (sim_steps.empty()) {
        sim_steps = {0, last.step};
        if (has_plateau) {
            sim_steps.push_back(plateau->end_step);
        }
    }
    std::sort(sim_steps.begin(), sim_steps.end());
    sim_steps.erase(std::unique(sim_steps.begin(), sim_steps.end()), sim_steps.end());
    for (const std::size_t step : sim_steps) {
        out.emit("similarity/similarity_step_" + std::to_string(step) + ".csv", [&](const fs::path& p) {
            write_similarity_csv(cosine_similarity_matrix(total_parameter_vectors(trace.at_step(step).params)), p);
        });
    }

    const auto [merged, merge] = merge_aligned_neurons(last.params, data, config.analysis.merge_threshold);
    outcome.merged_width = merge.merged_width;
    out.emit("merge.json", [&](const fs::path& p) {
        json groups = json::array();
        for (const auto& g : merge.groups) {
            groups.push_back(g);
        }
        write_json({{"threshold", config.analysis.merge_threshold},
                    {"step", last.step},
                    {"original_width", merge.original_width},
                    {"merged_width", merge.merged_width},
                    {"loss_before", merge.loss_before},
                    {"loss_after", merge.loss_after},
                    {"relative_loss_change", merge.relative_loss_change},
                    {"groups", groups}},
                   p);
    });

    const auto [pruned, prune] = prune_by_norm(last.params, data, config.analysis.keep_fraction);
    out.emit("prune.json", [&](const fs::path& p) {
        write_json({{"keep_fraction", prune.keep_fraction},
                    {"step", last.step},
                    {"kept", prune.kept},
                    {"pruned", prune.pruned},
                    {"loss_before", prune.loss_before},
                    {"loss_after", prune.loss_after}},
                   p);
    });

    out.emit("growth.json", [&](const fs::path& p) {
        json fits = json::array();
        json skipped = json::array();
        if (has_plateau) {
            const Snapshot& start = trace.at_step(plateau->start_step);
            for (std::size_t i = 0; i < start.neurons.size(); ++i) {
                try {
                    const GrowthFit g = fit_exponential_growth(trace, i, plateau->window());
                    fits.push_back({{"neuron", i},
                                    {"cos_delta_start", nullable(start.neurons[i].cos_delta)},
                                    {"points", g.points},
                                    {"fitted_slope", g.fitted_slope},
                                    {"intercept", g.intercept},
                                    {"r_squared", nullable(g.r_squared)},
                                    {"predicted_slope", nullable(g.predicted_slope)},
                                    {"predicted_slope_unequal_norms", nullable(g.predicted_slope_unequal_norms)}});
                } catch (const Error& e) {
                    skipped.push_back({{"neuron", i}, {"reason", e.what()}});
                }
            }
        }
        json window = has_plateau ? json{{"start", plateau->start_step}, {"end", plateau->end_step}} : json(nullptr);
        write_json({{"window", window}, {"fits", fits}, {"skipped", skipped}}, p);
    });

    out.emit("prediction.json", [&](const fs::path& p) {
        json j;
        std::optional<std::size_t> t_early = config.analysis.t_early;
        if (!t_early && has_plateau) {
            t_early = plateau->end_step;
        }
        j["t_early"] = t_early ? json(*t_early) : json(nullptr);
        auto correlation = [&](std::size_t step, CosineSigning s) -> json {
            try {
                return early_prediction_correlation(trace, step, s);
            } catch (const Error&) {
                return nullptr;
            }
        };
        if (t_early) {
            j["spearman_branch_signed"] = correlation(*t_early, CosineSigning::branch_signed);
            j["spearman_unsigned"] = correlation(*t_early, CosineSigning::unsigned_cos);
        } else {
            j["spearman_branch_signed"] = nullptr;
            j["spearman_unsigned"] = nullptr;
        }
        j["spearman_branch_signed_step0"] = correlation(0, CosineSigning::branch_signed);
        j["spearman_unsigned_step0"] = correlation(0, CosineSigning::unsigned_cos);
        write_json(j, p);
    });

    out.emit("sensitivity.json", [&](const fs::path& p) {
        const Snapshot* post = nullptr;
        if (has_plateau) {
            for (const auto& s : trace.snapshots) {
                if (s.step > plateau->end_step) {
                    post = &s;
                    break;
                }
            }
        }
        json j;
        if (post == nullptr) {
            j = {{"step", nullptr}, {"neurons", json::array()}, {"applicable", 0}, {"negative", 0}, {"positive", 0}};
        } else {
            const ForwardCache cache = forward(post->params, data);
            json neurons = json::array();
            std::size_t applicable = 0;
            std::size_t negative = 0;
            std::size_t positive = 0;
            for (std::size_t i = 0; i < post->neurons.size(); ++i) {
                const LossSensitivity s = loss_sensitivity_sign(post->params, data, cache, i);
                neurons.push_back({{"neuron", i},
                                   {"value", nullable(s.value)},
                                   {"sign", sign_name(s.sign)},
                                   {"applicable", s.applicable},
                                   {"degenerate", s.degenerate}});
                if (s.applicable) {
                    ++applicable;
                    negative += s.sign == Sign::negative ? 1 : 0;
                    positive += s.sign == Sign::positive ? 1 : 0;
                }
            }
            j = {{"step", post->step},
                 {"applicable", applicable},
                 {"negative", negative},
                 {"positive", positive},
                 {"neurons", neurons}};
        }
        write_json(j, p);
    });

    if (!config.analysis.races.empty()) {
        std::vector<RaceTrajectory> races;
        for (const auto& r : config.analysis.races) {
            races.push_back(integrate_race(r));
        }
        out.emit("race.csv", [&](const fs::path& p) { write_race_csv(races, p); });
    }

    outcome.alignment = alignment_score(last.params, data);
    out.emit("summary.json", [&](const fs::path& p) {
        json plateau_json = nullptr;
        if (plateau) {
            plateau_json = {{"snapshots", plateau->count},
                            {"start_step", plateau->start_step},
                            {"end_step", plateau->end_step},
                            {"empty", plateau->empty()}};
        }
        write_json({{"final_step", last.step},
                    {"final_loss", last.loss},
                    {"initial_loss", trace.snapshots.front().loss},
                    {"plateau", plateau_json},
                    {"drop_events", count_drop_events(trace)},
                    {"alignment_score", outcome.alignment.score},
                    {"alignment_groups", outcome.alignment.groups},
                    {"alignment_pairs", outcome.alignment.pairs},
                    {"merged_width", merge.merged_width}},
                   p);
    });
}

RunManifest run_pipeline(const ExperimentConfig& config, Stage stage, RunOutcome& outcome) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.name = config.name;
    manifest.directory = config.output_dir;
    manifest.config_json = config.to_json();
    manifest.tool_version = tool_version();

    fs::create_directories(config.output_dir);
    ArtifactWriter out(config.output_dir, manifest);
    auto finish = [&](bool complete, const std::string& error) {
        manifest.complete = complete;
        manifest.error = error;
        manifest.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_json(manifest_json(manifest), config.output_dir / "manifest.json");
    };

    try {
        const BinaryDataset data = build_dataset(config);
        out.emit("dataset.csv", [&](const fs::path& p) { write_dataset_csv(data, p); });
        if (stage != Stage::data) {
            const TrainingTrace trace = train(config.train, data);
            outcome.final_loss = trace.final().loss;
            out.emit("loss.csv", [&](const fs::path& p) { write_loss_csv(trace, p); });
            out.emit("neurons.csv", [&](const fs::path& p) { write_neurons_csv(trace, p); });
            if (stage == Stage::analyze) {
                analyze(config, data, trace, out, outcome);
            }
        }
    } catch (const std::exception& e) {
        finish(false, e.what());
        throw;
    }
    finish(true, "");
    return manifest;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (name.empty()) {
        invalid("name", "must not be empty");
    }
    if (output_dir.empty()) {
        invalid("output_dir", "must not be empty");
    }
    switch (dataset.kind) {
        case DatasetKind::xor_like:
            if (dataset.per_cluster == 0) {
                invalid("dataset.per_cluster", "must be >= 1");
            }
            if (!(dataset.spread >= 0.0)) {
                invalid("dataset.spread", "must be >= 0");
            }
            break;
        case DatasetKind::clusters: {
            if (dataset.clusters.empty()) {
                invalid("dataset.clusters", "must not be empty");
            }
            bool seen[2] = {false, false};
            for (std::size_t i = 0; i < dataset.clusters.size(); ++i) {
                const auto& g = dataset.clusters[i];
                const std::string at = "dataset.clusters[" + std::to_string(i) + "]";
                if (g.direction.size() == 0 || g.direction.norm() == 0.0) {
                    invalid(at + ".direction", "must be a non-zero vector");
                }
                if (g.direction.size() != dataset.clusters[0].direction.size()) {
                    invalid(at + ".direction", "dimension differs from dataset.clusters[0]");
                }
                if (!(g.norm > 0.0)) {
                    invalid(at + ".norm", "must be > 0");
                }
                if (!(g.spread >= 0.0)) {
                    invalid(at + ".spread", "must be >= 0");
                }
                if (g.count == 0) {
                    invalid(at + ".count", "must be >= 1");
                }
                seen[label_index(g.label)] = true;
            }
            if (!seen[0] || !seen[1]) {
                invalid("dataset.clusters", "must contain both labels 1 and 2");
            }
            break;
        }
        case DatasetKind::csv: {
            std::error_code ec;
            if (!fs::is_regular_file(dataset.csv_path, ec)) {
                invalid("dataset.path", "no such file: " + dataset.csv_path.string());
            }
            break;
        }
    }
    try {
        train.validate();
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(e.what());
    }
    if (train.seed != seed) {
        invalid("train.seed", "must equal seed");
    }
    if (!(analysis.merge_threshold > 0.0 && analysis.merge_threshold <= 1.0)) {
        invalid("analysis.merge_threshold", "must be in (0, 1]");
    }
    if (!(analysis.keep_fraction > 0.0 && analysis.keep_fraction <= 1.0)) {
        invalid("analysis.keep_fraction", "must be in (0, 1]");
    }
    if (analysis.t_early) {
        require_snapshot(train, *analysis.t_early, "analysis.t_early");
    }
    for (std::size_t i = 0; i < analysis.similarity_steps.size(); ++i) {
        require_snapshot(train, analysis.similarity_steps[i], "analysis.similarity_steps[" + std::to_string(i) + "]");
    }
    for (std::size_t i = 0; i < analysis.races.size(); ++i) {
        try {
            analysis.races[i].validate();
        } catch (const Error& e) {
            std::string msg = e.what();
            if (msg.rfind("race.", 0) == 0) {
                msg = msg.substr(5);
            }
            throw ValidationError("analysis.races[" + std::to_string(i) + "]." + msg);
        }
    }
}

ExperimentConfig ExperimentConfig::parse(const std::string& json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: not valid JSON: ") + e.what());
    }
    Fields f(j, "");
    ExperimentConfig c;
    f.text("name", c.name);
    if (const json* seed = f.get("seed")) {
        c.seed = Fields::as_u64(*seed, "seed");
    }
    std::string out = c.output_dir.string();
    f.text("output_dir", out);
    c.output_dir = out;
    c.dataset = parse_dataset(f.require("dataset"), base_dir);
    c.train = parse_train(f.require("train"));
    if (const json* a = f.get("analysis")) {
        c.analysis = parse_analysis(*a);
    }
    f.finish();
    c.train.seed = c.seed;
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("config: cannot read " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.parent_path());
}

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(2); }

BinaryDataset build_dataset(const ExperimentConfig& config) {
    const DatasetSection& d = config.dataset;
    BinaryDataset data;
    if (d.kind == DatasetKind::csv) {
        data = load_csv_dataset(d.csv_path, d.label_column);
    } else {
        Rng rng(config.seed);
        const std::vector<GaussianCluster> clusters =
            d.kind == DatasetKind::xor_like ? xor_like_clusters(d.per_cluster, d.spread) : d.clusters;
        data = generate_cluster_dataset(clusters, rng);
    }
    return d.standardize ? standardize(data) : data;
}

const ArtifactEntry* RunManifest::find(const std::string& relative_path) const {
    for (const auto& a : artifacts) {
        if (a.path == relative_path) {
            return &a;
        }
    }
    return nullptr;
}

RunManifest run_experiment(const ExperimentConfig& config, Stage stage) {
    RunOutcome outcome;
    return run_pipeline(config, stage, outcome);
}

RunManifest run_experiment(const fs::path& config_path) {
    return run_experiment(ExperimentConfig::load(config_path));
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest initialisation failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

SweepResult sweep_init_scale(const ExperimentConfig& base, std::span<const double> stds, std::size_t jobs) {
    if (stds.empty()) {
        throw ValidationError("stds: list must not be empty");
    }
    for (std::size_t k = 0; k < stds.size(); ++k) {
        if (!(stds[k] > 0.0) || !std::isfinite(stds[k])) {
            throw ValidationError("stds[" + std::to_string(k) + "]: must be finite and > 0");
        }
    }
    std::vector<ExperimentConfig> configs;
    for (std::size_t k = 0; k < stds.size(); ++k) {
        ExperimentConfig c = base;
        c.train.init_std = stds[k];
        c.name = base.name + "_std_" + std::to_string(k);
        c.output_dir = base.output_dir / ("std_" + std::to_string(k));
        c.validate();
        configs.push_back(std::move(c));
    }

    SweepResult result;
    result.stds.assign(stds.begin(), stds.end());
    result.runs.resize(stds.size());
    std::vector<RunOutcome> outcomes(stds.size());
    jobs = std::max<std::size_t>(1, jobs);
    for (std::size_t first = 0; first < configs.size(); first += jobs) {
        std::vector<std::future<void>> batch;
        for (std::size_t k = first; k < std::min(configs.size(), first + jobs); ++k) {
            batch.push_back(std::async(std::launch::async, [&, k] {
                result.runs[k] = run_pipeline(configs[k], Stage::analyze, outcomes[k]);
            }));
        }
        for (auto& f : batch) {
            f.get();
        }
    }

    result.summary_csv = base.output_dir / "summary.csv";
    std::ofstream out = open_output(result.summary_csv);
    out << "#schema=racedyn.sweep.v1\n";
    out << "std,run_dir,final_loss,alignment_score,alignment_groups,alignment_pairs,merged_width\n";
    for (std::size_t k = 0; k < stds.size(); ++k) {
        result.alignment.push_back(outcomes[k].alignment);
        result.final_loss.push_back(outcomes[k].final_loss);
        out << real(stds[k]) << ",std_" << k << ',' << real(outcomes[k].final_loss) << ','
            << real(outcomes[k].alignment.score) << ',' << outcomes[k].alignment.groups << ','
            << outcomes[k].alignment.pairs << ',' << outcomes[k].merged_width << '\n';
    }
    if (!out) {
        throw Error("write failed: " + result.summary_csv.string());
    }
    return result;
}

std::vector<fs::path> export_similarity_snapshots(const TrainingTrace& trace, std::span<const std::size_t> steps,
                                                  const fs::path& dir) {
    std::vector<std::size_t> wanted(steps.begin(), steps.end());
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    const std::vector<std::size_t> available = trace.steps();
    for (const std::size_t s : wanted) {
        if (!std::binary_search(available.begin(), available.end(), s)) {
            std::string list;
            for (const std::size_t a : available) {
                list += (list.empty() ? "" : ", ") + std::to_string(a);
            }
            throw Error("no snapshot at step " + std::to_string(s) + "; available steps: " + list);
        }
    }
    std::vector<fs::path> written;
    for (const std::size_t s : wanted) {
        const fs::path p = dir / ("similarity_step_" + std::to_string(s) + ".csv");
        write_similarity_csv(cosine_similarity_matrix(total_parameter_vectors(trace.at_step(s).params)), p);
        written.push_back(p);
    }
    return written;
}

void write_loss_csv(const TrainingTrace& trace, const fs::path& path) {
    std::ofstream out = open_output(path);
    out << "#schema=racedyn.loss.v1\n";
    out << "step,loss,max_delta_y_angle_error\n";
    for (const auto& s : trace.snapshots) {
        out << s.step << ',' << real(s.loss) << ',' << real(s.max_delta_y_angle_error) << '\n';
    }
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

void write_neurons_csv(const TrainingTrace& trace, const fs::path& path) {
    std::ofstream out = open_output(path);
    out << "#schema=racedyn.neurons.v1\n";
    out << "step,neuron,a,norm_w1,norm_w2,phi,bias,delta,cos_delta,branch_signed_cos_delta,c,branch,branch_tie,"
           "gamma_norm,n_eff,n_eff1,n_eff2\n";
    for (const auto& s : trace.snapshots) {
        for (const auto& n : s.neurons) {
            out << s.step << ',' << n.neuron << ',' << real(n.a) << ',' << real(n.norm_w1) << ','
                << real(n.norm_w2) << ',' << real(n.phi) << ',' << real(n.bias) << ',' << real(n.delta) << ','
                << real(n.cos_delta) << ',' << real(n.branch_signed_cos_delta()) << ',' << real(n.c) << ','
                << branch_name(n.branch) << ',' << (n.branch_tie ? 1 : 0) << ',' << real(n.gamma_norm) << ','
                << n.n_eff << ',' << n.n_eff1 << ',' << n.n_eff2 << '\n';
        }
    }
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

void write_similarity_csv(const SimilarityMatrix& sim, const fs::path& path) {
    std::ofstream out = open_output(path);
    out << "#schema=racedyn.similarity.v1\n";
    out << "neuron";
    for (std::size_t j = 0; j < sim.size(); ++j) {
        out << ',' << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < sim.size(); ++i) {
        out << i;
        for (std::size_t j = 0; j < sim.size(); ++j) {
            out << ',' << real(sim(i, j));
        }
        out << '\n';
    }
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

void write_race_csv(std::span<const RaceTrajectory> races, const fs::path& path) {
    std::ofstream out = open_output(path);
    out << "#schema=racedyn.race.v1\n";
    out << "race,time,neuron,a\n";
    for (std::size_t r = 0; r < races.size(); ++r) {
        const RaceTrajectory& t = races[r];
        for (std::size_t k = 0; k < t.times.size(); ++k) {
            for (Eigen::Index b = 0; b < t.a.cols(); ++b) {
                out << r << ',' << real(t.times[k]) << ',' << b << ',' << real(t.a(static_cast<Eigen::Index>(k), b))
                    << '\n';
            }
        }
    }
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

}  // namespace racedyn
