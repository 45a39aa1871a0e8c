#include "racedyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace racedyn {

namespace {

double neuron_loss(const NetworkParams& params, const BinaryDataset& dataset) {
    return cross_entropy_loss(forward(params, dataset));
}

void zero_neuron(NetworkParams& params, std::size_t neuron) {
    const auto a = static_cast<Eigen::Index>(neuron);
    params.w1.row(a).setZero();
    params.b1[a] = 0.0;
    params.w2.col(a).setZero();
}

void set_total_vector(NetworkParams& params, std::size_t neuron, const Vector& t) {
    const auto a = static_cast<Eigen::Index>(neuron);
    const Eigen::Index din = params.w1.cols();
    params.w1.row(a) = t.head(din).transpose();
    params.b1[a] = t[din];
    params.w2.col(a) = t.tail(2);
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::vector<Vector> total_parameter_vectors(const NetworkParams& params) {
    params.validate();
    const Eigen::Index din = params.w1.cols();
    std::vector<Vector> out;
    out.reserve(params.width());
    for (std::size_t n = 0; n < params.width(); ++n) {
        const auto a = static_cast<Eigen::Index>(n);
        Vector t(din + 3);
        t.head(din) = params.w1.row(a).transpose();
        t[din] = params.b1[a];
        t.tail(2) = params.w2.col(a);
        out.push_back(std::move(t));
    }
    return out;
}

SimilarityMatrix cosine_similarity_matrix(std::span<const Vector> vectors) {
    const auto n = static_cast<Eigen::Index>(vectors.size());
    std::vector<Vector> unit;
    unit.reserve(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (i > 0 && vectors[i].size() != vectors[0].size()) {
            throw DimensionMismatch("similarity: vector " + std::to_string(i) + " has length " +
                                    std::to_string(vectors[i].size()) + ", expected " +
                                    std::to_string(vectors[0].size()));
        }
        const double norm = vectors[i].norm();
        if (!(norm > 0.0)) {
            throw DegenerateInput("similarity: neuron " + std::to_string(i) + " has a zero parameter vector");
        }
        unit.push_back(vectors[i] / norm);
    }
    SimilarityMatrix sim;
    sim.values = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double c = std::clamp(unit[static_cast<std::size_t>(i)].dot(unit[static_cast<std::size_t>(j)]),
                                        -1.0, 1.0);
            sim.values(i, j) = c;
            sim.values(j, i) = c;
        }
    }
    return sim;
}

NeuronGroups alignment_clusters(const SimilarityMatrix& sim, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw Error("alignment threshold must be in (0, 1]");
    }
    NeuronGroups groups;
    for (std::size_t i = 0; i < sim.size(); ++i) {
        bool placed = false;
        for (auto& group : groups) {
            if (sim(group.front(), i) >= threshold) {
                group.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) {
            groups.push_back({i});
        }
    }
    return groups;
}

std::pair<NetworkParams, MergeReport> merge_aligned_neurons(const NetworkParams& params, const BinaryDataset& dataset,
                                                            double threshold) {
    const std::vector<Vector> totals = total_parameter_vectors(params);

    // Dead neurons (all-zero parameters) stay on their own.
    std::vector<std::size_t> live;
    std::vector<Vector> live_totals;
    for (std::size_t i = 0; i < totals.size(); ++i) {
        if (totals[i].norm() > 0.0) {
            live.push_back(i);
            live_totals.push_back(totals[i]);
        }
    }
    NeuronGroups groups;
    for (auto& g : alignment_clusters(cosine_similarity_matrix(live_totals), threshold)) {
        for (auto& m : g) {
            m = live[m];
        }
        groups.push_back(std::move(g));
    }
    for (std::size_t i = 0; i < totals.size(); ++i) {
        if (!(totals[i].norm() > 0.0)) {
            groups.push_back({i});
        }
    }
    std::sort(groups.begin(), groups.end());

    NetworkParams merged = NetworkParams::zeros(groups.size(), params.input_dim());
    merged.b2 = params.b2;
    MergeReport report;
    report.original_width = params.width();
    report.merged_width = groups.size();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& members = groups[g];
        Vector t = totals[members.front()];
        if (members.size() > 1) {
            Vector direction = Vector::Zero(t.size());
            double sq = 0.0;
            for (const std::size_t m : members) {
                const double norm = totals[m].norm();
                direction += norm * totals[m];   // |t|^2 * unit(t)
                sq += norm * norm;
            }
            t = std::sqrt(sq) * direction.normalized();
            report.groups.push_back(members);
        }
        set_total_vector(merged, g, t);
    }
    report.loss_before = neuron_loss(params, dataset);
    report.loss_after = neuron_loss(merged, dataset);
    report.relative_loss_change = (report.loss_after - report.loss_before) / report.loss_before;
    return {std::move(merged), std::move(report)};
}

std::pair<NetworkParams, PruneReport> prune_by_norm(const NetworkParams& params, const BinaryDataset& dataset,
                                                    double keep_fraction) {
    params.validate();
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw Error("prune keep_fraction must be in (0, 1]");
    }
    const std::size_t d = params.width();
    std::vector<double> a(d);
    for (std::size_t i = 0; i < d; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        a[i] = params.w1.row(k).norm() * params.w2.col(k).norm();
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] > a[j]; });

    // Guard against 0.3 * 10 evaluating to 3.0000000000000004.
    const double raw = keep_fraction * static_cast<double>(d);
    const auto keep = std::min<std::size_t>(d, static_cast<std::size_t>(std::ceil(raw - 1e-9 * raw)));

    PruneReport report;
    report.keep_fraction = keep_fraction;
    report.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    report.pruned.assign(order.begin() + static_cast<std::ptrdiff_t>(keep), order.end());
    std::sort(report.kept.begin(), report.kept.end());
    std::sort(report.pruned.begin(), report.pruned.end());

    NetworkParams pruned = params;
    for (const std::size_t i : report.pruned) {
        zero_neuron(pruned, i);
    }
    report.loss_before = neuron_loss(params, dataset);
    report.loss_after = neuron_loss(pruned, dataset);
    return {std::move(pruned), std::move(report)};
}

LineFit fit_line(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size() || t.size() < 2) {
        throw Error("line fit needs at least two paired points");
    }
    const auto n = static_cast<double>(t.size());
    const double tm = std::accumulate(t.begin(), t.end(), 0.0) / n;
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double stt = 0.0;
    double sty = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        stt += (t[i] - tm) * (t[i] - tm);
        sty += (t[i] - tm) * (y[i] - ym);
        syy += (y[i] - ym) * (y[i] - ym);
    }
    if (!(stt > 0.0)) {
        throw Error("line fit needs at least two distinct abscissae");
    }
    LineFit fit;
    fit.slope = sty / stt;
    fit.intercept = ym - fit.slope * tm;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * t[i]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return fit;
}

GrowthFit fit_exponential_growth(const TrainingTrace& trace, std::size_t neuron, StepWindow window) {
    if (window.end < window.start) {
        throw Error("growth window end precedes its start");
    }
    const double lr = trace.config.learning_rate / (1.0 - trace.config.momentum);
    std::vector<double> t;
    std::vector<double> log_a;
    double rate = 0.0;
    double rate_unequal = 0.0;
    const Snapshot* first = nullptr;
    for (const auto& snap : trace.snapshots) {
        if (snap.step < window.start || snap.step > window.end) {
            continue;
        }
        if (neuron >= snap.neurons.size()) {
            throw Error("growth fit: neuron " + std::to_string(neuron) + " out of range");
        }
        const NeuronDiagnostics& d = snap.neurons[neuron];
        if (!(d.a > 0.0)) {
            throw Error("growth fit: neuron " + std::to_string(neuron) + " has a = 0 at step " +
                        std::to_string(snap.step));
        }
        if (first == nullptr) {
            first = &snap;
        }
        t.push_back(static_cast<double>(snap.step));
        log_a.push_back(std::log(d.a));
        const double r = lr * d.gamma_norm * d.cos_delta;
        rate += r;
        rate_unequal += r * (d.norm_w1 * d.norm_w1 + d.norm_w2 * d.norm_w2) / d.a;
    }
    if (t.size() < 3) {
        throw Error("growth fit needs at least 3 snapshots in [" + std::to_string(window.start) + ", " +
                    std::to_string(window.end) + "], found " + std::to_string(t.size()));
    }
    const LineFit line = fit_line(t, log_a);
    const auto n = static_cast<double>(t.size());

    GrowthFit fit;
    fit.neuron = neuron;
    fit.window = window;
    fit.points = t.size();
    fit.fitted_slope = line.slope;
    fit.intercept = line.intercept;
    fit.r_squared = line.r_squared;
    fit.cos_delta_start = first->neurons[neuron].cos_delta;
    fit.predicted_slope = rate / n;
    fit.predicted_slope_unequal_norms = rate_unequal / n;
    return fit;
}

std::size_t count_drop_events(const TrainingTrace& trace, double min_decrease, double window_fraction) {
    if (!(min_decrease > 0.0 && min_decrease < 1.0) || !(window_fraction > 0.0 && window_fraction <= 1.0)) {
        throw Error("drop events: min_decrease must be in (0, 1) and window_fraction in (0, 1]");
    }
    const auto& snaps = trace.snapshots;
    if (snaps.empty()) {
        return 0;
    }
    const double span = static_cast<double>(snaps.back().step - snaps.front().step);
    const double window = window_fraction * span;
    std::size_t events = 0;
    bool inside = false;
    std::size_t j = 0;
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        j = std::max(j, i);
        while (j + 1 < snaps.size() && static_cast<double>(snaps[j + 1].step - snaps[i].step) <= window) {
            ++j;
        }
        const bool drop = j > i && snaps[j].loss <= (1.0 - min_decrease) * snaps[i].loss;
        if (drop && !inside) {
            ++events;
        }
        inside = drop;
    }
    return events;
}

Plateau detect_plateau(const TrainingTrace& trace) {
    if (trace.snapshots.size() < 3) {
        throw Error("plateau detection needs at least 3 snapshots, trace has " +
                    std::to_string(trace.snapshots.size()));
    }
    const double l0 = trace.snapshots.front().loss;
    Plateau p;
    p.start_step = trace.snapshots.front().step;
    for (const auto& snap : trace.snapshots) {
        if (std::abs(snap.loss - l0) > kPlateauTolerance * std::abs(l0)) {
            break;
        }
        ++p.count;
        p.end_step = snap.step;
    }
    return p;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionMismatch("spearman: sequences differ in length");
    }
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const auto n = static_cast<double>(rx.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
        return 0.0;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double early_prediction_correlation(const TrainingTrace& trace, std::size_t t_early, CosineSigning signing) {
    const Snapshot& early = trace.at_step(t_early);
    const Snapshot& last = trace.final();
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i = 0; i < early.neurons.size(); ++i) {
        const double c = early.neurons[i].cos_delta;
        if (!std::isfinite(c)) {
            continue;
        }
        const double sign = signing == CosineSigning::branch_signed ? branch_sign(last.neurons[i].branch) : 1.0;
        x.push_back(sign * c);
        y.push_back(last.neurons[i].a);
    }
    if (x.size() < 3) {
        throw Error("early prediction needs at least 3 neurons with defined delta at step " +
                    std::to_string(t_early) + ", found " + std::to_string(x.size()));
    }
    return spearman(x, y);
}

double ErrorDecayCurve::at(double t) const {
    if (times.empty()) {
        return 1.0;
    }
    if (t <= times.front()) {
        return factors.front();
    }
    if (t >= times.back()) {
        return factors.back();
    }
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto i = static_cast<std::size_t>(it - times.begin());
    const double u = (t - times[i - 1]) / (times[i] - times[i - 1]);
    return factors[i - 1] + u * (factors[i] - factors[i - 1]);
}

void RaceSpec::validate() const {
    if (!(learning_rate > 0.0)) {
        throw Error("race.learning_rate must be > 0");
    }
    if (!(gamma_norm >= 0.0) || !std::isfinite(gamma_norm)) {
        throw Error("race.gamma_norm must be finite and >= 0");
    }
    if (cos_delta.empty()) {
        throw Error("race.cos_delta must not be empty");
    }
    if (cos_delta.size() != initial_a.size()) {
        throw Error("race.cos_delta and race.initial_a differ in length (" + std::to_string(cos_delta.size()) +
                    " vs " + std::to_string(initial_a.size()) + ")");
    }
    for (std::size_t i = 0; i < cos_delta.size(); ++i) {
        if (!(cos_delta[i] > -1.0 && cos_delta[i] <= 1.0)) {
            throw Error("race.cos_delta[" + std::to_string(i) + "] must be in (-1, 1]");
        }
        if (!(initial_a[i] > 0.0) || !std::isfinite(initial_a[i])) {
            throw Error("race.initial_a[" + std::to_string(i) + "] must be finite and > 0");
        }
    }
    if (!(duration > 0.0) || !std::isfinite(duration)) {
        throw Error("race.duration must be finite and > 0");
    }
    if (!(max_rate_step > 0.0)) {
        throw Error("race.max_rate_step must be > 0");
    }
    if (decay.times.size() != decay.factors.size()) {
        throw Error("race.decay times and factors differ in length");
    }
    for (std::size_t i = 0; i < decay.times.size(); ++i) {
        if (!(decay.factors[i] >= 0.0)) {
            throw Error("race.decay factors must be >= 0");
        }
        if (i > 0 && !(decay.times[i] > decay.times[i - 1])) {
            throw Error("race.decay times must be strictly increasing");
        }
    }
}

RaceTrajectory integrate_race(const RaceSpec& spec) {
    spec.validate();
    double max_factor = 1.0;
    if (!spec.decay.constant()) {
        max_factor = *std::max_element(spec.decay.factors.begin(), spec.decay.factors.end());
    }
    const double max_rate = spec.learning_rate * spec.gamma_norm * max_factor;
    const double by_rate = std::ceil(spec.duration * max_rate / spec.max_rate_step);
    const auto steps = static_cast<std::size_t>(std::max(std::ceil(spec.duration), by_rate));
    const double dt = spec.duration / static_cast<double>(steps);

    const auto m = static_cast<Eigen::Index>(spec.cos_delta.size());
    const Eigen::Map<const Vector> cos_delta(spec.cos_delta.data(), m);
    Vector a = Eigen::Map<const Vector>(spec.initial_a.data(), m);

    RaceTrajectory out;
    out.times.resize(steps + 1);
    out.a.resize(static_cast<Eigen::Index>(steps + 1), m);
    out.times[0] = 0.0;
    out.a.row(0) = a.transpose();
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double rate = spec.learning_rate * spec.gamma_norm * spec.decay.at(t);
        a += dt * rate * cos_delta.cwiseProduct(a);
        out.times[k + 1] = static_cast<double>(k + 1) * dt;
        out.a.row(static_cast<Eigen::Index>(k + 1)) = a.transpose();
    }
    return out;
}

AlignmentScore alignment_score(const NetworkParams& params, const BinaryDataset& dataset) {
    const ForwardCache cache = forward(params, dataset);
    const std::vector<NeuronDiagnostics> diags = all_diagnostics(params, dataset, cache);

    std::map<std::pair<std::vector<std::uint8_t>, Branch>, std::vector<Vector>> groups;
    for (std::size_t i = 0; i < params.width(); ++i) {
        const Vector w1 = params.incoming(i);
        const double norm = w1.norm();
        if (!(norm > 0.0)) {
            continue;
        }
        groups[{gating_from_cache(cache, i).bits, diags[i].branch}].push_back(w1 / norm);
    }
    AlignmentScore score;
    double total = 0.0;
    for (const auto& [key, members] : groups) {
        if (members.size() < 2) {
            continue;
        }
        ++score.groups;
        score.neurons += members.size();
        for (std::size_t i = 0; i < members.size(); ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                total += std::clamp(members[i].dot(members[j]), -1.0, 1.0);
                ++score.pairs;
            }
        }
    }
    score.score = score.pairs > 0 ? total / static_cast<double>(score.pairs) : 0.0;
    return score;
}

}  // namespace racedyn
