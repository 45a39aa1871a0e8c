import json
import math
import pathlib

import numpy as np
import pytest

import racedyn

CONFIGS = pathlib.Path(__file__).resolve().parents[2] / "configs"


def shortened(path, steps, out):
    text = json.loads(racedyn.ExperimentConfig.load(path).to_json())
    text["train"]["steps"] = steps
    text["train"].pop("snapshot_steps", None)
    text["train"]["snapshot_every"] = 10
    text["output_dir"] = str(out)
    return racedyn.ExperimentConfig.parse(json.dumps(text))


def small_config(**overrides):
    cfg = racedyn.TrainConfig()
    cfg.width = 8
    cfg.init_std = 0.01
    cfg.learning_rate = 0.05
    cfg.momentum = 0.5
    cfg.steps = 40
    cfg.snapshot_steps = racedyn.TrainConfig.every(10, 40)
    cfg.seed = 2
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def test_dataset_round_trip():
    data = racedyn.xor_like_dataset(per_cluster=5, spread=0.1, seed=1)
    assert len(data) == 20
    assert data.inputs.shape == (20, 2)
    again = racedyn.Dataset(data.inputs, data.labels)
    assert np.array_equal(again.inputs, data.inputs)
    assert set(again.labels) == {1, 2}
    with pytest.raises(racedyn.Error):
        racedyn.Dataset(np.zeros((2, 2)), [1, 3])


def test_train_and_diagnostics():
    data = racedyn.xor_like_dataset(per_cluster=5, spread=0.1, seed=1)
    trace = racedyn.train(small_config(), data)
    assert trace.steps() == [0, 10, 20, 30, 40]
    assert trace.final().loss == pytest.approx(racedyn.loss(trace.final().params, data))
    diag = racedyn.diagnostics(trace.final().params, data)
    assert len(diag) == 8
    for d in diag:
        assert d.a == pytest.approx(d.norm_w1 * d.norm_w2)
        assert d.branch in (1, 2)
    assert max(s.max_delta_y_angle_error for s in trace.snapshots) < 1e-9
    sim = racedyn.similarity_matrix(trace.final().params)
    assert sim.shape == (8, 8)
    assert np.allclose(np.diag(sim), 1.0)


def test_same_seed_is_deterministic():
    data = racedyn.xor_like_dataset(per_cluster=5, seed=4)
    a = racedyn.train(small_config(), data).final().params
    b = racedyn.train(small_config(), data).final().params
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)


def test_merge_and_prune():
    data = racedyn.xor_like_dataset(per_cluster=5, seed=1)
    params = racedyn.train(small_config(), data).final().params
    merged, report = racedyn.merge_aligned_neurons(params, data, 0.999)
    assert report.original_width == 8
    assert merged.width == report.merged_width
    pruned, prep = racedyn.prune_by_norm(params, data, 0.5)
    assert len(prep.kept) == 4 and len(prep.pruned) == 4
    for i in prep.pruned:
        assert not pruned.w1[i].any() and not pruned.w2[:, i].any()


def test_bad_train_config_raises():
    data = racedyn.xor_like_dataset(per_cluster=5, seed=1)
    with pytest.raises(racedyn.Error, match="learning_rate"):
        racedyn.train(small_config(learning_rate=-1.0), data)


def test_race_slopes():
    spec = racedyn.RaceSpec()
    spec.learning_rate = 1e-3
    spec.gamma_norm = 1.0
    spec.cos_delta = [0.9, 0.3]
    spec.initial_a = [1e-3, 1e-3]
    spec.duration = 1000.0
    r = racedyn.integrate_race(spec)
    t = np.asarray(r.times)
    ratio = np.log(r.a[:, 0] / r.a[:, 1])
    slope = np.polyfit(t, ratio, 1)[0]
    assert slope == pytest.approx(1e-3 * 0.6, rel=1e-3)


def test_experiment_pipeline(tmp_path):
    cfg = shortened(CONFIGS / "two_cluster_gradflow.json", 100, tmp_path)
    manifest = racedyn.run_experiment(cfg)
    assert manifest.complete
    names = {a.path for a in manifest.artifacts}
    assert {"dataset.csv", "loss.csv", "summary.json"} <= names
    again = racedyn.run_experiment(cfg)
    assert [a.sha256 for a in again.artifacts] == [a.sha256 for a in manifest.artifacts]


def test_invalid_config_names_field():
    bad = json.dumps({"name": "x", "seed": 1, "dataset": {"kind": "xor_like"}, "train": {"learning_rate": -1}})
    with pytest.raises(racedyn.ValidationError, match="learning_rate"):
        racedyn.ExperimentConfig.parse(bad).validate()


def test_sweep(tmp_path):
    cfg = shortened(CONFIGS / "two_cluster_gradflow.json", 50, tmp_path)
    result = racedyn.sweep_init_scale(cfg, [1e-3, 1e-2], jobs=2)
    assert result.stds == [1e-3, 1e-2]
    assert all(math.isfinite(x) for x in result.final_loss)
    assert pathlib.Path(result.summary_csv).exists()
