"""Long learning runs on synthetic data; enabled with HCG_RUN_SLOW=1."""

import numpy as np
import pytest

from dataset import SYNTH_PRESETS, normalize_dataset, split_dataset, synth_generate
from evaluation import compute_metrics, confusion
from models import TrainConfig
from network import build_model, count_params, default_config, parity_config, predict
from sweep import parse_grid, run_sweep
from training import train

pytestmark = pytest.mark.slow


def _prepared(preset, seed=0):
    ds, _ = normalize_dataset(split_dataset(synth_generate(SYNTH_PRESETS[preset]), seed=seed))
    return ds


def _test_accuracy(model, ds):
    x, y = ds.split("test")
    return compute_metrics(confusion(predict(model, x), y, ds.num_classes)).accuracy


def test_hcg_learns_default_synthetic_task():
    ds = _prepared("default")
    model = build_model(default_config("hcg", ds.num_sensors, ds.window_length, ds.num_classes, seed=0))
    history = train(model, ds, TrainConfig(epochs=30, seed=0))
    assert max(history.val_acc) >= history.val_acc[0]
    assert _test_accuracy(model, ds) >= 0.95


def test_train_loss_drops_over_first_epochs():
    ds = _prepared("default")
    decreasing = 0
    for seed in range(5):
        model = build_model(default_config("hcg", ds.num_sensors, ds.window_length, ds.num_classes, seed=seed))
        losses = train(model, ds, TrainConfig(epochs=3, seed=seed)).train_loss
        decreasing += losses[0] > losses[1] > losses[2]
    assert decreasing >= 4


def test_hcg_beats_baselines_at_parity_on_hard_preset():
    ds = _prepared("hard")
    shape = (ds.num_sensors, ds.window_length, ds.num_classes)
    reference = count_params(default_config("hcg", *shape))
    means = {}
    for arch in ("hcg", "dnn", "cnn", "lstm", "gru"):
        scores = []
        for seed in range(5):
            cfg = default_config(arch, *shape, seed=seed)
            if arch != "hcg":
                cfg = parity_config(cfg, reference)
            model = build_model(cfg)
            train(model, ds, TrainConfig(epochs=30, seed=seed))
            scores.append(_test_accuracy(model, ds))
        means[arch] = float(np.mean(scores))
    for arch in ("dnn", "cnn", "lstm", "gru"):
        assert means["hcg"] >= means[arch], means


def test_depth_sweep_grid_completes():
    ds = _prepared("default")
    grid = parse_grid("repeats = 3\n")
    cells = run_sweep(ds, grid, workers=4)
    assert len(cells) == 4 * 5
    assert all(len(c.values) == 3 for c in cells)
