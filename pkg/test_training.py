import csv

import numpy as np
import pytest

import scalar_oracles
from dataset import normalize_dataset, split_dataset, synth_generate
from errors import ConfigError, TrainingError
from models import LabeledDataset, SynthConfig, TrainConfig
from network import build_model, predict, sized_config
from numerics import ParamTensor
from training import AdamState, adam_step, evaluate, history_path, train, write_history_csv


def _dataset(num_classes=2, per_class=30, seed=0):
    ds = synth_generate(
        SynthConfig(num_classes=num_classes, num_sensors=2, window_length=16, samples_per_class=per_class, seed=seed)
    )
    ds, _ = normalize_dataset(split_dataset(ds, seed=seed))
    return ds


def _model(ds, arch="dnn", widths=(8,), seed=0):
    return build_model(sized_config(arch, ds.num_sensors, ds.window_length, ds.num_classes, widths, seed=seed))


# ---------- Adam ----------


def test_adam_zero_gradient_keeps_parameters():
    p = ParamTensor("w", np.array([0.5, -1.0]))
    adam_step([p], AdamState(), TrainConfig())
    np.testing.assert_array_equal(p.value, [0.5, -1.0])


def test_adam_first_step_moves_by_learning_rate():
    p = ParamTensor("w", np.zeros(3))
    p.grad[...] = [2.0, -0.5, 7.0]
    adam_step([p], AdamState(), TrainConfig(learning_rate=0.001))
    np.testing.assert_allclose(p.value, [-0.001, 0.001, -0.001], rtol=1e-6)


def test_adam_two_steps_match_scalar_recurrence():
    cfg = TrainConfig(learning_rate=0.1)
    p = ParamTensor("theta", np.array([1.0]))
    state = AdamState()
    trail = []
    for _ in range(2):
        p.zero_grad()
        p.accumulate(2.0 * p.value)
        adam_step([p], state, cfg)
        trail.append(float(p.value[0]))
    expected = scalar_oracles.adam_scalar(1.0, lambda t: 2.0 * t, steps=2, lr=0.1)
    assert trail == pytest.approx(expected, abs=1e-15)
    assert state.t == 2
    assert np.all(state.v["theta"] >= 0)


def test_adam_rejects_non_finite_gradient():
    p = ParamTensor("dense0.W", np.zeros(2))
    p.grad[0] = np.nan
    with pytest.raises(TrainingError, match="dense0.W"):
        adam_step([p], AdamState(), TrainConfig())


def test_train_config_validation():
    ds = _dataset()
    with pytest.raises(ConfigError):
        train(_model(ds), ds, TrainConfig(batch_size=0))
    with pytest.raises(ConfigError):
        train(_model(ds), ds, TrainConfig(learning_rate=-1.0))


# ---------- training loop ----------


def test_zero_learning_rate_freezes_parameters():
    ds = _dataset()
    model = _model(ds, arch="hcg", widths=(3, 4))
    before = [p.value.copy() for p in model.params]
    history = train(model, ds, TrainConfig(learning_rate=0.0, epochs=2, batch_size=8))
    assert all(np.array_equal(b, p.value) for b, p in zip(before, model.params))
    assert history.epochs == 2
    assert len(history.val_acc) == 2


def test_training_is_deterministic():
    ds = _dataset()
    runs = []
    for _ in range(2):
        model = _model(ds, seed=1)
        history = train(model, ds, TrainConfig(learning_rate=0.01, epochs=3, batch_size=8, seed=4))
        runs.append((history, [p.value.copy() for p in model.params]))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][1], runs[1][1]))


def test_training_reduces_loss_on_separable_classes():
    ds = _dataset(num_classes=2, per_class=100)
    model = _model(ds, widths=(16,))
    history = train(model, ds, TrainConfig(learning_rate=0.01, epochs=10, batch_size=16))
    assert history.train_loss[9] < history.train_loss[0]


def test_partial_last_batch_is_used():
    ds = _dataset(per_class=10)
    n_train = len(ds.split("train")[1])
    seen = []

    def spy(epoch, history):
        seen.append(epoch)

    train(_model(ds), ds, TrainConfig(epochs=1, batch_size=n_train - 1), on_epoch=spy)
    assert seen == [1]


def test_empty_training_split_is_an_error():
    ds = _dataset()
    no_train = LabeledDataset(
        windows=ds.windows,
        labels=ds.labels,
        num_classes=ds.num_classes,
        splits=np.where(ds.splits == "train", "val", ds.splits),
    )
    with pytest.raises(TrainingError, match="empty"):
        train(_model(ds), no_train, TrainConfig(epochs=1))


def test_divergence_is_reported():
    ds = _dataset()
    with pytest.raises(TrainingError):
        train(_model(ds, widths=(8, 8)), ds, TrainConfig(learning_rate=1e300, epochs=3, batch_size=4))


# ---------- evaluate ----------


def test_evaluate_on_own_predictions_is_perfect():
    ds = _dataset()
    model = _model(ds)
    x, _ = ds.split("test")
    _, acc = evaluate(model, x, predict(model, x))
    assert acc == 1.0


def test_uniform_model_scores_first_class_share():
    ds = _dataset(num_classes=4, per_class=10)
    model = _model(ds)
    for p in model.params:
        p.value[...] = 0.0
    x, y = ds.split("test")
    loss, acc = evaluate(model, x, y)
    assert acc == pytest.approx(0.25)
    assert loss == pytest.approx(0.75 * len(y))


# ---------- history export ----------


def test_history_csv(tmp_path):
    ds = _dataset()
    history = train(_model(ds), ds, TrainConfig(epochs=2, batch_size=8))
    path = write_history_csv(history, history_path(tmp_path / "m.ckpt"))
    assert path.name == "m.ckpt.history.csv"
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert float(rows[2][1]) == history.train_loss[1]
