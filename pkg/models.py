from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ARCHITECTURES = ("hcg", "dnn", "cnn", "lstm", "gru")
SPLITS = ("train", "val", "test")


@dataclass
class SensorRecording:
    values: np.ndarray  # T×N, rows are timesteps, columns are sensors
    sample_rate_hz: float
    label: int
    source: str = "synthetic"

    @property
    def num_timesteps(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_sensors(self) -> int:
        return int(self.values.shape[1])


@dataclass
class LabeledDataset:
    windows: np.ndarray  # (n, T, N)
    labels: np.ndarray  # (n,) int
    num_classes: int
    splits: np.ndarray | None = None  # (n,) of "train" / "val" / "test"
    class_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def window_length(self) -> int:
        return int(self.windows.shape[1])

    @property
    def num_sensors(self) -> int:
        return int(self.windows.shape[2])

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Windows and labels tagged ``name``, in dataset order."""
        if self.splits is None:
            raise ValueError("dataset has no split assignment; call split_dataset first")
        idx = np.flatnonzero(self.splits == name)
        return self.windows[idx], self.labels[idx]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray  # per sensor
    std: np.ndarray  # per sensor, floored


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 4
    num_sensors: int = 8
    window_length: int = 128
    samples_per_class: int = 200
    base_frequencies: tuple[float, ...] = (8.0, 23.0, 41.0)  # Hz, class 0
    base_amplitudes: tuple[float, ...] = (1.0, 0.7, 0.5)
    frequency_shift: float = 0.06  # class c uses base * (1 - shift * c)
    amplitude_shift: float = 0.15  # class c uses base * (1 + shift * c)
    spatial_weights: tuple[tuple[float, ...], ...] | None = None  # modes × sensors
    noise_std: float = 0.3
    sample_rate_hz: float = 200.0
    seed: int = 0

    def class_frequencies(self, c: int) -> tuple[float, ...]:
        return tuple(f * (1.0 - self.frequency_shift * c) for f in self.base_frequencies)

    def class_amplitudes(self, c: int) -> tuple[float, ...]:
        return tuple(a * (1.0 + self.amplitude_shift * c) for a in self.base_amplitudes)


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    num_sensors: int
    window_length: int
    num_classes: int
    conv_filters: tuple[int, ...] = ()
    conv_kernel: int = 5
    conv_bias: bool = True
    sensor_band: int | None = None  # CNN baseline: sensors covered by one kernel
    rnn_hidden: tuple[int, ...] = ()
    dense_sizes: tuple[int, ...] = ()  # hidden dense widths before the output layer
    seed: int = 0
    memory_bias: bool = True  # log-uniform keep-gate biases instead of zeros
    window_stride: int | None = None  # data layout the weights were trained on
    split_seed: int | None = None


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    shuffle: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # N_c×N_c, rows true class, cols predicted

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    support: tuple[int, ...] = ()
    undefined: list[str] = field(default_factory=list)  # metric cells that were 0/0

    def metric(self, name: str) -> float:
        """Headline value by name: accuracy or a macro average."""
        if name == "accuracy":
            return self.accuracy
        if name in ("precision", "recall", "f1"):
            return getattr(self, f"macro_{name}")
        raise ValueError(f"unknown metric '{name}'")


@dataclass
class SweepCell:
    """Headline metric of every repeat of one (architecture, setting) pair."""

    model: str
    setting: str
    metric: str
    values: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class SweepSummary:
    model: str
    setting: str
    metric: str
    mean: float
    std: float | None  # None when fewer than two repeats
    n: int


@dataclass(frozen=True)
class SweepGrid:
    """Architectures crossed with layer-width settings, each run ``repeats`` times."""

    archs: tuple[str, ...] = ARCHITECTURES
    settings: tuple[tuple[int, ...], ...] = ((64, 64), (64, 64, 64), (64, 64, 64, 64), (64, 64, 64, 64, 64))
    labels: tuple[str, ...] = ("2 layers", "3 layers", "4 layers", "5 layers")
    repeats: int = 10
    epochs: int = 30
    metric: str = "accuracy"
    learning_rate: float = 0.001
    batch_size: int = 64
    seed: int = 0


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    seeds: int
    max_error: float  # worst relative error over every seed and entry
    passed: bool
