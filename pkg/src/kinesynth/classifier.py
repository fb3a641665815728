"""Fully convolutional task classifier.

conv(relu) -> maxpool -> conv(relu) -> maxpool -> flatten -> dense(relu)
-> dropout -> dense -> softmax, trained with Adam on sparse categorical
cross-entropy. The target is the 10 task labels, or the 30 task x impairment
conditions when ``target == "condition"``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import CONDITIONS, N_CHANNELS, N_SAMPLES, TASKS, Dataset
from .errors import DimensionError, ParameterError, TrainingDivergedError
from .numerics import (
    Adam,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    MaxPool1d,
    ReLU,
    SeededRng,
    Sequential,
    Softmax,
    sparse_categorical_cross_entropy,
    sparse_categorical_cross_entropy_grad,
)
from .numerics import container

SCHEMA_VERSION = 1


@dataclass
class FcnConfig:
    conv1_filters: int = 32
    conv1_kernel: int = 7
    pool1: int = 2
    conv2_filters: int = 64
    conv2_kernel: int = 5
    pool2: int = 2
    dense_units: int = 128
    dropout: float = 0.5
    target: str = "task"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 60
    seed: int = 0

    @property
    def n_classes(self) -> int:
        return len(TASKS) if self.target == "task" else len(CONDITIONS)

    def validate(self) -> None:
        dims = [self.conv1_filters, self.conv1_kernel, self.pool1, self.conv2_filters,
                self.conv2_kernel, self.pool2, self.dense_units, self.batch_size]
        if any(int(d) <= 0 for d in dims):
            raise ParameterError(f"all FCN dimensions must be positive: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.target not in ("task", "condition"):
            raise ParameterError(f"target must be 'task' or 'condition', got {self.target!r}")
        if (N_SAMPLES // self.pool1) // self.pool2 < 1:
            raise ParameterError("pooling leaves no time steps")
        if self.epochs < 0 or self.lr <= 0:
            raise ParameterError("epochs must be >= 0 and lr > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> FcnConfig:
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown FCN config keys: {sorted(unknown)}")
        return cls(**d)


def flat_width(cfg: FcnConfig) -> int:
    return cfg.conv2_filters * ((N_SAMPLES // cfg.pool1) // cfg.pool2)


def fcn_param_count(cfg: FcnConfig) -> int:
    f1, f2, h = cfg.conv1_filters, cfg.conv2_filters, cfg.dense_units
    return (f1 * N_CHANNELS * cfg.conv1_kernel + f1 + f2 * f1 * cfg.conv2_kernel + f2
            + flat_width(cfg) * h + h + h * cfg.n_classes + cfg.n_classes)


def build_fcn(cfg: FcnConfig, rng: SeededRng | None = None) -> Sequential:
    cfg.validate()
    rng = rng or SeededRng(cfg.seed).spawn(1)
    return Sequential([
        ("conv1", Conv1d(N_CHANNELS, cfg.conv1_filters, cfg.conv1_kernel, "same", rng.spawn(0))),
        ("relu1", ReLU()),
        ("pool1", MaxPool1d(cfg.pool1)),
        ("conv2", Conv1d(cfg.conv1_filters, cfg.conv2_filters, cfg.conv2_kernel, "same", rng.spawn(1))),
        ("relu2", ReLU()),
        ("pool2", MaxPool1d(cfg.pool2)),
        ("flatten", Flatten()),
        ("dense", Dense(flat_width(cfg), cfg.dense_units, rng.spawn(2))),
        ("relu3", ReLU()),
        ("dropout", Dropout(cfg.dropout, rng.spawn(3))),
        ("out", Dense(cfg.dense_units, cfg.n_classes, rng.spawn(4))),
        ("softmax", Softmax()),
    ])


@dataclass
class FcnModel:
    config: FcnConfig
    net: Sequential

    def save(self, path) -> tuple[Path, Path]:
        path = Path(path)
        container.save_params(path.with_suffix(".ksn"), self.net.params())
        meta = {"schema_version": SCHEMA_VERSION, "kind": "fcn", "config": self.config.to_dict()}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path.with_suffix(".ksn"), path.with_suffix(".json")

    @classmethod
    def load(cls, path) -> FcnModel:
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        if meta.get("kind") != "fcn":
            raise ParameterError(f"{path}: sidecar does not describe an FCN model")
        cfg = FcnConfig.from_dict(meta["config"])
        model = cls(cfg, build_fcn(cfg))
        container.load_params(path.with_suffix(".ksn"), model.net.params())
        return model


def labels_for(dataset: Dataset, target: str) -> np.ndarray:
    return dataset.task_labels() if target == "task" else dataset.condition_labels()


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class
    return np.argmax(probs, axis=1)


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    return int((y_true == y_pred).sum()) / len(y_true)


def _check_input(X):
    if X.ndim != 3 or X.shape[1:] != (N_CHANNELS, N_SAMPLES):
        raise DimensionError(f"classifier input must be (batch, {N_CHANNELS}, {N_SAMPLES}), got {X.shape}")


def predict_proba(model: FcnModel, X: np.ndarray, batch: int = 256) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    _check_input(X)
    if len(X) == 0:
        return np.zeros((0, model.config.n_classes))
    return np.concatenate([model.net.forward(X[i:i + batch], training=False)
                           for i in range(0, len(X), batch)])


def predict(model: FcnModel, trials) -> tuple[np.ndarray, np.ndarray]:
    """Class indices (ties to the lowest index) and probability rows."""
    X = trials.signals() if isinstance(trials, Dataset) else np.asarray(trials)
    probs = predict_proba(model, X)
    return argmax_lowest(probs), probs


@dataclass
class ClassifierLog:
    rows: list[dict] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "accuracy"])
            for r in self.rows:
                w.writerow([r["epoch"], repr(float(r["loss"])), repr(float(r["accuracy"]))])


def fit(X: np.ndarray, y: np.ndarray, cfg: FcnConfig, progress=None) -> tuple[FcnModel, ClassifierLog]:
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_input(X)
    if len(X) == 0:
        raise ParameterError("empty training set")
    if not np.all(np.isfinite(X)):
        raise ParameterError("training inputs contain non-finite values")
    if y.min() < 0 or y.max() >= cfg.n_classes:
        raise ParameterError(f"labels must lie in [0, {cfg.n_classes})")
    root = SeededRng(cfg.seed)
    net = build_fcn(cfg, root.spawn(1))
    opt = Adam(list(net.params().values()), lr=cfg.lr)
    shuffle = root.spawn(2)
    log = ClassifierLog()
    n = len(X)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle.permutation(n)
        total_loss, preds = 0.0, np.empty(n, dtype=np.int64)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            probs = net.forward(X[idx], training=True)
            loss = sparse_categorical_cross_entropy(probs, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite classifier loss at epoch {epoch}",
                                            {"epoch": epoch, "inputs": X[idx], "labels": y[idx]})
            net.backward(sparse_categorical_cross_entropy_grad(probs, y[idx]))
            opt.step()
            total_loss += loss * len(idx)
            preds[idx] = argmax_lowest(probs)
        row = {"epoch": epoch, "loss": total_loss / n, "accuracy": accuracy(y, preds)}
        log.rows.append(row)
        if progress is not None:
            progress(epoch, row)
    return FcnModel(cfg, net), log


def train_classifier(train_set: Dataset, cfg: FcnConfig, progress=None) -> tuple[FcnModel, ClassifierLog]:
    return fit(train_set.signals(), labels_for(train_set, cfg.target), cfg, progress)
