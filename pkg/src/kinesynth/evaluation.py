"""Cross-validated real-only vs augmented comparison.

Metrics aggregate per-class precision, recall and F1 by support-weighted
averaging, so weighted recall coincides with accuracy. Paired t-tests use the
Student-t tail written in terms of the regularized incomplete beta function

    p = I_x(df/2, 1/2),  x = df / (df + t^2)

which is evaluated with the modified Lentz continued fraction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cgan, classifier
from .data import CONDITIONS, SYNTHETIC, TASKS, Dataset, SplitPlan
from .errors import DegenerateInputError, DimensionError, KinesynthError, ParameterError

SCHEMA_VERSION = 1
METRICS = ("precision", "recall", "f1", "accuracy")
REAL_ONLY = "real_only"
AUGMENTED = "augmented"


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise DimensionError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ParameterError("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int) -> ConfusionMatrix:
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)

    def to_csv(self, path, labels) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\predicted", *labels])
            for name, row in zip(labels, self.counts):
                w.writerow([name, *row.tolist()])


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num))
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def per_class(cm: ConfusionMatrix) -> dict[str, np.ndarray]:
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    precision = _ratio(tp, c.sum(axis=0))
    recall = _ratio(tp, c.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return {"precision": precision, "recall": recall, "f1": f1}


def metrics(cm: ConfusionMatrix) -> dict[str, float]:
    total = cm.total
    if total == 0:
        raise DegenerateInputError("metrics of an empty confusion matrix")
    support = cm.support().astype(np.float64)
    out = {k: float(math.fsum(support * v) / total) for k, v in per_class(cm).items()}
    out["accuracy"] = int(np.trace(cm.counts)) / total
    return out


# Student t


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 500) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ParameterError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"betainc needs x in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast on the side x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed(t: float, df: float) -> float:
    if df <= 0:
        raise ParameterError("degrees of freedom must be positive")
    if t == 0:
        return 1.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    df: int


def paired_t_test(a, b) -> TTest:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"paired samples must be 1-d of equal length, got {a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise DegenerateInputError("paired t-test needs at least 2 pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    # differences equal up to rounding (e.g. 0.7-0.6 vs 0.8-0.7) count as constant
    if sd <= 8 * np.finfo(float).eps * float(np.max(np.abs(d))):
        raise DegenerateInputError("paired differences have zero variance")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    return TTest(t, student_t_two_tailed(t, n - 1), n - 1)


# cross-validation


@dataclass
class FoldResult:
    fold: int
    metrics: dict
    confusion: ConfusionMatrix
    n_train: int
    n_synthetic: int
    n_test: int


@dataclass
class ConditionResult:
    condition: str
    folds: list[FoldResult] = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([f.metrics[metric] for f in self.folds])

    def mean(self) -> dict:
        return {m: float(np.mean(self.values(m))) for m in METRICS}

    def std(self) -> dict:
        ddof = 1 if len(self.folds) > 1 else 0
        return {m: float(np.std(self.values(m), ddof=ddof)) for m in METRICS}

    def pooled_confusion(self) -> ConfusionMatrix:
        total = self.folds[0].confusion
        for f in self.folds[1:]:
            total = total + f.confusion
        return total


def class_labels(target: str) -> list[str]:
    return list(TASKS) if target == "task" else [f"{t}/{i}" for t, i in CONDITIONS]


def _augment(train: Dataset, n_synthetic: int, reference_labels, gan_cfg: cgan.GanConfig,
             seed: int) -> Dataset:
    model, _ = cgan.train(train, gan_cfg)
    return cgan.generate_like(model, reference_labels, n_synthetic, seed)


def run_condition(dataset: Dataset, plan: SplitPlan, gan_cfg: cgan.GanConfig | None,
                  fcn_cfg: classifier.FcnConfig, condition: str, progress=None) -> ConditionResult:
    """Train and test the classifier on every fold under one condition.

    In the augmented condition a GAN is trained on the fold's real training
    trials only and contributes ``len(dataset)`` synthetic trials whose class
    mix follows the full real dataset.
    """
    if condition not in (REAL_ONLY, AUGMENTED):
        raise ParameterError(f"condition must be {REAL_ONLY!r} or {AUGMENTED!r}, got {condition!r}")
    if condition == AUGMENTED and gan_cfg is None:
        raise ParameterError("the augmented condition needs a GAN config")
    if len(plan.assignments) != len(dataset):
        raise ParameterError("split plan does not match the dataset size")
    if any(t.provenance == SYNTHETIC for t in dataset):
        raise ParameterError("cross-validation data must be real trials only")
    n_classes = fcn_cfg.n_classes
    all_labels = dataset.condition_labels()
    result = ConditionResult(condition)
    for fold in range(plan.n_folds):
        try:
            train = dataset.subset(plan.train_indices(fold))
            test = dataset.subset(plan.test_indices(fold))
            n_syn = 0
            if condition == AUGMENTED:
                n_syn = len(dataset)
                fold_gan = replace(gan_cfg, seed=gan_cfg.seed + 1009 * fold)
                synthetic = _augment(train, n_syn, all_labels, fold_gan, seed=gan_cfg.seed + 7919 * fold)
                if len(synthetic) != n_syn:
                    raise KinesynthError(f"expected {n_syn} synthetic trials, got {len(synthetic)}")
                train = train + synthetic
                if len(train) != len(plan.train_indices(fold)) + n_syn:
                    raise KinesynthError("augmented training set has the wrong size")
            if any(t.provenance == SYNTHETIC for t in test):
                raise KinesynthError("synthetic trial found in a test fold")
            model, _ = classifier.train_classifier(train, fcn_cfg)
            y_pred, _ = classifier.predict(model, test)
            y_true = classifier.labels_for(test, fcn_cfg.target)
            cm = ConfusionMatrix.from_predictions(y_true, y_pred, n_classes)
        except KinesynthError as exc:
            raise type(exc)(f"{condition} fold {fold}: {exc}") from exc
        fr = FoldResult(fold, metrics(cm), cm, len(train), n_syn, len(test))
        result.folds.append(fr)
        if progress is not None:
            progress(condition, fr)
    return result


@dataclass
class CvReport:
    conditions: dict[str, ConditionResult]
    target: str
    split: dict
    configs: dict

    def t_tests(self) -> dict:
        if set(self.conditions) != {REAL_ONLY, AUGMENTED}:
            return {}
        out = {}
        for m in METRICS:
            try:
                r = paired_t_test(self.conditions[AUGMENTED].values(m), self.conditions[REAL_ONLY].values(m))
                out[m] = {"t": r.t, "p": r.p, "df": r.df}
            except DegenerateInputError as exc:
                out[m] = {"t": None, "p": None, "df": None, "note": str(exc)}
        return out

    def to_dict(self) -> dict:
        conds = {}
        for name, res in self.conditions.items():
            conds[name] = {
                "folds": [{"fold": f.fold, "metrics": f.metrics, "n_train": f.n_train,
                           "n_synthetic": f.n_synthetic, "n_test": f.n_test} for f in res.folds],
                "mean": res.mean(),
                "std": res.std(),
                "confusion": res.pooled_confusion().counts.tolist(),
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "target": self.target,
            "class_labels": class_labels(self.target),
            "conditions": conds,
            "paired_t_tests": self.t_tests(),
            "split": self.split,
            "configs": self.configs,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write_confusions(self, directory) -> list[Path]:
        paths = []
        for name, res in self.conditions.items():
            p = Path(directory) / f"confusion_{name}.csv"
            res.pooled_confusion().to_csv(p, class_labels(self.target))
            paths.append(p)
        return paths


def run_experiment(dataset: Dataset, plan: SplitPlan, gan_cfg: cgan.GanConfig,
                   fcn_cfg: classifier.FcnConfig, conditions=(REAL_ONLY, AUGMENTED),
                   progress=None) -> CvReport:
    """Both conditions over the same folds and classifier seed, so fold pairs are comparable."""
    if isinstance(conditions, str):
        conditions = (conditions,)
    results = {c: run_condition(dataset, plan, gan_cfg, fcn_cfg, c, progress) for c in conditions}
    return CvReport(
        results,
        fcn_cfg.target,
        {"n_folds": plan.n_folds, "strategy": plan.strategy, "seed": plan.seed,
         "assignments": plan.assignments.tolist()},
        {"gan": gan_cfg.to_dict() if gan_cfg is not None else None, "fcn": fcn_cfg.to_dict()},
    )
