"""Trial records, the interchange CSV, preprocessing and cross-validation folds.

Interchange CSV (UTF-8, LF, '.' decimals), one row per trial::

    subject_id,task,fmma_ue,sample_rate,unit_pos,unit_ang,n_samples[,impairment],
    ch0_t0,...,ch0_t{M-1},ch1_t0,...,ch8_t{M-1}

``M`` is the longest recording in the file; shorter rows leave their trailing
cells empty. ``fmma_ue`` is blank for controls. The optional ``impairment``
column is only written when some trial's label cannot be derived from its
score (synthetic trials carry no score). Channel order is fixed by
:data:`CHANNELS`.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import MalformedRowError, ParameterError, SchemaError, StratificationError
from .numerics.rng import SeededRng

log = logging.getLogger(__name__)

TASKS = ("T02", "T03", "T04", "T06", "T08", "T10", "T16", "T18", "T19", "T28")
TASK_NAMES = {
    "T02": "Distal Thumb Down",
    "T03": "Overhead",
    "T04": "Lateral",
    "T06": "Distal Palm Up",
    "T08": "Stop Gesture",
    "T10": "Hand to Mouth",
    "T16": "Grab and Bite Apple",
    "T18": "Move Cup",
    "T19": "Move Tray",
    "T28": "Move Tennis Ball",
}
IMPAIRMENTS = ("Control", "Mild", "ModerateSevere")
CHANNELS = (
    "t8_pos_x", "t8_pos_y", "t8_pos_z", "t8_ori_z",
    "shoulder_x", "shoulder_y", "shoulder_z", "elbow_x", "elbow_y",
)
POSITION_CHANNELS = (0, 1, 2)
ANGLE_CHANNELS = (3, 4, 5, 6, 7, 8)
N_CHANNELS = 9
N_SAMPLES = 300
SAMPLE_RATE = 60.0
FMMA_THRESHOLD = 42
SYNTHETIC = "synthetic"

TASK_VOCAB = {t: i for i, t in enumerate(TASKS)}
CONDITION_VOCAB = {(t, imp): i * len(IMPAIRMENTS) + j
                   for i, t in enumerate(TASKS) for j, imp in enumerate(IMPAIRMENTS)}
CONDITIONS = tuple(CONDITION_VOCAB)

HEADER = ("subject_id", "task", "fmma_ue", "sample_rate", "unit_pos", "unit_ang", "n_samples")
POSITION_UNITS = {"m": 100.0, "cm": 1.0}
ANGLE_UNITS = {"deg": math.pi / 180.0, "rad": 1.0}


def categorize_impairment(fmma_ue: int | None) -> str:
    if fmma_ue is None:
        return "Control"
    if not 0 <= fmma_ue <= 66:
        raise ValueError(f"FMMA-UE score {fmma_ue} outside [0, 66]")
    return "Mild" if fmma_ue > FMMA_THRESHOLD else "ModerateSevere"


def condition_label(index: int) -> tuple[str, str]:
    if not 0 <= index < len(CONDITIONS):
        raise IndexError(f"condition index {index} outside [0, {len(CONDITIONS)})")
    return CONDITIONS[index]


def parse_condition(text: str) -> int:
    """``"T16/ModerateSevere"`` -> condition index."""
    try:
        task, imp = text.split("/")
        return CONDITION_VOCAB[(task, imp)]
    except (ValueError, KeyError):
        raise ValueError(
            f"unknown class {text!r}; expected TASK/IMPAIRMENT with TASK in {TASKS} "
            f"and IMPAIRMENT in {IMPAIRMENTS}"
        ) from None


@dataclass
class Trial:
    subject_id: str
    task: str
    impairment: str
    signal: np.ndarray
    fmma_ue: int | None = None
    sample_rate: float = SAMPLE_RATE
    unit_pos: str = "cm"
    unit_ang: str = "rad"

    @property
    def task_index(self) -> int:
        return TASK_VOCAB[self.task]

    @property
    def condition_index(self) -> int:
        return CONDITION_VOCAB[(self.task, self.impairment)]

    @property
    def provenance(self) -> str:
        return "synthetic" if self.subject_id == SYNTHETIC else "real"


@dataclass
class Dataset:
    trials: list[Trial] = field(default_factory=list)
    skipped: int = 0

    task_vocab = TASK_VOCAB
    condition_vocab = CONDITION_VOCAB

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __getitem__(self, i):
        return self.trials[i]

    def signals(self) -> np.ndarray:
        if not self.trials:
            return np.zeros((0, N_CHANNELS, N_SAMPLES))
        return np.stack([t.signal for t in self.trials])

    def task_labels(self) -> np.ndarray:
        return np.array([t.task_index for t in self.trials], dtype=np.int64)

    def condition_labels(self) -> np.ndarray:
        return np.array([t.condition_index for t in self.trials], dtype=np.int64)

    def subset(self, indices) -> Dataset:
        return Dataset([self.trials[i] for i in indices])

    def counts(self) -> dict[tuple[str, str], int]:
        c = Counter((t.task, t.impairment) for t in self.trials)
        return {k: c[k] for k in CONDITIONS if c[k]}

    def __add__(self, other: Dataset) -> Dataset:
        return Dataset(self.trials + other.trials)


# preprocessing


def crop_or_pad(raw: np.ndarray, length: int = N_SAMPLES) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.shape[-1]
    if n == 0:
        raise ParameterError("empty trial (0 samples)")
    if n >= length:
        return raw[..., :length].copy()
    tail = np.repeat(raw[..., -1:], length - n, axis=-1)
    return np.concatenate([raw, tail], axis=-1)


def normalize_units(trial: Trial) -> Trial:
    """Positions become cm displacement from the first sample; angles become radians."""
    if trial.unit_pos not in POSITION_UNITS:
        raise SchemaError(f"undeclared position unit {trial.unit_pos!r}; use one of {sorted(POSITION_UNITS)}")
    if trial.unit_ang not in ANGLE_UNITS:
        raise SchemaError(f"undeclared angle unit {trial.unit_ang!r}; use one of {sorted(ANGLE_UNITS)}")
    sig = np.array(trial.signal, dtype=np.float64)
    pos = list(POSITION_CHANNELS)
    sig[pos] = (sig[pos] - sig[pos, :1]) * POSITION_UNITS[trial.unit_pos]
    ang = list(ANGLE_CHANNELS)
    if trial.unit_ang != "rad":
        sig[ang] = sig[ang] * ANGLE_UNITS[trial.unit_ang]
    return replace(trial, signal=sig, unit_pos="cm", unit_ang="rad")


def preprocess(trial: Trial) -> Trial:
    t = normalize_units(trial)
    t = replace(t, signal=crop_or_pad(t.signal))
    if not np.all(np.isfinite(t.signal)):
        raise ParameterError(f"non-finite samples in trial of subject {trial.subject_id}")
    return t


# interchange CSV


def _channel_columns(n: int) -> list[str]:
    return [f"ch{k}_t{j}" for k in range(N_CHANNELS) for j in range(n)]


def _parse_header(header: list[str]) -> tuple[bool, int]:
    missing = [c for c in HEADER if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    if list(header[: len(HEADER)]) != list(HEADER):
        raise SchemaError(f"header must start with {','.join(HEADER)}")
    rest = header[len(HEADER):]
    has_impairment = bool(rest) and rest[0] == "impairment"
    if has_impairment:
        rest = rest[1:]
    if len(rest) % N_CHANNELS:
        raise SchemaError(f"{len(rest)} channel columns is not a multiple of {N_CHANNELS}")
    m = len(rest) // N_CHANNELS
    if rest != _channel_columns(m):
        raise SchemaError("channel columns must be ch<k>_t<j>, k = 0..8 blocks, j = 0..M-1")
    return has_impairment, m


def _parse_row(row: list[str], line: int, has_impairment: bool, m: int, width: int):
    if len(row) != width:
        raise MalformedRowError(line, f"expected {width} fields, found {len(row)}")
    subject, task, fmma, rate, unit_pos, unit_ang, n_samples = row[:7]
    try:
        fmma_ue = int(fmma) if fmma.strip() else None
        sample_rate = float(rate)
        n = int(n_samples)
    except ValueError as exc:
        raise MalformedRowError(line, str(exc)) from None
    if not 1 <= n <= m:
        raise MalformedRowError(line, f"n_samples={n} outside [1, {m}]")
    if sample_rate != SAMPLE_RATE:
        raise MalformedRowError(line, f"sample_rate {sample_rate} Hz unsupported (expected {SAMPLE_RATE})")
    try:
        derived = categorize_impairment(fmma_ue)
    except ValueError as exc:
        raise MalformedRowError(line, str(exc)) from None
    offset = 7
    impairment = derived
    if has_impairment:
        stated = row[7]
        offset = 8
        if stated:
            if stated not in IMPAIRMENTS:
                raise MalformedRowError(line, f"unknown impairment {stated!r}")
            if fmma_ue is not None and stated != derived:
                raise MalformedRowError(line, f"impairment {stated} contradicts FMMA-UE {fmma_ue}")
            impairment = stated
    cells = np.array(row[offset:], dtype=object).reshape(N_CHANNELS, m)
    used, unused = cells[:, :n], cells[:, n:]
    if any(c != "" for c in unused.ravel()):
        raise MalformedRowError(line, f"values beyond n_samples={n}")
    try:
        sig = np.array([[float(v) for v in ch] for ch in used])
    except ValueError as exc:
        raise MalformedRowError(line, f"bad sample value ({exc})") from None
    if not np.all(np.isfinite(sig)):
        raise MalformedRowError(line, "non-finite sample value")
    return Trial(subject, task, impairment, sig, fmma_ue, sample_rate, unit_pos.strip(), unit_ang.strip())


def read_trials(path) -> tuple[list[Trial], int]:
    """Parse the interchange file without preprocessing. Returns (trials, skipped_unknown_task)."""
    trials, skipped = [], 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        has_imp, m = _parse_header(header)
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) > 1 and row[1] not in TASK_VOCAB:
                if len(row) != len(header):
                    raise MalformedRowError(line, f"expected {len(header)} fields, found {len(row)}")
                skipped += 1
                continue
            trial = _parse_row(row, line, has_imp, m, len(header))
            if trial.unit_pos not in POSITION_UNITS or trial.unit_ang not in ANGLE_UNITS:
                raise SchemaError(
                    f"line {line}: undeclared units {trial.unit_pos!r}/{trial.unit_ang!r}"
                )
            trials.append(trial)
    return trials, skipped


def ingest(path) -> Dataset:
    trials, skipped = read_trials(path)
    if skipped:
        log.info("dropped %d trial(s) with tasks outside the selected ten", skipped)
    ds = Dataset([preprocess(t) for t in trials], skipped=skipped)
    return ds


def _fmt(v: float) -> str:
    return repr(float(v))


def export(dataset: Dataset, path) -> None:
    trials = list(dataset)
    m = max((t.signal.shape[1] for t in trials), default=N_SAMPLES)
    need_imp = any(categorize_impairment(t.fmma_ue) != t.impairment for t in trials)
    header = list(HEADER) + (["impairment"] if need_imp else []) + _channel_columns(m)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in trials:
            n = t.signal.shape[1]
            row = [t.subject_id, t.task, "" if t.fmma_ue is None else str(t.fmma_ue),
                   _fmt(t.sample_rate), t.unit_pos, t.unit_ang, str(n)]
            if need_imp:
                row.append(t.impairment)
            for ch in t.signal:
                row.extend(_fmt(v) for v in ch)
                row.extend([""] * (m - n))
            writer.writerow(row)


# folds


@dataclass
class SplitPlan:
    n_folds: int
    assignments: np.ndarray
    strategy: str
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def make_folds(dataset: Dataset, n_folds: int = 5, strategy: str = "trial_stratified",
               seed: int = 0) -> SplitPlan:
    if n_folds < 2:
        raise ParameterError(f"need at least 2 folds, got {n_folds}")
    rng = SeededRng(seed)
    assignments = np.full(len(dataset), -1, dtype=np.int64)
    if strategy == "trial_stratified":
        labels = dataset.condition_labels()
        counts = Counter(labels.tolist())
        deficient = {"/".join(CONDITIONS[c]): k for c, k in counts.items() if k < n_folds}
        if deficient:
            raise StratificationError(deficient, n_folds)
        nxt = 0
        for c in sorted(counts):
            members = np.flatnonzero(labels == c)
            members = members[rng.spawn(c).permutation(len(members))]
            for m in members:
                assignments[m] = nxt
                nxt = (nxt + 1) % n_folds
    elif strategy == "subject_wise":
        by_subject: dict[str, list[int]] = {}
        for i, t in enumerate(dataset):
            by_subject.setdefault(t.subject_id, []).append(i)
        if len(by_subject) < n_folds:
            raise StratificationError({"subjects": len(by_subject)}, n_folds)
        subjects = sorted(by_subject)
        subjects = [subjects[i] for i in rng.permutation(len(subjects))]
        subjects.sort(key=lambda s: -len(by_subject[s]))  # stable: ties keep shuffled order
        load = np.zeros(n_folds, dtype=np.int64)
        for s in subjects:
            f = int(np.argmin(load))
            assignments[by_subject[s]] = f
            load[f] += len(by_subject[s])
    else:
        raise ParameterError(f"unknown split strategy {strategy!r}")
    return SplitPlan(n_folds, assignments, strategy, seed)


def subsample_per_class(dataset: Dataset, per_class: int, seed: int) -> Dataset:
    """Keep at most ``per_class`` trials of each condition, chosen with a seeded shuffle."""
    labels = dataset.condition_labels()
    rng = SeededRng(seed)
    keep = []
    for c in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == c)
        members = members[rng.spawn(c).permutation(len(members))][:per_class]
        keep.extend(sorted(members.tolist()))
    return dataset.subset(sorted(keep))


@dataclass
class ChannelScaler:
    """Per-channel affine map ``(x - offset) / scale`` fitted on a stack of trials."""

    offset: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, signals: np.ndarray) -> ChannelScaler:
        offset = signals.mean(axis=(0, 2))
        scale = signals.std(axis=(0, 2))
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(offset, scale)

    @classmethod
    def identity(cls, n_channels: int = N_CHANNELS) -> ChannelScaler:
        return cls(np.zeros(n_channels), np.ones(n_channels))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.offset[:, None]) / self.scale[:, None]

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x * self.scale[:, None] + self.offset[:, None]

    def to_dict(self) -> dict:
        return {"offset": self.offset.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> ChannelScaler:
        return cls(np.array(d["offset"], dtype=np.float64), np.array(d["scale"], dtype=np.float64))
