"""Deterministic synthetic reaching dataset for exercising the pipeline.

Each trial is one or two smooth reach-and-return movements. Tasks fix which
channels move, in which direction and with which bump shape; impairment
scales trunk displacement up and arm joint range down and slows the
movement, the compensation pattern seen in post-stroke reaching. Raw trials
are emitted in metres and degrees with absolute offsets and varying lengths
so ingestion exercises unit conversion and crop/pad.
"""

from __future__ import annotations

import numpy as np

from .data import (
    ANGLE_CHANNELS,
    IMPAIRMENTS,
    N_CHANNELS,
    SAMPLE_RATE,
    TASK_VOCAB,
    Dataset,
    Trial,
    preprocess,
)
from .numerics.rng import SeededRng

TRUNK_GAIN = {"Control": 1.0, "Mild": 1.8, "ModerateSevere": 2.6}
ARM_GAIN = {"Control": 1.0, "Mild": 0.8, "ModerateSevere": 0.6}
SLOWING = {"Control": 1.0, "Mild": 1.15, "ModerateSevere": 1.3}
FMMA_RANGE = {"Mild": (43, 60), "ModerateSevere": (21, 42)}
SUBJECTS_PER_GROUP = 5

DEFAULT_TASKS = ("T02", "T03", "T04", "T16")


def _task_profile(task: str) -> dict:
    rng = SeededRng(7_000 + TASK_VOCAB[task])
    amp = np.empty(N_CHANNELS)
    amp[:3] = rng.uniform(3, 1.5, 9.0)
    amp[3] = rng.uniform(None, 3.0, 12.0)  # trunk rotation, deg
    amp[4:] = rng.uniform(5, 15.0, 60.0)
    amp *= np.where(rng.random(N_CHANNELS) < 0.5, -1.0, 1.0)
    return {
        "amp": amp,
        "biphasic": rng.random(N_CHANNELS) < 0.35,
        "reaches": 2 if TASK_VOCAB[task] % 3 == 2 else 1,
        "duration": float(rng.uniform(1, 1.6, 2.6)[0]),
        "offset_deg": rng.uniform(N_CHANNELS, -40.0, 80.0),
        "offset_m": rng.uniform(3, 0.0, 1.3),
    }


def _bump(t, start, dur, biphasic):
    u = np.clip((t - start) / dur, 0.0, 1.0)
    if biphasic:
        return 1.3 * np.sin(2 * np.pi * u) * np.sin(np.pi * u)
    return np.sin(np.pi * u) ** 2


def make_trial(task: str, impairment: str, index: int, seed: int) -> Trial:
    prof = _task_profile(task)
    rng = SeededRng(seed).spawn(TASK_VOCAB[task], IMPAIRMENTS.index(impairment), index)
    n = int(rng.integers(240, 421))
    t = np.arange(n) / SAMPLE_RATE
    slow = SLOWING[impairment]
    dur = prof["duration"] * slow * rng.uniform(None, 0.9, 1.1)
    onset = rng.uniform(None, 0.2, 0.6)
    gain = np.ones(N_CHANNELS)
    gain[:4] = TRUNK_GAIN[impairment]
    gain[4:] = ARM_GAIN[impairment]
    jitter = rng.normal(N_CHANNELS, 1.0, 0.15)
    sig = np.zeros((N_CHANNELS, n))
    for r in range(prof["reaches"]):
        start = onset + r * dur * 1.1
        for c in range(N_CHANNELS):
            sig[c] += prof["amp"][c] * gain[c] * jitter[c] * _bump(t, start, dur, prof["biphasic"][c])
    # slow drift, a few percent of the channel amplitude
    for c in range(N_CHANNELS):
        f = rng.uniform(None, 0.15, 0.6)
        ph = rng.uniform(None, 0, 2 * np.pi)
        sig[c] += 0.04 * abs(prof["amp"][c]) * (np.sin(2 * np.pi * f * t + ph) - np.sin(ph))
    sig[:3] = sig[:3] / 100.0 + prof["offset_m"][:, None]
    ang = list(ANGLE_CHANNELS)
    sig[ang] += prof["offset_deg"][ang, None]

    group = {"Control": "C", "Mild": "M", "ModerateSevere": "S"}[impairment]
    subj = index % SUBJECTS_PER_GROUP
    fmma = None
    if impairment != "Control":
        lo, hi = FMMA_RANGE[impairment]
        fmma = int(SeededRng(seed).spawn(99, IMPAIRMENTS.index(impairment), subj).integers(lo, hi + 1))
    return Trial(f"toy_{group}{subj + 1:02d}", task, impairment, sig, fmma,
                 SAMPLE_RATE, unit_pos="m", unit_ang="deg")


def make_toy_trials(tasks=DEFAULT_TASKS, impairments=IMPAIRMENTS, per_class: int = 20,
                    seed: int = 0) -> list[Trial]:
    """Raw (unpreprocessed) trials, ``per_class`` for every (task, impairment) pair."""
    return [make_trial(task, imp, i, seed)
            for task in tasks for imp in impairments for i in range(per_class)]


def make_toy_fixture(tasks=DEFAULT_TASKS, impairments=IMPAIRMENTS, per_class: int = 20,
                     seed: int = 0) -> Dataset:
    return Dataset([preprocess(t) for t in make_toy_trials(tasks, impairments, per_class, seed)])


# Three well-separated classes and the GAN settings that train on them in about a minute.
# The library defaults (lr 2e-4, batch 32, 2000 epochs) are meant for real data.
TOY_CLASSES = (("T02", "Control"), ("T03", "Control"), ("T04", "Control"))
TOY_GAN_OVERRIDES = {"epochs": 150, "batch_size": 16, "lr_g": 1e-3}


def make_toy_classes(classes=TOY_CLASSES, per_class: int = 20, seed: int = 0) -> Dataset:
    return Dataset([preprocess(make_trial(task, imp, i, seed))
                    for task, imp in classes for i in range(per_class)])

# The augmentation experiment: one task at three impairment levels, condition target,
# about 24 real training trials per fold. A smaller GAN trained for more steps
# conditions reliably at that size. The logging probe uses its own random stream, so
# shrinking it saves time without changing the trained weights.
AUGMENT_CLASSES = (("T16", "Control"), ("T16", "Mild"), ("T16", "ModerateSevere"))
AUGMENT_GAN_OVERRIDES = {"epochs": 300, "batch_size": 8, "lr_g": 1e-3, "gen_filters": (16, 16),
                         "disc_filters": (8, 16), "disc_features": 32, "probe_size": 6}
AUGMENT_FCN_OVERRIDES = {"target": "condition", "epochs": 40}
