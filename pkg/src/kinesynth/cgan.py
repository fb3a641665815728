"""Conditional GAN for 9 x 300 kinematic trials.

Generator: (noise ++ one-hot class) -> dense -> (coarse_channels, 25)
-> upsample x3 -> conv + leaky-relu -> upsample x4 -> conv + leaky-relu
-> conv to 9 channels (linear).

Discriminator: signal with the one-hot class broadcast as constant channels
-> [conv + leaky-relu + maxpool] x 2 -> flatten -> dense + leaky-relu
-> minibatch discrimination -> dense -> sigmoid.

The generator minimises ``-log D(fake) + lambda_spec * spectral_loss``;
the discriminator minimises BCE with real targets smoothed to 0.9.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import signal
from .data import (
    CONDITIONS,
    N_CHANNELS,
    N_SAMPLES,
    POSITION_CHANNELS,
    SAMPLE_RATE,
    SYNTHETIC,
    ChannelScaler,
    Dataset,
    Trial,
)
from .errors import DimensionError, ParameterError, TrainingDivergedError
from .numerics import (
    Adam,
    Conv1d,
    Dense,
    Flatten,
    Layer,
    LeakyReLU,
    MaxPool1d,
    Parameter,
    Reshape,
    SeededRng,
    Sequential,
    Sigmoid,
    Upsample1d,
    binary_cross_entropy,
    binary_cross_entropy_grad,
)
from .numerics import container

SCHEMA_VERSION = 1
N_CONDITIONS = len(CONDITIONS)
COARSE_LEN = 25
UPSAMPLE = (3, 4)
SPECTRAL_MODES = ("batch_mean", "paired")


@dataclass
class GanConfig:
    noise_dim: int = 64
    n_conditions: int = N_CONDITIONS
    gen_coarse_channels: int = 9
    gen_filters: tuple[int, int] = (32, 32)
    gen_kernel: int = 7
    disc_filters: tuple[int, int] = (16, 32)
    disc_kernel: int = 5
    disc_pool: int = 4
    disc_features: int = 64
    mbd_kernels: int = 16
    mbd_dim: int = 8
    leaky_slope: float = 0.2
    lambda_spec: float = 1.0
    spectral_mode: str = "batch_mean"
    batch_size: int = 32
    epochs: int = 2000
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    real_label: float = 0.9
    use_scaler: bool = True
    probe_size: int = 30
    seed: int = 0

    def validate(self) -> None:
        dims = [self.noise_dim, self.n_conditions, self.gen_coarse_channels, *self.gen_filters,
                self.gen_kernel, *self.disc_filters, self.disc_kernel, self.disc_pool,
                self.disc_features, self.mbd_kernels, self.mbd_dim, self.batch_size, self.probe_size]
        if any(int(d) <= 0 for d in dims):
            raise ParameterError(f"all GAN dimensions must be positive: {self}")
        if self.n_conditions != N_CONDITIONS:
            raise ParameterError(f"n_conditions is fixed by the label vocabulary ({N_CONDITIONS})")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if self.lambda_spec < 0:
            raise ParameterError(f"lambda_spec must be >= 0, got {self.lambda_spec}")
        if self.spectral_mode not in SPECTRAL_MODES:
            raise ParameterError(f"spectral_mode must be one of {SPECTRAL_MODES}, got {self.spectral_mode!r}")
        if self.batch_size < 2:
            raise ParameterError("batch_size must be >= 2 for minibatch discrimination")
        if (N_SAMPLES // self.disc_pool) // self.disc_pool < 1:
            raise ParameterError(f"disc_pool={self.disc_pool} leaves no time steps")
        if COARSE_LEN * math.prod(UPSAMPLE) != N_SAMPLES:
            raise ParameterError("generator upsampling must reach 300 samples")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gen_filters"] = list(self.gen_filters)
        d["disc_filters"] = list(self.disc_filters)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GanConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown GAN config keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("gen_filters", "disc_filters"):
            if k in d:
                d[k] = tuple(int(v) for v in d[k])
        return cls(**d)


def one_hot(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), n))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class MinibatchDiscrimination(Layer):
    """Cross-sample closeness features.

    With M_i = reshape(f_i @ T) of shape (kernels, dim), output feature b for
    sample i is ``sum_{j != i} exp(-||M_ib - M_jb||_1)``, appended to the input.
    With ``normalize`` the sum is divided by N - 1, which keeps the features in
    [0, 1] whatever the batch size.
    """

    def __init__(self, n_in: int, kernels: int, dim: int, rng: SeededRng | None = None,
                 normalize: bool = False):
        self.kernels, self.dim = kernels, dim
        self.normalize = normalize
        shape = (n_in, kernels * dim)
        bound = 1.0 / math.sqrt(n_in)
        self.T = Parameter(rng.uniform(shape, -bound, bound) if rng is not None else np.zeros(shape))

    def params(self):
        return {"T": self.T}

    def forward(self, x, training=False):
        n = x.shape[0]
        if n < 2:
            raise DimensionError("minibatch discrimination needs a batch of at least 2")
        if x.shape[1] != self.T.shape[0]:
            raise DimensionError(f"minibatch discrimination: input axis 1 is {x.shape[1]}, T expects {self.T.shape[0]}")
        M = (x @ self.T.value).reshape(n, self.kernels, self.dim)
        diff = M[:, None] - M[None, :]  # (N, N, B, C)
        E = np.exp(-np.abs(diff).sum(axis=3))
        E *= (1.0 - np.eye(n))[:, :, None]
        self._x, self._diff, self._E = x, diff, E
        o = E.sum(axis=1)
        if self.normalize:
            o = o / (n - 1)
        return np.concatenate([x, o], axis=1)

    def backward(self, grad):
        x, diff, E = self._x, self._diff, self._E
        n_in = x.shape[1]
        g_pass, g_o = grad[:, :n_in], grad[:, n_in:]
        if self.normalize:
            g_o = g_o / (len(x) - 1)
        G = -g_o[:, None, :] * E  # dL/dL1[i, j, b]
        S = G + G.transpose(1, 0, 2)
        dM = (S[..., None] * np.sign(diff)).sum(axis=1)  # (N, B, C)
        dM = dM.reshape(len(x), -1)
        self.T.grad += x.T @ dM
        return g_pass + dM @ self.T.value.T


def minibatch_discrimination(features: np.ndarray, T: np.ndarray, kernels: int) -> np.ndarray:
    """Functional form; ``T`` has shape (A, kernels * dim)."""
    layer = MinibatchDiscrimination(T.shape[0], kernels, T.shape[1] // kernels)
    layer.T.value[...] = T
    return layer.forward(features)


class Generator:
    def __init__(self, cfg: GanConfig, rng: SeededRng):
        g1, g2 = cfg.gen_filters
        k = cfg.gen_kernel
        c0 = cfg.gen_coarse_channels
        self.cfg = cfg
        self.net = Sequential([
            ("dense", Dense(cfg.noise_dim + cfg.n_conditions, c0 * COARSE_LEN, rng.spawn(0))),
            ("reshape", Reshape(c0, COARSE_LEN)),
            ("up1", Upsample1d(UPSAMPLE[0])),
            ("conv1", Conv1d(c0, g1, k, "same", rng.spawn(1))),
            ("act1", LeakyReLU(cfg.leaky_slope)),
            ("up2", Upsample1d(UPSAMPLE[1])),
            ("conv2", Conv1d(g1, g2, k, "same", rng.spawn(2))),
            ("act2", LeakyReLU(cfg.leaky_slope)),
            ("out", Conv1d(g2, N_CHANNELS, k, "same", rng.spawn(3))),
        ])

    def params(self):
        return self.net.params()

    def forward(self, noise, cond_onehot):
        return self.net.forward(np.concatenate([noise, cond_onehot], axis=1))

    def backward(self, grad):
        return self.net.backward(grad)


class Discriminator:
    def __init__(self, cfg: GanConfig, rng: SeededRng):
        d1, d2 = cfg.disc_filters
        k, p = cfg.disc_kernel, cfg.disc_pool
        flat = d2 * ((N_SAMPLES // p) // p)
        self.cfg = cfg
        self.features = Sequential([
            ("conv1", Conv1d(N_CHANNELS + cfg.n_conditions, d1, k, "same", rng.spawn(0))),
            ("act1", LeakyReLU(cfg.leaky_slope)),
            ("pool1", MaxPool1d(p)),
            ("conv2", Conv1d(d1, d2, k, "same", rng.spawn(1))),
            ("act2", LeakyReLU(cfg.leaky_slope)),
            ("pool2", MaxPool1d(p)),
            ("flatten", Flatten()),
            ("dense", Dense(flat, cfg.disc_features, rng.spawn(2))),
            ("act3", LeakyReLU(cfg.leaky_slope)),
            ("mbd", MinibatchDiscrimination(cfg.disc_features, cfg.mbd_kernels, cfg.mbd_dim, rng.spawn(3),
                                            normalize=True)),
            ("out", Dense(cfg.disc_features + cfg.mbd_kernels, 1, rng.spawn(4))),
            ("sigmoid", Sigmoid()),
        ])

    def params(self):
        return self.features.params()

    def forward(self, x, cond_onehot):
        cond = np.broadcast_to(cond_onehot[:, :, None], cond_onehot.shape + (x.shape[2],))
        return self.features.forward(np.concatenate([x, cond], axis=1))[:, 0]

    def backward(self, grad):
        """Gradient w.r.t. the signal input (the class channels are dropped)."""
        return self.features.backward(grad[:, None])[:, :N_CHANNELS]


def generator_param_count(cfg: GanConfig) -> int:
    g1, g2 = cfg.gen_filters
    k, c0 = cfg.gen_kernel, cfg.gen_coarse_channels
    return ((cfg.noise_dim + cfg.n_conditions) * c0 * COARSE_LEN + c0 * COARSE_LEN
            + g1 * c0 * k + g1 + g2 * g1 * k + g2 + N_CHANNELS * g2 * k + N_CHANNELS)


def discriminator_param_count(cfg: GanConfig) -> int:
    d1, d2 = cfg.disc_filters
    k, p, f = cfg.disc_kernel, cfg.disc_pool, cfg.disc_features
    flat = d2 * ((N_SAMPLES // p) // p)
    return (d1 * (N_CHANNELS + cfg.n_conditions) * k + d1 + d2 * d1 * k + d2
            + flat * f + f + f * cfg.mbd_kernels * cfg.mbd_dim + (f + cfg.mbd_kernels) + 1)


def build_generator(cfg: GanConfig, rng: SeededRng | None = None) -> Generator:
    cfg.validate()
    return Generator(cfg, rng or SeededRng(cfg.seed).spawn(1))


def build_discriminator(cfg: GanConfig, rng: SeededRng | None = None) -> Discriminator:
    cfg.validate()
    return Discriminator(cfg, rng or SeededRng(cfg.seed).spawn(2))


# spectral loss


def spectral_loss(real: np.ndarray, fake: np.ndarray, mode: str = "batch_mean",
                  return_grad: bool = False, n_fft: int = signal.N_FFT):
    """Squared difference of magnitude spectra, averaged over channels and bins.

    Spectra use the unitary scaling ``|X_k| / sqrt(n_fft)``, which keeps the
    term comparable to the adversarial loss at ``lambda_spec = 1``.
    ``batch_mean`` compares the batch-averaged magnitude spectrum of each
    channel (samples are unpaired); ``paired`` compares sample i of each
    batch. With ``return_grad`` also returns dL/d fake.
    """
    if real.shape != fake.shape:
        raise DimensionError(f"spectral_loss: real batch {real.shape} vs fake batch {fake.shape}")
    return _spectral_loss(unitary_magnitudes(real, n_fft), fake, mode, return_grad, n_fft)


def unitary_magnitudes(x: np.ndarray, n_fft: int = signal.N_FFT) -> np.ndarray:
    return np.abs(signal.fft_real(x, n_fft)) / math.sqrt(n_fft)


def _spectral_loss(a_real, fake, mode, return_grad, n_fft):
    """Spectral loss against precomputed real magnitudes (training caches them)."""
    b, c, t = fake.shape
    norm = 1.0 / math.sqrt(n_fft)
    X_fake = signal.fft_real(fake, n_fft)
    a_fake = np.abs(X_fake) / math.sqrt(n_fft)  # same rounding as unitary_magnitudes
    if mode == "batch_mean":
        diff = a_fake.mean(axis=0) - a_real.mean(axis=0)
        loss = float((diff**2).mean())
        if not return_grad:
            return loss
        g_amp = np.broadcast_to(2.0 * diff / diff.size / b, a_fake.shape)
    elif mode == "paired":
        diff = a_fake - a_real
        loss = float((diff**2).mean())
        if not return_grad:
            return loss
        g_amp = 2.0 * diff / diff.size
    else:
        raise ParameterError(f"unknown spectral mode {mode!r}")
    # d|X|/dX is the unit phasor; |X| = 0 gets a zero subgradient
    mag = np.abs(X_fake)
    phasor = np.where(mag > 0, X_fake / np.where(mag > 0, mag, 1.0), 0.0)
    return loss, signal.fft_real_backward(g_amp * norm * phasor, t, n_fft)


# model container


@dataclass
class GanModel:
    config: GanConfig
    generator: Generator
    discriminator: Discriminator
    scaler: ChannelScaler = field(default_factory=ChannelScaler.identity)

    def save(self, path) -> tuple[Path, Path]:
        path = Path(path)
        weights = path.with_suffix(".ksn")
        sidecar = path.with_suffix(".json")
        arrays = {f"generator.{k}": p.value for k, p in self.generator.params().items()}
        arrays.update({f"discriminator.{k}": p.value for k, p in self.discriminator.params().items()})
        container.save(weights, arrays)
        meta = {"schema_version": SCHEMA_VERSION, "kind": "cgan",
                "config": self.config.to_dict(), "scaler": self.scaler.to_dict()}
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return weights, sidecar

    @classmethod
    def load(cls, path) -> GanModel:
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        if meta.get("kind") != "cgan":
            raise ParameterError(f"{path}: sidecar does not describe a cGAN model")
        cfg = GanConfig.from_dict(meta["config"])
        model = cls(cfg, build_generator(cfg), build_discriminator(cfg), ChannelScaler.from_dict(meta["scaler"]))
        stored = container.load(path.with_suffix(".ksn"))
        params = {f"generator.{k}": p for k, p in model.generator.params().items()}
        params.update({f"discriminator.{k}": p for k, p in model.discriminator.params().items()})
        if set(stored) != set(params):
            raise ParameterError(f"{path}: stored parameter names do not match the config")
        for k, p in params.items():
            if stored[k].shape != p.shape:
                raise ParameterError(f"{path}: {k} has shape {stored[k].shape}, expected {p.shape}")
            p.value[...] = stored[k]
        return model


LOG_FIELDS = ("epoch", "d_loss", "g_loss", "g_adv", "g_spec", "d_real", "d_fake", "hf_ratio")


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_FIELDS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def _noise(rng: SeededRng, n: int, dim: int) -> np.ndarray:
    return rng.normal((n, dim))


def _probe(model: GanModel, probe_noise, probe_labels) -> float:
    fake = model.generator.forward(probe_noise, one_hot(probe_labels, model.config.n_conditions))
    # pooled over the whole probe batch
    return signal.high_frequency_power_ratio(model.scaler.inverse(fake), SAMPLE_RATE)


def train(dataset: Dataset, config: GanConfig, progress=None) -> tuple[GanModel, TrainLog]:
    """Alternating 1:1 discriminator / generator updates on a preprocessed dataset."""
    config.validate()
    if len(dataset) < 2:
        raise ParameterError("GAN training needs at least 2 trials")
    root = SeededRng(config.seed)
    X = dataset.signals()
    labels = dataset.condition_labels()
    if labels.max() >= config.n_conditions:
        raise ParameterError("dataset holds classes beyond the conditioning vocabulary")
    scaler = ChannelScaler.fit(X) if config.use_scaler else ChannelScaler.identity()
    Xs = np.stack([scaler.transform(x) for x in X])
    amp_real = unitary_magnitudes(Xs) if config.lambda_spec > 0 else None

    gen = build_generator(config, root.spawn(1))
    disc = build_discriminator(config, root.spawn(2))
    model = GanModel(config, gen, disc, scaler)
    opt_g = Adam(list(gen.params().values()), config.lr_g, config.beta1, config.beta2)
    opt_d = Adam(list(disc.params().values()), config.lr_d, config.beta1, config.beta2)

    present = np.unique(labels)
    probe_rng = root.spawn(3)
    probe_noise = _noise(probe_rng, config.probe_size, config.noise_dim)
    probe_labels = present[np.arange(config.probe_size) % len(present)]
    shuffle_rng = root.spawn(4)
    noise_rng = root.spawn(5)

    log = TrainLog()
    n = len(X)
    bs = min(config.batch_size, n)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = dict.fromkeys(LOG_FIELDS[1:-1], 0.0)
        steps = 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            if len(idx) < 2:
                continue
            real = Xs[idx]
            cond = one_hot(labels[idx], config.n_conditions)
            m = len(idx)

            # discriminator step
            z = _noise(noise_rng, m, config.noise_dim)
            fake = gen.forward(z, cond)
            p_real = disc.forward(real, cond)
            d_loss_real = binary_cross_entropy(p_real, config.real_label)
            disc.backward(binary_cross_entropy_grad(p_real, config.real_label))
            p_fake = disc.forward(fake, cond)
            d_loss_fake = binary_cross_entropy(p_fake, 0.0)
            disc.backward(binary_cross_entropy_grad(p_fake, 0.0))
            d_loss = d_loss_real + d_loss_fake
            opt_d.step()

            # generator step
            z2 = _noise(noise_rng, m, config.noise_dim)
            fake = gen.forward(z2, cond)
            p_gen = disc.forward(fake, cond)
            g_adv = binary_cross_entropy(p_gen, 1.0)
            grad_fake = disc.backward(binary_cross_entropy_grad(p_gen, 1.0))
            for p in disc.params().values():
                p.zero_grad()
            g_spec = 0.0
            if config.lambda_spec > 0:
                g_spec, g_sp = _spectral_loss(amp_real[idx], fake, config.spectral_mode, True, signal.N_FFT)
                grad_fake = grad_fake + config.lambda_spec * g_sp
            g_loss = g_adv + config.lambda_spec * g_spec
            if not all(math.isfinite(v) for v in (d_loss, g_loss)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (d_loss={d_loss}, g_loss={g_loss})",
                    {"epoch": epoch, "real": real, "labels": labels[idx], "noise": z2, "fake": fake},
                )
            gen.backward(grad_fake)
            opt_g.step()

            sums["d_loss"] += d_loss
            sums["g_loss"] += g_loss
            sums["g_adv"] += g_adv
            sums["g_spec"] += g_spec
            sums["d_real"] += float(p_real.mean())
            sums["d_fake"] += float(p_fake.mean())
            steps += 1
        row = {k: v / max(steps, 1) for k, v in sums.items()}
        row["hf_ratio"] = _probe(model, probe_noise, probe_labels)
        log.append(epoch=epoch, **row)
        if progress is not None:
            progress(epoch, row)
    return model, log


# generation


def generate_signals(model: GanModel, class_index: int, n: int, seed: int,
                     apply_filter: bool = True) -> np.ndarray:
    if not 0 <= class_index < model.config.n_conditions:
        raise IndexError(f"class index {class_index} outside [0, {model.config.n_conditions})")
    if n < 0:
        raise ParameterError(f"n must be >= 0, got {n}")
    if n == 0:
        return np.zeros((0, N_CHANNELS, N_SAMPLES))
    root = SeededRng(seed)
    noise = np.stack([root.spawn(i).normal(model.config.noise_dim) for i in range(n)])
    cond = one_hot(np.full(n, class_index), model.config.n_conditions)
    out = model.generator.forward(noise, cond)
    out = np.stack([model.scaler.inverse(x) for x in out])
    if apply_filter:
        out = signal.lowpass_2hz(out, SAMPLE_RATE, 2.0)
    pos = list(POSITION_CHANNELS)
    out[:, pos] -= out[:, pos, :1]
    return out


def generate(model: GanModel, class_index: int, n: int, seed: int,
             apply_filter: bool = True) -> list[Trial]:
    """Draw ``n`` class-conditioned trials labelled with the requested (task, impairment)."""
    sigs = generate_signals(model, class_index, n, seed, apply_filter)
    task, imp = CONDITIONS[class_index]
    return [Trial(SYNTHETIC, task, imp, s) for s in sigs]


def proportional_counts(labels: np.ndarray, total: int) -> dict[int, int]:
    """Split ``total`` across classes in proportion to ``labels`` (largest remainder, ties to lower class)."""
    classes, counts = np.unique(labels, return_counts=True)
    quota = counts * total / counts.sum()
    base = np.floor(quota).astype(int)
    rem = total - base.sum()
    order = sorted(range(len(classes)), key=lambda i: (-(quota[i] - base[i]), classes[i]))
    for i in order[:rem]:
        base[i] += 1
    return {int(c): int(k) for c, k in zip(classes, base)}


def generate_like(model: GanModel, labels: np.ndarray, total: int, seed: int,
                  apply_filter: bool = True) -> Dataset:
    """``total`` synthetic trials whose class mix follows ``labels``."""
    trials = []
    for c, k in proportional_counts(labels, total).items():
        trials += generate(model, c, k, int(SeededRng(seed).spawn(c).integers(0, 2**63)), apply_filter)
    return Dataset(trials)
