"""Radix-2 FFT, magnitude spectra and a zero-phase Butterworth lowpass.

Lowpass design (bilinear transform of the 2nd-order analog Butterworth
prototype, cutoff ``fc``, sample rate ``fs``)::

    K  = tan(pi * fc / fs)
    Q  = 1 / sqrt(2)
    n  = 1 / (1 + K/Q + K^2)
    b0 = K^2 * n,  b1 = 2 * b0,  b2 = b0
    a1 = 2 * (K^2 - 1) * n
    a2 = (1 - K/Q + K^2) * n

    |H(f)|^2 = 1 / (1 + (tan(pi f / fs) / K)^4)

Running the biquad forward and then backward squares the magnitude
response (|H|^2 overall) and cancels the phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError

FILTER_ORDER = 2
N_FFT = 512


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(size // 2) / size)


def fft(x: np.ndarray) -> np.ndarray:
    """Complex DFT along the last axis; the length must be a power of two."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0:
        raise ParameterError("fft of an empty sequence")
    if n & (n - 1):
        raise ParameterError(f"radix-2 fft needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    out = x[..., _bit_reverse(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(size)
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return out


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def fft_real(x: np.ndarray, n_fft: int | None = None) -> np.ndarray:
    """One-sided DFT (``n_fft // 2 + 1`` bins) of ``x`` zero-padded along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[-1]
    if t == 0:
        raise ParameterError("fft_real of an empty sequence")
    n = next_pow2(t) if n_fft is None else n_fft
    if n < t:
        raise ParameterError(f"n_fft={n} shorter than signal length {t}")
    padded = np.zeros(x.shape[:-1] + (n,))
    padded[..., :t] = x
    if n < 4:
        return fft(padded)[..., : n // 2 + 1]
    # pack even/odd samples into one half-length complex transform
    m = n // 2
    z = fft(padded[..., 0::2] + 1j * padded[..., 1::2])
    zr = np.conj(z[..., (-np.arange(m + 1)) % m])
    zk = z[..., np.arange(m + 1) % m]
    even = 0.5 * (zk + zr)
    odd = -0.5j * (zk - zr)
    return even + np.exp(-2j * np.pi * np.arange(m + 1) / n) * odd


def fft_real_backward(grad: np.ndarray, length: int, n_fft: int) -> np.ndarray:
    """Reverse pass of :func:`fft_real`.

    ``grad`` packs the loss gradient w.r.t. each bin as ``dL/dRe + 1j * dL/dIm``.
    Returns dL/dx for the unpadded signal of ``length`` samples.
    """
    full = np.zeros(grad.shape[:-1] + (n_fft,), dtype=np.complex128)
    full[..., : grad.shape[-1]] = grad
    # dL/dx_t = Re(sum_k G_k exp(+2 pi i k t / N)) = Re(fft(conj(G)))_t
    return fft(np.conj(full)).real[..., :length]


@dataclass
class Spectrum:
    bin_freqs: np.ndarray
    magnitudes: np.ndarray
    sample_rate: float


def bin_frequencies(n_fft: int, sample_rate: float) -> np.ndarray:
    return np.arange(n_fft // 2 + 1) * sample_rate / n_fft


def magnitude_spectrum(x: np.ndarray, sample_rate: float, n_fft: int | None = None) -> Spectrum:
    x = np.asarray(x, dtype=np.float64)
    n = next_pow2(x.shape[-1]) if n_fft is None else n_fft
    mags = np.abs(fft_real(x, n))
    return Spectrum(bin_frequencies(n, sample_rate), mags, float(sample_rate))


def butterworth_biquad(cutoff: float, sample_rate: float):
    """Return ``(b, a)`` for the 2nd-order Butterworth lowpass, with ``a[0] == 1``."""
    if cutoff <= 0:
        raise ParameterError(f"cutoff must be positive, got {cutoff}")
    if cutoff >= sample_rate / 2:
        raise ParameterError(
            f"cutoff {cutoff} Hz must be below the Nyquist frequency {sample_rate / 2} Hz"
        )
    k = np.tan(np.pi * cutoff / sample_rate)
    q = 1.0 / np.sqrt(2.0)
    norm = 1.0 / (1.0 + k / q + k * k)
    b0 = k * k * norm
    b = np.array([b0, 2.0 * b0, b0])
    a = np.array([1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm])
    return b, a


def butterworth_gain(freq, cutoff: float, sample_rate: float) -> np.ndarray:
    """Analytic single-pass magnitude response of :func:`butterworth_biquad`."""
    ratio = np.tan(np.pi * np.asarray(freq, dtype=np.float64) / sample_rate) / np.tan(
        np.pi * cutoff / sample_rate
    )
    return 1.0 / np.sqrt(1.0 + ratio**4)


def _biquad(x: np.ndarray, b, a, x0: np.ndarray) -> np.ndarray:
    # transposed direct form II, state initialised to the steady state for constant input x0
    b0, b1, b2 = b
    _, a1, a2 = a
    z2 = (b2 - a2) * x0
    z1 = (b1 - a1) * x0 + z2
    y = np.empty_like(x)
    for t in range(x.shape[-1]):
        xt = x[..., t]
        yt = b0 * xt + z1
        z1 = b1 * xt - a1 * yt + z2
        z2 = b2 * xt - a2 * yt
        y[..., t] = yt
    return y


def filtfilt(x: np.ndarray, b, a) -> np.ndarray:
    """Forward-backward biquad along the last axis with constant edge padding."""
    x = np.asarray(x, dtype=np.float64)
    pad = 3 * FILTER_ORDER
    ext = np.concatenate(
        [np.repeat(x[..., :1], pad, axis=-1), x, np.repeat(x[..., -1:], pad, axis=-1)], axis=-1
    )
    y = _biquad(ext, b, a, ext[..., 0])
    y = _biquad(y[..., ::-1], b, a, y[..., -1])[..., ::-1]
    return np.ascontiguousarray(y[..., pad:-pad])


def lowpass_2hz(signal: np.ndarray, sample_rate: float = 60.0, cutoff: float = 2.0) -> np.ndarray:
    """Zero-phase Butterworth lowpass applied independently to every channel (last axis = time)."""
    b, a = butterworth_biquad(cutoff, sample_rate)
    return filtfilt(signal, b, a)


def high_frequency_power_ratio(signal: np.ndarray, sample_rate: float = 60.0,
                               cutoff: float = 2.0, n_fft: int = N_FFT) -> float:
    """Share of spectral power above ``cutoff`` for a (channels, time) matrix.

    Each channel has its mean removed before the zero-padded FFT so that constant
    offsets do not leak through the padding edge; the DC bin is excluded and
    power is summed over channels. An all-zero input returns 0.
    """
    x = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    x = x - x.mean(axis=-1, keepdims=True)
    n = max(n_fft, next_pow2(x.shape[-1]))
    power = np.abs(fft_real(x, n)) ** 2
    freqs = bin_frequencies(n, sample_rate)
    total = power[..., 1:].sum()
    if total <= 0.0:
        return 0.0
    return float(power[..., freqs > cutoff].sum() / total)
