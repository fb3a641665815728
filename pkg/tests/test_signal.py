import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinesynth import signal
from kinesynth.errors import ParameterError
from kinesynth.numerics.gradcheck import numerical_grad, relative_error

FS = 60.0
T = np.arange(300) / FS


def direct_dft(x, n):
    """O(N^2) one-sided DFT of x zero-padded to n."""
    xp = np.zeros(n)
    xp[: len(x)] = x
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (np.exp(-2j * np.pi * k * t / n) * xp).sum(axis=1)


def steady_rms_ratio(x, y, trim=60):
    return np.sqrt((y[trim:-trim] ** 2).mean() / (x[trim:-trim] ** 2).mean())


def test_fft_zeros():
    assert np.all(signal.fft_real(np.zeros(8)) == 0)


def test_fft_impulse_flat_magnitude():
    x = np.zeros(8)
    x[0] = 1.0
    np.testing.assert_allclose(np.abs(signal.fft_real(x)), np.ones(5), atol=1e-15)


def test_fft_matches_direct_dft():
    x = np.random.default_rng(0).normal(size=300)
    np.testing.assert_allclose(signal.fft_real(x, 512), direct_dft(x, 512), rtol=0, atol=1e-9)


def test_complex_fft_matches_direct():
    rng = np.random.default_rng(1)
    z = rng.normal(size=64) + 1j * rng.normal(size=64)
    k = np.arange(64)
    expected = np.exp(-2j * np.pi * np.outer(k, k) / 64) @ z
    np.testing.assert_allclose(signal.fft(z), expected, atol=1e-10)


def test_fft_empty_and_non_power_of_two():
    with pytest.raises(ParameterError):
        signal.fft_real(np.zeros(0))
    with pytest.raises(ParameterError):
        signal.fft(np.zeros(12))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_fft_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 300))
    lhs = signal.fft_real(a * x + b * y, 512)
    rhs = a * signal.fft_real(x, 512) + b * signal.fft_real(y, 512)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-9)


def test_fft_reverse_pass_gradcheck():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    gr, gi = rng.normal(size=(2, 17))

    def loss():
        X = signal.fft_real(x, 32)
        return float((gr * X.real + gi * X.imag).sum())

    g = signal.fft_real_backward(gr + 1j * gi, 20, 32)
    assert relative_error(g, numerical_grad(loss, x)) < 1e-6


def test_magnitude_spectrum_zeros_and_bins():
    spec = signal.magnitude_spectrum(np.zeros(300), FS)
    assert np.all(spec.magnitudes == 0)
    assert len(spec.bin_freqs) == 257
    np.testing.assert_allclose(spec.bin_freqs, np.arange(257) * FS / 512)


def test_magnitude_spectrum_1hz_peak():
    spec = signal.magnitude_spectrum(np.sin(2 * np.pi * 1.0 * T), FS)
    oracle = np.abs(direct_dft(np.sin(2 * np.pi * 1.0 * T), 512))
    np.testing.assert_allclose(spec.magnitudes, oracle, atol=1e-9)
    peak = int(np.argmax(spec.magnitudes))
    # 300 of 512 samples are signal, so the main lobe spans neighbouring bins
    assert abs(spec.bin_freqs[peak] - 1.0) <= FS / 512
    assert spec.magnitudes[peak] >= 10 * spec.magnitudes[spec.bin_freqs > 2.0].max()


def test_parseval_one_sided():
    x = np.random.default_rng(4).normal(size=300)
    mags = signal.magnitude_spectrum(x, FS).magnitudes
    n = 512
    one_sided = (mags[0] ** 2 + 2 * (mags[1:-1] ** 2).sum() + mags[-1] ** 2) / n
    assert one_sided == pytest.approx((x**2).sum(), abs=1e-9)


def test_biquad_dc_gain_and_analytic_response():
    b, a = signal.butterworth_biquad(2.0, FS)
    assert b.sum() / a.sum() == pytest.approx(1.0, abs=1e-12)
    for f in [0.5, 2.0, 10.0]:
        z = np.exp(-2j * np.pi * f / FS * np.arange(3))
        h = abs((b * z).sum() / (a * z).sum())
        assert h == pytest.approx(signal.butterworth_gain(f, 2.0, FS), rel=1e-12)
    assert signal.butterworth_gain(2.0, 2.0, FS) == pytest.approx(1 / np.sqrt(2), rel=1e-12)


def test_lowpass_constant_unchanged():
    x = np.full((9, 300), 3.7)
    np.testing.assert_allclose(signal.lowpass_2hz(x, FS, 2.0), x, rtol=0, atol=1e-9)


def test_lowpass_half_hz_retained():
    x = np.sin(2 * np.pi * 0.5 * T)
    y = signal.lowpass_2hz(x, FS, 2.0)
    assert steady_rms_ratio(x, y) >= 0.99
    assert np.sqrt((y**2).mean() / (x**2).mean()) >= 0.99


def test_lowpass_ten_hz_attenuated():
    x = np.sin(2 * np.pi * 10.0 * T)
    y = signal.lowpass_2hz(x, FS, 2.0)
    ratio = steady_rms_ratio(x, y)
    assert ratio <= 0.01
    assert ratio == pytest.approx(signal.butterworth_gain(10.0, 2.0, FS) ** 2, rel=0.05)


def test_lowpass_is_zero_phase():
    x = np.sin(2 * np.pi * 0.8 * T)
    y = signal.lowpass_2hz(x, FS, 2.0)
    lag = np.argmax(np.correlate(y[60:-60], x[60:-60], mode="full")) - (len(x) - 121)
    assert lag == 0


def test_lowpass_preserves_shape_and_is_near_idempotent():
    rng = np.random.default_rng(5)
    phases = rng.uniform(0, 2 * np.pi, (9, 1))
    x = np.sin(2 * np.pi * 0.4 * T + phases) + 0.5 * np.sin(2 * np.pi * 0.9 * T + 2 * phases)
    y = signal.lowpass_2hz(x, FS, 2.0)
    assert y.shape == x.shape
    yy = signal.lowpass_2hz(y, FS, 2.0)
    rms = lambda v: np.sqrt((v**2).mean())
    assert abs(rms(yy) - rms(y)) < 0.01 * rms(y)


def test_lowpass_rejects_cutoff_at_nyquist():
    with pytest.raises(ParameterError):
        signal.lowpass_2hz(np.zeros((1, 10)), FS, 30.0)


def test_hf_ratio_examples():
    assert signal.high_frequency_power_ratio(np.sin(2 * np.pi * 1.0 * T)[None], FS) < 0.02
    assert signal.high_frequency_power_ratio(np.sin(2 * np.pi * 10.0 * T)[None], FS) > 0.98
    assert signal.high_frequency_power_ratio(np.zeros((9, 300)), FS) == 0.0


def test_hf_ratio_against_direct_dft():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(3, 300))
    xc = x - x.mean(axis=1, keepdims=True)
    power = np.array([np.abs(direct_dft(row, 512)) ** 2 for row in xc])
    freqs = np.arange(257) * FS / 512
    expected = power[:, freqs > 2.0].sum() / power[:, 1:].sum()
    assert signal.high_frequency_power_ratio(x, FS) == pytest.approx(expected, abs=1e-12)
