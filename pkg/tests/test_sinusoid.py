import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cisnmf.signal_io import StftConfig, Waveform, stft
from cisnmf.sinusoid import (
    estimate_frequencies,
    phase_log_prior,
    qifft_peaks,
    regions_of_influence,
    unwrap_phases,
    unwrap_step,
)

TWO_PI = 2 * np.pi


def windowed_log_spectrum(nu, n, pad=1):
    """dB log-magnitude of a Hann-windowed sinusoid at normalized nu,
    optionally zero-padded for the high-resolution oracle."""
    t = np.arange(n)
    w = 0.5 * (1 - np.cos(TWO_PI * t / n))
    x = np.sin(TWO_PI * nu * t + 0.4) * w
    spec = np.abs(np.fft.rfft(x, n * pad))
    return 20 * np.log10(np.maximum(spec, 1e-300))


class TestQifftPeaks:
    def test_exact_bin_center(self):
        n, k = 256, 24
        peaks = qifft_peaks(windowed_log_spectrum(k / n, n), 40.0)
        best = min(peaks, key=lambda p: abs(p[1] - k))
        assert best[1] == k
        assert abs(best[0] - k / n) < 1e-9

    def test_off_bin_accuracy_vs_oracle(self):
        # 64x zero-padded FFT (parabolically refined) supplies the
        # reference peak frequency.
        n, k = 256, 24
        nu_true = (k + 0.3) / n
        log_hi = windowed_log_spectrum(nu_true, n, pad=64)
        j = int(np.argmax(log_hi[: 64 * n // 4]))
        denom = log_hi[j - 1] - 2 * log_hi[j] + log_hi[j + 1]
        oracle = (j + 0.5 * (log_hi[j - 1] - log_hi[j + 1]) / denom) / (64 * n)
        peaks = qifft_peaks(windowed_log_spectrum(nu_true, n), 40.0)
        best = min(peaks, key=lambda p: abs(p[1] - k))
        assert abs(best[0] - oracle) < 1e-4
        assert abs(best[0] - nu_true) < 1e-4

    def test_flat_frame_has_no_peaks(self):
        assert qifft_peaks(np.zeros(64), 40.0) == []

    def test_threshold_drops_minor_peaks(self):
        y = np.full(32, -200.0)
        y[10] = 0.0
        y[20] = -50.0
        peaks = qifft_peaks(y, 40.0)
        assert [b for _, b in peaks] == [10]

    def test_delta_within_half_bin(self, rng):
        for _ in range(20):
            y = rng.standard_normal(64)
            for freq, b in qifft_peaks(y, np.inf):
                assert abs(freq * 126 - b) <= 0.5 + 1e-12


class TestRegionsOfInfluence:
    def test_midpoint_rule_with_tie(self):
        peaks = [(10 / 58, 10), (20 / 58, 20)]
        assignment = regions_of_influence(peaks, 30)
        assert np.all(assignment[:16] == 0)
        assert np.all(assignment[16:] == 1)

    def test_single_peak_takes_all(self):
        assignment = regions_of_influence([(0.1, 7)], 20)
        assert np.all(assignment == 0)

    def test_no_peaks(self):
        assert np.all(regions_of_influence([], 10) == -1)


class TestEstimateFrequencies:
    def test_stationary_sinusoid(self):
        n, hop, k = 256, 64, 24
        nu_true = (k + 0.3) / n
        x = np.sin(TWO_PI * nu_true * np.arange(8000))
        X = stft(Waveform(x, 8000), StftConfig(n, hop))
        V = np.abs(X.data) ** 2
        nu = estimate_frequencies(V)
        # Main-lobe bins always belong to the dominant peak's region
        # (Hann sidelobes above the 40 dB floor form their own regions).
        region = nu[k - 1:k + 2, 5:-5]
        assert np.all(np.abs(region - nu_true) < 1e-4)

    def test_chirp_tracks_instantaneous_frequency(self):
        n, hop, fs = 256, 64, 8000
        length = 12000
        t = np.arange(length)
        nu0, nu1 = 0.05, 0.12
        inst = nu0 + (nu1 - nu0) * t / length
        x = np.sin(TWO_PI * np.cumsum(inst))
        X = stft(Waveform(x, fs), StftConfig(n, hop))
        V = np.abs(X.data) ** 2
        nu = estimate_frequencies(V)
        head = n - hop
        for frame in range(6, X.data.shape[1] - 6):
            center = frame * hop - head + n // 2
            nu_ref = inst[np.clip(center, 0, length - 1)]
            k = int(np.argmax(V[:, frame]))
            assert abs(nu[k, frame] - nu_ref) < 1.0 / n

    def test_white_noise_in_range(self, rng):
        V = rng.uniform(0.1, 1.0, (65, 12))
        nu = estimate_frequencies(V)
        assert np.all(np.isfinite(nu))
        assert np.all((nu >= 0) & (nu <= 0.5))

    def test_silent_frames_fall_back_to_identity(self):
        V = np.full((33, 3), 1e-14)
        nu = estimate_frequencies(V)
        npt.assert_allclose(nu, np.arange(33)[:, None] / 64 * np.ones((1, 3)))

    def test_invariant_to_rescaling(self, rng):
        V = rng.uniform(0.1, 1.0, (65, 8)) ** 4
        npt.assert_array_equal(estimate_frequencies(V),
                               estimate_frequencies(37.5 * V))


class TestUnwrapStep:
    def test_integer_cycles(self):
        npt.assert_allclose(unwrap_step(0.0, 1 / 256, 256), 0.0, atol=1e-12)

    def test_quarter_turn(self):
        npt.assert_allclose(unwrap_step(np.pi / 2, 1 / 16, 4), np.pi)

    def test_zero_frequency_identity(self):
        npt.assert_allclose(unwrap_step(1.234, 0.0, 512), 1.234)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, TWO_PI - 1e-9), st.floats(0, 0.5), st.integers(1, 2048))
    def test_bijection_on_circle(self, mu, nu, hop):
        fwd = unwrap_step(mu, nu, hop)
        back = np.mod(fwd - TWO_PI * hop * nu, TWO_PI)
        assert abs(np.angle(np.exp(1j * (back - mu)))) < 1e-6


class TestPhaseLogPrior:
    def test_maximum_on_unwrapped_trajectory(self, rng):
        F, T, hop, tau = 6, 9, 32, 2.5
        nu = rng.uniform(0, 0.5, (F, T))
        mu = unwrap_phases(rng.uniform(0, TWO_PI, F), nu, hop)
        npt.assert_allclose(phase_log_prior(mu, nu, tau, hop),
                            tau * F * (T - 1), rtol=1e-12)

    def test_zero_tau(self, rng):
        mu = rng.uniform(0, TWO_PI, (4, 5))
        nu = rng.uniform(0, 0.5, (4, 5))
        assert phase_log_prior(mu, nu, 0.0, 32) == 0.0

    def test_minimum_at_opposite_phase(self, rng):
        F, T, hop, tau = 5, 7, 16, 1.5
        nu = rng.uniform(0, 0.5, (F, T))
        mu = unwrap_phases(rng.uniform(0, TWO_PI, F), nu, hop)
        for t in range(1, T):
            mu[:, t] = np.mod(
                unwrap_step(mu[:, t - 1], nu[:, t], hop) + np.pi, TWO_PI
            )
        npt.assert_allclose(phase_log_prior(mu, nu, tau, hop),
                            -tau * F * (T - 1), rtol=1e-12)

    def test_upper_bound(self, rng):
        F, T, hop, tau = 4, 6, 32, 3.0
        nu = rng.uniform(0, 0.5, (F, T))
        for _ in range(20):
            mu = rng.uniform(0, TWO_PI, (F, T))
            assert phase_log_prior(mu, nu, tau, hop) <= tau * F * (T - 1) + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            phase_log_prior(np.zeros((3, 4)), np.zeros((3, 5)), 1.0, 32)
