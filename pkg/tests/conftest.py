import numpy as np
import pytest

from cisnmf.signal_io import StftConfig, Waveform, stft


def sinusoid_source(rng, fs, length, partials, noise=0.01):
    """Sum of sinusoids (freq_hz, amplitude) with random phases plus noise."""
    t = np.arange(length) / fs
    x = sum(
        a * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        for f, a in partials
    )
    return x + noise * rng.standard_normal(length)


def two_source_scene(seed, fs=8000, length=9800, window=512, hop=128):
    """Deterministic two-source mixture with overlapping partials.

    Returns (s1, s2, mixture_spectrogram, stft_config).
    """
    rng = np.random.default_rng(seed)
    s1 = sinusoid_source(rng, fs, length, [(440.0, 0.5), (650.0, 0.3)])
    s2 = sinusoid_source(rng, fs, length, [(470.0, 0.4), (920.0, 0.35)])
    cfg = StftConfig(window, hop)
    X = stft(Waveform(s1 + s2, fs), cfg)
    return s1, s2, X, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
