"""Waveform I/O and the STFT / inverse-STFT analysis-synthesis pipeline.

All downstream processing works on one-sided complex spectrograms produced
here.  The analysis uses a periodic Hann window; synthesis is weighted
overlap-add with the same window, normalized per sample by the accumulated
squared-window energy, which makes ``istft(stft(x))`` reproduce ``x``
exactly (to rounding) for any hop that divides the window length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

_PCM_SCALE = {np.dtype(np.int16): 2.0 ** 15, np.dtype(np.int32): 2.0 ** 31}


@dataclass
class Waveform:
    """Mono audio signal with its sample rate.

    Parameters
    ----------
    samples : np.ndarray
        1-D float array, nominally in [-1, 1].
    sample_rate : int
        Sampling frequency in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("empty waveform")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis geometry: window length and hop in samples.

    The (Hann, hop) pair must satisfy the constant-overlap-add condition,
    which for a periodic Hann window holds whenever ``hop`` divides
    ``window_length``.
    """

    window_length: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        if self.window_length <= 0 or self.hop <= 0:
            raise ValueError("window_length and hop must be positive")
        if self.hop > self.window_length:
            raise ValueError(
                f"hop {self.hop} exceeds window length {self.window_length}"
            )
        if self.window != "hann":
            raise ValueError(f"unsupported window kind: {self.window!r}")
        if self.window_length % self.hop != 0:
            raise ValueError(
                "hop must divide window_length for constant overlap-add "
                f"(got window={self.window_length}, hop={self.hop})"
            )

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1


@dataclass
class ComplexSpectrogram:
    """One-sided complex STFT grid of shape (F, T) plus its geometry.

    ``n_samples`` records the original waveform length so synthesis can
    trim the analysis padding.
    """

    data: np.ndarray
    config: StftConfig
    sample_rate: int
    n_samples: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2:
            raise ValueError("spectrogram data must be 2-D (F, T)")
        if self.data.shape[0] != self.config.n_bins:
            raise ValueError(
                f"bin count {self.data.shape[0]} inconsistent with window "
                f"length {self.config.window_length} (expected {self.config.n_bins})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("spectrogram contains non-finite entries")

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


def _hann_periodic(n: int) -> np.ndarray:
    # Periodic (DFT-even) Hann: 0.5 * (1 - cos(2 pi k / n)).
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def read_wav(path) -> Waveform:
    """Read a RIFF/WAV file as a mono [-1, 1] float waveform.

    Multichannel input is downmixed by channel averaging.  Integer PCM
    (16/24/32-bit; 24-bit arrives as int32) is scaled by the type's full
    range; float data is passed through.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"unreadable WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"empty waveform in {path}")
    if data.dtype in _PCM_SCALE:
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(
            f"unsupported WAV encoding {data.dtype} in {path}; "
            "expected 16/24/32-bit PCM or 32/64-bit float"
        )
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples, int(rate))


def write_wav(w: Waveform, path) -> None:
    """Write a waveform as 32-bit float WAV (lossless round trip)."""
    if not np.all(np.isfinite(w.samples)):
        raise ValueError("refusing to write non-finite samples")
    wavfile.write(path, w.sample_rate, w.samples.astype(np.float32))


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    """Short-time Fourier transform.

    The signal is zero-padded by ``window_length - hop`` samples at the
    head and enough at the tail that every original sample is covered by
    the full set of overlapping windows; frame ``t`` covers padded samples
    ``[t * hop, t * hop + window_length)``.
    """
    x = w.samples
    n, hop = cfg.window_length, cfg.hop
    head = n - hop
    n_frames = (head + x.size - 1) // hop + 1
    padded_len = (n_frames - 1) * hop + n
    padded = np.zeros(padded_len)
    padded[head:head + x.size] = x

    window = _hann_periodic(n)
    idx = np.arange(n)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * window
    data = np.fft.rfft(frames, axis=1).T
    return ComplexSpectrogram(data, cfg, w.sample_rate, x.size)


def spectrogram_energy(s: ComplexSpectrogram) -> float:
    """Total signal energy seen through the analysis frames.

    One-sided Parseval sum: DC and Nyquist bins count once, interior bins
    twice, scaled by 1/window_length.  Equals the waveform energy times the
    constant squared-window overlap sum (3/2 for Hann at 75 % overlap).
    """
    power = np.abs(s.data) ** 2
    weights = np.full(s.data.shape[0], 2.0)
    weights[0] = weights[-1] = 1.0
    return float((weights @ power).sum() / s.config.window_length)


def istft(s: ComplexSpectrogram) -> Waveform:
    """Inverse STFT by weighted overlap-add with the dual Hann window."""
    cfg = s.config
    n, hop = cfg.window_length, cfg.hop
    if s.data.shape[0] != cfg.n_bins:
        raise ValueError("spectrogram bin count inconsistent with config")
    window = _hann_periodic(n)
    frames = np.fft.irfft(s.data.T, n=n, axis=1) * window

    n_frames = s.data.shape[1]
    out = np.zeros((n_frames - 1) * hop + n)
    norm = np.zeros_like(out)
    wsq = window * window
    for t in range(n_frames):
        out[t * hop:t * hop + n] += frames[t]
        norm[t * hop:t * hop + n] += wsq
    out /= np.maximum(norm, np.finfo(float).tiny)

    head = n - hop
    return Waveform(out[head:head + s.n_samples], s.sample_rate)
