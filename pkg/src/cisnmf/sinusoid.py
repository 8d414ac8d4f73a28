"""Sinusoidal phase machinery: QIFFT peak picking, regions of influence,
phase unwrapping across frames, and the Markov-chain phase log-prior.

Frequencies are normalized (cycles per sample, in [0, 0.5]).  Phase
unwrapping propagates mu_t = mu_{t-1} + 2*pi*hop*nu_t, the phase advance of
a sinusoid between two analysis frames hop samples apart.
"""

from __future__ import annotations

import numpy as np

from .circular import TWO_PI, wrap_angle

#: Frames whose peak power falls below this are treated as silent: no peak
#: picking, each bin falls back to its own center frequency.
SILENCE_FLOOR = 1e-10

#: Default peak threshold: keep local maxima within 40 dB of the frame max.
DEFAULT_THRESHOLD_DB = 40.0


def qifft_peaks(log_frame, threshold_db: float = DEFAULT_THRESHOLD_DB):
    """Find spectral peaks with parabolic (QIFFT) refinement.

    Parameters
    ----------
    log_frame : array of F log-magnitudes in dB (any affine scaling of the
        log works; the parabola vertex is invariant to it).
    threshold_db : keep peaks within this range below the frame maximum.

    Returns
    -------
    list of (peak_freq, peak_bin): normalized frequency (k + delta) / n_fft
    with delta in (-0.5, 0.5) from the parabola through bins k-1, k, k+1,
    and the integer bin.  Edge bins can be peaks but are not refined.
    """
    y = np.asarray(log_frame, dtype=float)
    F = y.size
    if F < 3:
        raise ValueError("need at least 3 bins for peak picking")
    n_fft = 2 * (F - 1)
    floor = y.max() - threshold_db

    peaks = []
    interior = np.flatnonzero(
        (y[1:-1] > y[:-2]) & (y[1:-1] > y[2:]) & (y[1:-1] >= floor)
    ) + 1
    if y[0] > y[1] and y[0] >= floor:
        peaks.append((0.0, 0))
    for k in interior:
        denom = y[k - 1] - 2.0 * y[k] + y[k + 1]
        delta = 0.5 * (y[k - 1] - y[k + 1]) / denom if denom != 0 else 0.0
        peaks.append(((k + delta) / n_fft, int(k)))
    if y[F - 1] > y[F - 2] and y[F - 1] >= floor:
        peaks.append(((F - 1) / n_fft, F - 1))
    return peaks


def regions_of_influence(peaks, F: int) -> np.ndarray:
    """Assign each of F bins to the nearest peak (by bin index).

    Boundaries sit at the midpoint between adjacent peak bins; exact ties go
    to the lower peak.  Returns an int array of indices into ``peaks``, or
    all -1 when the peak list is empty.
    """
    if not peaks:
        return np.full(F, -1, dtype=int)
    bins = np.array([b for _, b in peaks])
    order = np.argsort(bins, kind="stable")
    bins = bins[order]
    assignment = np.empty(F, dtype=int)
    lo = 0
    for i in range(len(bins)):
        # Upper edge of region i: bins <= floor((b_i + b_{i+1}) / 2).
        hi = F if i == len(bins) - 1 else (bins[i] + bins[i + 1]) // 2 + 1
        assignment[lo:hi] = order[i]
        lo = hi
    return assignment


def estimate_frequencies(V, threshold_db: float = DEFAULT_THRESHOLD_DB) -> np.ndarray:
    """Per-frame sinusoid frequency field from a positive variance grid.

    Each time frame of V is peak-picked on its dB log-spectrum and every
    bin inherits the refined frequency of its region's peak.  Silent frames
    (and peakless ones) fall back to the identity assignment
    nu = bin / n_fft.
    """
    V = np.asarray(V, dtype=float)
    F, T = V.shape
    n_fft = 2 * (F - 1)
    identity = np.arange(F) / n_fft
    nu = np.empty((F, T))
    for t in range(T):
        col = V[:, t]
        if col.max() < SILENCE_FLOOR:
            nu[:, t] = identity
            continue
        log_col = 10.0 * np.log10(np.maximum(col, 1e-300))
        peaks = qifft_peaks(log_col, threshold_db)
        assignment = regions_of_influence(peaks, F)
        if peaks:
            freqs = np.array([f for f, _ in peaks])
            nu[:, t] = freqs[assignment]
        else:
            nu[:, t] = identity
    return nu


def unwrap_step(mu_prev, nu, hop: int):
    """One frame of sinusoidal phase propagation, wrapped to [0, 2*pi)."""
    return wrap_angle(np.asarray(mu_prev) + TWO_PI * hop * np.asarray(nu))


def unwrap_phases(mu0, nu, hop: int) -> np.ndarray:
    """Propagate a frame-0 phase column through the whole frequency field."""
    nu = np.asarray(nu, dtype=float)
    F, T = nu.shape
    mu = np.empty((F, T))
    mu[:, 0] = wrap_angle(mu0)
    for t in range(1, T):
        mu[:, t] = unwrap_step(mu[:, t - 1], nu[:, t], hop)
    return mu


def phase_log_prior(mu, nu, tau: float, hop: int) -> float:
    """Markov-chain log-prior on the phase field (up to a constant).

    tau * sum over f, t>=1 of cos(mu_t - mu_{t-1} - 2*pi*hop*nu_t); the
    first frame carries a non-informative prior and contributes nothing.
    Maximal, at tau*F*(T-1), exactly when every frame satisfies the
    unwrapping recursion.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError(f"shape mismatch: mu {mu.shape} vs nu {nu.shape}")
    if tau == 0.0:
        return 0.0
    diff = mu[:, 1:] - mu[:, :-1] - TWO_PI * hop * nu[:, 1:]
    return float(tau * np.cos(diff).sum())
