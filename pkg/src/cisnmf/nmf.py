"""Itakura-Saito NMF: multiplicative updates, dictionary learning and the
text serialization used to ship dictionaries between the encoding and
separation stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import ComplexSpectrogram

#: Floor applied to spectrograms and factors; the IS divergence is singular
#: at zero.
EPS = 1e-12


@dataclass
class NmfFactors:
    W: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        if self.W.ndim != 2 or self.H.ndim != 2 or self.W.shape[1] != self.H.shape[0]:
            raise ValueError(
                f"factor shapes {self.W.shape} x {self.H.shape} do not compose"
            )

    @property
    def v(self) -> np.ndarray:
        """Model variance W @ H, floored."""
        return np.maximum(self.W @ self.H, EPS)


def is_divergence(P, V) -> float:
    """Itakura-Saito divergence sum(p/v - log(p/v) - 1) over all bins.

    V must be entrywise positive; P is floored at EPS so zero bins stay
    finite.
    """
    V = np.asarray(V, dtype=float)
    if np.any(V <= 0):
        raise ValueError("V must be entrywise positive")
    P = np.maximum(np.asarray(P, dtype=float), EPS)
    ratio = P / V
    return float(np.sum(ratio - np.log(ratio) - 1.0))


def random_factors(F: int, K: int, T: int, rng) -> NmfFactors:
    # Strictly positive start, uniform(0.1, 1.1).
    return NmfFactors(rng.uniform(0.1, 1.1, (F, K)), rng.uniform(0.1, 1.1, (K, T)))


def isnmf_step(V, factors: NmfFactors, update_w: bool = True) -> NmfFactors:
    """One sweep of IS multiplicative updates (W then H, V recomputed
    between)."""
    W, H = factors.W, factors.H
    if update_w:
        Vh = np.maximum(W @ H, EPS)
        W = np.maximum(W * ((V / Vh ** 2) @ H.T) / ((1.0 / Vh) @ H.T), EPS)
    Vh = np.maximum(W @ H, EPS)
    H = np.maximum(H * (W.T @ (V / Vh ** 2)) / (W.T @ (1.0 / Vh)), EPS)
    return NmfFactors(W, H)


def isnmf_fit(V, K: int, iters: int, seed=None, fixed_W=None) -> NmfFactors:
    """Fit V ~ W H under the IS divergence with multiplicative updates.

    When ``fixed_W`` is given only H is estimated (semi-informed decoding);
    otherwise both factors start from seeded uniform(0.1, 1.1) noise.
    """
    V = np.maximum(np.asarray(V, dtype=float), EPS)
    F, T = V.shape
    rng = np.random.default_rng(seed)
    if fixed_W is not None:
        fixed_W = np.asarray(fixed_W, dtype=float)
        if fixed_W.shape[0] != F:
            raise ValueError(
                f"dictionary has {fixed_W.shape[0]} bins, spectrogram has {F}"
            )
        if fixed_W.shape[1] != K:
            raise ValueError(f"dictionary rank {fixed_W.shape[1]} != K={K}")
        factors = NmfFactors(np.maximum(fixed_W, EPS), rng.uniform(0.1, 1.1, (K, T)))
    else:
        factors = random_factors(F, K, T, rng)
    for _ in range(iters):
        factors = isnmf_step(V, factors, update_w=fixed_W is None)
    return factors


def normalize(factors: NmfFactors) -> NmfFactors:
    """Rescale W columns to unit l2 norm, H rows inversely; W @ H unchanged."""
    scale = np.linalg.norm(factors.W, axis=0)
    scale = np.maximum(scale, EPS)
    return NmfFactors(factors.W / scale, factors.H * scale[:, None])


def learn_dictionary(source: ComplexSpectrogram, K: int, iters: int, seed=None) -> np.ndarray:
    """Learn a normalized spectral dictionary from an isolated source.

    Runs ISNMF on the power spectrogram and keeps only the unit-norm W.
    """
    V = np.abs(source.data) ** 2
    factors = isnmf_fit(V, K, iters, seed=seed)
    return normalize(factors).W


def save_dictionary(W, path) -> None:
    """Write a dictionary as text: line 1 ``F K``, then F rows of K floats
    with 17 significant digits (bit-exact round trip)."""
    W = np.asarray(W, dtype=float)
    F, K = W.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{F} {K}\n")
        for row in W:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_dictionary(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"malformed dictionary header in {path}")
        F, K = int(header[0]), int(header[1])
        W = np.loadtxt(fh, dtype=float, ndmin=2)
    if W.shape != (F, K):
        raise ValueError(
            f"dictionary body {W.shape} does not match header ({F}, {K}) in {path}"
        )
    return W
