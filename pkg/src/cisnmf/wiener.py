"""Isotropic and anisotropic Wiener filtering baselines.

Both are single-shot conservative filters: the estimates sum to the mixture
bin-exactly.  The anisotropic variant builds AG moments from externally
supplied variances and unwrapped phases and applies one posterior-mean step;
at kappa = 0 it collapses to the plain variance-ratio mask.
"""

from __future__ import annotations

import numpy as np

from .circular import anisotropy_params
from .em import SourceModel, ag_moments, e_step
from .nmf import EPS
from .signal_io import ComplexSpectrogram


def wiener_filter(x: ComplexSpectrogram, variances: list) -> list:
    """Soft-mask the mixture with v_j / sum_k v_k per bin."""
    variances = [np.asarray(v, dtype=float) for v in variances]
    for v in variances:
        if v.shape != x.data.shape:
            raise ValueError(
                f"variance grid {v.shape} does not match mixture {x.data.shape}"
            )
        if np.any(v <= 0):
            raise ValueError("variances must be entrywise positive")
    total = np.maximum(sum(variances), EPS)
    return [
        ComplexSpectrogram(v / total * x.data, x.config, x.sample_rate, x.n_samples)
        for v in variances
    ]


def anisotropic_wiener(x: ComplexSpectrogram, models: list, kappa: float) -> list:
    """One anisotropic posterior-mean step under the AG model.

    ``models`` carry the ISNMF variances and the unwrapped phase/frequency
    fields; no NMF or phase re-estimation happens here.
    """
    coeffs = anisotropy_params(kappa)
    moments = [ag_moments(mdl, coeffs) for mdl in models]
    posts = e_step(x.data, moments)
    return [
        ComplexSpectrogram(post.m_post, x.config, x.sample_rate, x.n_samples)
        for post in posts
    ]
