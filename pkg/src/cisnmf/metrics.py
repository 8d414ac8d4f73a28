"""Separation quality metrics: SDR / SIR / SAR with rescaling-only
references.

The target is the orthogonal projection of the estimate onto its own
reference (a pure rescaling); interference is the projection of the residual
onto the span of the other references; whatever remains is artifact.  No
distortion filtering of the references is allowed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

#: Cap applied to ratios whose error term vanishes (exact matches).
DB_CAP = 200.0

_RIDGE = 1e-12


@dataclass
class BssScores:
    name: str
    sdr: float
    sir: float
    sar: float


def _db_ratio(num: float, den: float) -> float:
    if den <= num * 1e-20:
        return DB_CAP
    return min(10.0 * np.log10(num / den), DB_CAP)


def bss_eval(estimates: list, references: list, names: list | None = None) -> list:
    """Score each estimate against its same-index reference.

    Signals are trimmed to the shortest length.  The interference projector
    solves the Gram system of the other references; a rank-deficient Gram
    matrix is regularized with a 1e-12 ridge and flagged with a warning.
    """
    if len(estimates) != len(references):
        raise ValueError(
            f"{len(estimates)} estimates vs {len(references)} references"
        )
    n = min(min(len(e) for e in estimates), min(len(r) for r in references))
    est = [np.asarray(e, dtype=float)[:n] for e in estimates]
    ref = [np.asarray(r, dtype=float)[:n] for r in references]
    names = names or [f"source{j}" for j in range(len(est))]

    scores = []
    for j, (e, s) in enumerate(zip(est, ref)):
        s_energy = float(s @ s)
        if s_energy == 0.0:
            raise ValueError(f"reference {names[j]} is silent")
        target = (float(e @ s) / s_energy) * s
        resid = e - target

        others = [ref[k] for k in range(len(ref)) if k != j]
        if others:
            A = np.stack(others)  # (J-1, n)
            gram = A @ A.T
            rhs = A @ resid
            try:
                coef = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                warnings.warn("rank-deficient reference Gram matrix; "
                              "using ridge-regularized solve")
                coef = np.linalg.solve(gram + _RIDGE * np.eye(len(others)), rhs)
            interf = coef @ A
        else:
            interf = np.zeros_like(resid)
        artif = resid - interf

        t_energy = float(target @ target)
        i_energy = float(interf @ interf)
        a_energy = float(artif @ artif)
        ti = target + interf
        scores.append(BssScores(
            name=names[j],
            sdr=_db_ratio(t_energy, float((resid) @ (resid))),
            sir=_db_ratio(t_energy, i_energy),
            sar=_db_ratio(float(ti @ ti), a_energy),
        ))
    return scores


def scores_to_dict(scores: list) -> dict:
    """JSON-ready report: per-source rows plus the mean, 4 decimal places."""
    per_source = [
        {
            "name": s.name,
            "sdr": round(s.sdr, 4),
            "sir": round(s.sir, 4),
            "sar": round(s.sar, 4),
        }
        for s in scores
    ]
    mean = {
        "sdr": round(float(np.mean([s.sdr for s in scores])), 4),
        "sir": round(float(np.mean([s.sir for s in scores])), 4),
        "sar": round(float(np.mean([s.sar for s in scores])), 4),
    }
    return {"per_source": per_source, "mean": mean}
