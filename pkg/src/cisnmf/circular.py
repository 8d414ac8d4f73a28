"""Circular statistics: Bessel ratios, von Mises and Rayleigh machinery.

The magnitude/phase model used throughout is Rayleigh magnitude + von Mises
phase ("RVM").  Its first and second moments define an equivalent anisotropic
complex Gaussian ("AG"): mean m, variance gamma and relation term
c = E((s - m)^2), the quantity that encodes non-uniformity of the phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

TWO_PI = 2.0 * np.pi

#: lambda saturates at sqrt(pi)/2 as the concentration grows.
LAMBDA_MAX = np.sqrt(np.pi) / 2.0


def wrap_angle(phi):
    """Wrap angles to [0, 2*pi)."""
    return np.mod(phi, TWO_PI)


def bessel_i(n: int, x) -> float:
    """Modified Bessel function of the first kind, orders 0..2.

    Guarded at x = 700 since I_n overflows float64 shortly after; large
    arguments must go through :func:`bessel_i_ratio` instead.
    """
    if n not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {n}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 700):
        raise ValueError("argument out of range [0, 700]")
    out = special.iv(n, x)
    return float(out) if out.ndim == 0 else out


def bessel_i_ratio(n: int, x: float) -> float:
    """Ratio I_n(x) / I_0(x), stable for x up to ~1e6.

    Uses the Perron continued fraction for r_k = I_{k+1}/I_k evaluated by
    the modified Lentz algorithm, then chains r_0 (and r_1 for n = 2).
    Never forms raw Bessel values, so no overflow at large x.
    """
    if n not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {n}")
    if x < 0:
        raise ValueError("argument must be nonnegative")
    if n == 0:
        return 1.0
    if x == 0.0:
        return 0.0
    r0 = _bessel_ratio_cf(0, x)
    if n == 1:
        return r0
    return r0 * _bessel_ratio_cf(1, x)


def _bessel_ratio_cf(nu: int, x: float) -> float:
    # I_{nu+1}(x)/I_nu(x) = 1 / (2(nu+1)/x + 1/(2(nu+2)/x + ...)),
    # modified Lentz evaluation.
    tiny = 1e-300
    f = tiny
    c = f
    d = 0.0
    for k in range(1, 10000):
        b = 2.0 * (nu + k) / x
        d = b + d
        if d == 0.0:
            d = tiny
        c = b + 1.0 / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            return f
    raise RuntimeError(f"Bessel ratio continued fraction failed for x={x}")


@dataclass(frozen=True)
class AnisotropyCoefficients:
    """Phase-concentration coefficients (lambda, rho) derived from kappa.

    lambda = sqrt(pi)/2 * I1(kappa)/I0(kappa) scales the AG mean, rho =
    I2/I0 - lambda^2 the relation term.  1 - lambda^2 - |rho| > 0 is the
    positive-definiteness margin of the AG covariance; it is verified at
    construction.  Note rho < 0 for small kappa (~ kappa^2 (2-pi)/16).
    """

    kappa: float
    lam: float
    rho: float

    def __post_init__(self):
        if 1.0 - self.lam ** 2 - abs(self.rho) <= 0.0:
            raise ValueError(
                f"coefficients for kappa={self.kappa} give a non-positive-"
                "definite covariance"
            )

    @property
    def det_scale(self) -> float:
        """(1 - lambda^2)^2 - rho^2: covariance determinant per unit v^2."""
        return (1.0 - self.lam ** 2) ** 2 - self.rho ** 2


def anisotropy_params(kappa: float) -> AnisotropyCoefficients:
    """Compute (lambda, rho) for a phase concentration kappa >= 0."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if kappa == 0.0:
        return AnisotropyCoefficients(0.0, 0.0, 0.0)
    r1 = bessel_i_ratio(1, kappa)
    r2 = bessel_i_ratio(2, kappa)
    lam = LAMBDA_MAX * r1
    rho = r2 - lam ** 2
    return AnisotropyCoefficients(kappa, lam, rho)


@dataclass(frozen=True)
class VonMisesParams:
    """Location mu (wrapped to [0, 2*pi)) and concentration kappa >= 0."""

    mu: float
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        object.__setattr__(self, "mu", float(wrap_angle(self.mu)))


def vm_log_pdf(phi, p: VonMisesParams):
    """Log density of the von Mises distribution.

    Evaluated as kappa*cos(phi - mu) - log(2 pi I0(kappa)), with
    log I0(kappa) = kappa + log(ive(0, kappa)) so large concentrations do
    not overflow.
    """
    phi = np.asarray(phi, dtype=float)
    log_i0 = p.kappa + np.log(special.ive(0, p.kappa))
    out = p.kappa * np.cos(phi - p.mu) - np.log(TWO_PI) - log_i0
    return float(out) if out.ndim == 0 else out


def rvm_moments(v, mu, coeffs: AnisotropyCoefficients):
    """Mean, variance and relation term of a Rayleigh(v) x von Mises(mu)
    variable.

    Returns (m, gamma, c) with m = lambda sqrt(v) e^{i mu},
    gamma = (1 - lambda^2) v, c = rho v e^{2 i mu}.  Accepts scalars or
    arrays (broadcast together).
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance must be nonnegative")
    mu = np.asarray(mu, dtype=float)
    m = coeffs.lam * np.sqrt(v) * np.exp(1j * mu)
    gamma = (1.0 - coeffs.lam ** 2) * v
    c = coeffs.rho * v * np.exp(2j * mu)
    if m.ndim == 0:
        return complex(m), float(gamma), complex(c)
    return m, gamma, c


def sample_rvm(v: float, mu: float, kappa: float, n: int, seed=None) -> np.ndarray:
    """Draw n samples r e^{i phi}, r ~ Rayleigh(v), phi ~ von Mises(mu, kappa).

    The magnitude uses the inverse CDF r = sqrt(-v ln u); the phase uses
    numpy's Best-Fisher rejection sampler.
    """
    if v < 0 or kappa < 0:
        raise ValueError("v and kappa must be nonnegative")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    r = np.sqrt(-v * np.log1p(-u))
    phi = rng.vonmises(mu, kappa, size=n)
    return r * np.exp(1j * phi)


def sample_ag(m: complex, gamma: float, c: complex, n: int, seed=None) -> np.ndarray:
    """Draw n samples from the complex normal with mean m, variance gamma
    and relation term c.

    The real/imaginary pair has covariance
    [[(gamma + Re c)/2, Im c / 2], [Im c / 2, (gamma - Re c)/2]].
    """
    if gamma <= 0 or gamma ** 2 - abs(c) ** 2 <= 0:
        raise ValueError("covariance (gamma, c) is not positive definite")
    cov = 0.5 * np.array(
        [[gamma + c.real, c.imag], [c.imag, gamma - c.real]]
    )
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((n, 2)) @ chol.T
    return m + z[:, 0] + 1j * z[:, 1]


def chi2_normalize(x, m_x, gamma_x, c_x):
    """Quadratic-form normalization of an AG variable.

    For d = x - m_x returns y = 2 (gamma |d|^2 - Re(conj(c) d^2)) / det,
    the value of the augmented form (d, conj d) Gamma^{-1} (d, conj d)^H,
    which is chi-squared with 2 degrees of freedom when x follows the AG
    law.  Accepts scalars or broadcastable arrays.
    """
    x = np.asarray(x, dtype=complex)
    m_x = np.asarray(m_x, dtype=complex)
    gamma_x = np.asarray(gamma_x, dtype=float)
    c_x = np.asarray(c_x, dtype=complex)
    det = gamma_x ** 2 - np.abs(c_x) ** 2
    if np.any(det <= 0) or np.any(gamma_x <= 0):
        raise ValueError("mixture covariance is not positive definite")
    d = x - m_x
    y = 2.0 * (gamma_x * np.abs(d) ** 2 - (np.conj(c_x) * d * d).real) / det
    y = np.maximum(y, 0.0)
    return float(y) if y.ndim == 0 else y
