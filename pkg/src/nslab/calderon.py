"""Amplitude-truncation split of initial data and the matching threshold choice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import lp_norm
from .spectral import VectorField, leray_project


class SplitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SplitPair:
    """``u0 = u_bar + u_tilde`` with ``u_bar`` bounded and ``u_tilde`` square integrable."""

    threshold: float
    u_bar: VectorField
    u_tilde: VectorField
    alpha: float
    u_bar_alpha: float
    u_bar_sup: float
    u_tilde_l2: float
    truncated_sup: float

    @property
    def projection_factor(self) -> float:
        """``‖u_bar‖_∞ / N``; the truncation alone gives at most 1."""
        return self.u_bar_sup / self.threshold


def truncate(u0: VectorField, N: float) -> np.ndarray:
    """Pointwise ``u0 · min(1, N/|u0|)``."""
    mag = u0.magnitude()
    scale = np.minimum(1.0, N / np.where(mag > 0, mag, np.inf))
    return u0.physical * scale


def lorentz_split(u0: VectorField, N: float, alpha: float = 4.0) -> SplitPair:
    if not N > 0:
        raise SplitError("threshold N must be positive")
    if float(np.max(u0.magnitude())) <= N:
        u_bar = u0
        u_tilde = VectorField.zeros(u0.grid)
        b_sup = float(np.max(u0.magnitude()))
    else:
        b = truncate(u0, N)
        b_sup = float(np.max(np.sqrt(np.sum(b**2, axis=0))))
        u_bar = leray_project(VectorField(u0.grid, b))
        u_tilde = u0.with_spectral(u0.spectral - u_bar.spectral, solenoidal=True)
    return SplitPair(
        threshold=float(N),
        u_bar=u_bar,
        u_tilde=u_tilde,
        alpha=float(alpha),
        u_bar_alpha=lp_norm(u_bar, alpha),
        u_bar_sup=lp_norm(u_bar, np.inf),
        u_tilde_l2=lp_norm(u_tilde, 2),
        truncated_sup=b_sup,
    )


def threshold_exponents(p, alpha):
    """Exponents ``(a, beta)`` in ``N = t^a ‖u0‖^beta``; exact for ``Fraction`` inputs."""
    return (12 - 4 * alpha) / (8 * (alpha - p)), p / (p - alpha)


def optimal_threshold(p: float, alpha: float, t: float, u0_norm: float) -> float:
    if not 2 < p <= 3:
        raise SplitError("p must lie in (2, 3]")
    if not 3 < alpha <= 4:
        raise SplitError("alpha must lie in (3, 4]")
    if not t > 0:
        raise SplitError("t must be positive")
    if not u0_norm > 0:
        raise SplitError("the data norm must be positive")
    a, beta = threshold_exponents(p, alpha)
    log_n = a * np.log(t) + beta * np.log(u0_norm)
    if not -700 < log_n < 700:
        raise SplitError(f"threshold exp({log_n:.4g}) is not representable; alpha is too close to p")
    return float(np.exp(log_n))


def scaling_exponent_of_threshold(p, alpha):
    """Power of λ picked up by N when ``t → λ²t`` and ``‖u0‖ → λ^{3/p-1}‖u0‖``."""
    a, beta = threshold_exponents(p, alpha)
    return 2 * a + (3 / p - 1) * beta


def decay_bracket(p: float, alpha: float, N: float, t: float, u0_norm: float) -> float:
    """``‖u0‖^p N^{-(p-2)} + ‖u0‖^{4p/α} N^{(4/α)(α-p)} t^{(5α-12)/(2α)}``."""
    return (u0_norm**p * N ** (-(p - 2))
            + u0_norm ** (4 * p / alpha) * N ** ((4 / alpha) * (alpha - p))
            * t ** ((5 * alpha - 12) / (2 * alpha)))


@dataclass(frozen=True)
class AuditRow:
    N: float
    tilde_l2_sq: float
    bar_alpha_pow: float
    tilde_product: float
    bar_product: float


def scaling_audit(u0: VectorField, p: float, thresholds, alpha: float = 4.0) -> list[AuditRow]:
    """Per-threshold norms of the split and their ``N``-compensated products."""
    thresholds = sorted(float(N) for N in thresholds)
    if len(thresholds) < 3:
        raise SplitError("need at least 3 thresholds")
    rows = []
    for N in thresholds:
        s = lorentz_split(u0, N, alpha)
        t2 = s.u_tilde_l2**2
        ba = s.u_bar_alpha**alpha
        rows.append(AuditRow(N, t2, ba, t2 * N ** (p - 2), ba * N ** (p - alpha)))
    return rows


def product_spread(values) -> float:
    """max/min of positive values; ``inf`` if any is zero."""
    v = np.asarray(list(values), dtype=float)
    if np.any(v <= 0):
        return float("inf")
    return float(v.max() / v.min())
