"""Norms, weak quasi-norms, exponent algebra and power-law fits."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .spectral import (
    FieldError,
    ScalarField,
    VectorField,
    fft3,
    fractional_laplacian,
    gradient_coefficients,
    ifft3,
)


class AnalysisError(ValueError):
    pass


def _magnitude(f) -> tuple[np.ndarray, float]:
    """Pointwise magnitude and cell measure for a vector field, scalar field or (array, h3)."""
    if isinstance(f, VectorField):
        return f.magnitude(), f.grid.cell_measure
    if isinstance(f, ScalarField):
        return np.abs(f.values), f.grid.cell_measure
    raise AnalysisError(f"unsupported field type {type(f).__name__}")


def lp_norm_values(a: np.ndarray, cell: float, p: float) -> float:
    a = np.abs(np.asarray(a, dtype=float)).ravel()
    if p == np.inf:
        return float(a.max()) if a.size else 0.0
    if p < 1:
        raise AnalysisError("p must be at least 1")
    m = a.max() if a.size else 0.0
    if m == 0:
        return 0.0
    # scale out the max to avoid overflow at large p
    return float(m * (np.sum((a / m) ** p) * cell) ** (1.0 / p))


def weak_lp_norm_values(a: np.ndarray, cell: float, p: float) -> float:
    if not p > 1:
        raise AnalysisError("weak norm needs p > 1")
    a = np.sort(np.abs(np.asarray(a, dtype=float)).ravel())[::-1]
    if a.size == 0 or a[0] == 0:
        return 0.0
    measure = cell * np.arange(1, a.size + 1)
    return float(np.max(a * measure ** (1.0 / p)))


def lp_norm(field, p: float) -> float:
    """Grid L^p norm of the pointwise Euclidean magnitude; ``p = inf`` gives the max."""
    if p != np.inf and p < 1:
        raise AnalysisError("p must be at least 1")
    a, cell = _magnitude(field)
    return lp_norm_values(a, cell, p)


def weak_lp_norm(field, p: float) -> float:
    """Discrete ``sup_λ λ μ{|f| > λ}^{1/p}`` computed from the decreasing rearrangement."""
    a, cell = _magnitude(field)
    return weak_lp_norm_values(a, cell, p)


def sobolev_seminorm(field: VectorField, s: float) -> float:
    if s < 0:
        raise AnalysisError("s must be non-negative")
    if s == 0:
        return lp_norm(field, 2)
    return lp_norm(fractional_laplacian(field, s), 2)


def gradient_l2_squared(field: VectorField) -> float:
    """``‖∇u‖₂²`` by Parseval on the spectral view."""
    c = field.spectral
    g = field.grid
    return float(np.sum(g.k2 * (np.abs(c[0]) ** 2 + np.abs(c[1]) ** 2 + np.abs(c[2]) ** 2))
                 * g.cell_measure / g.n**3)


def gradient_l2_norm_direct(field: VectorField) -> float:
    """``‖∇u‖₂`` from the physical gradient tensor (cross-check for the Parseval form)."""
    grad = ifft3(gradient_coefficients(field)).real
    return float(np.sqrt(np.sum(grad**2) * field.grid.cell_measure))


def spacetime_norm(traj, r: float, q: float) -> float:
    """``(∫ ‖u(t)‖_q^r dt)^{1/r}`` by the trapezoid rule over the snapshot times."""
    if r < 1 or q < 1:
        raise AnalysisError("indices must be at least 1")
    times = np.asarray(traj.times, dtype=float)
    if times.size < 3:
        raise AnalysisError("need at least 3 snapshots")
    if np.any(np.diff(times) <= 0):
        raise AnalysisError("snapshot times must be strictly increasing")
    vals = np.array([lp_norm(u, q) for u in traj.snapshots]) ** r
    return float(np.trapezoid(vals, times) ** (1.0 / r))


def spacetime_norm_values(times, norms, r: float) -> np.ndarray:
    """Running ``(∫_0^{T_i} a(t)^r dt)^{1/r}`` for each ``T_i`` given sampled ``a``."""
    times = np.asarray(times, dtype=float)
    vals = np.asarray(norms, dtype=float) ** r
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (vals[1:] + vals[:-1]))])
    return cum ** (1.0 / r)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_points: int

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise AnalysisError("window must satisfy t_min < t_max")
        if self.n_points < 3:
            raise AnalysisError("a fit needs at least 3 points")

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def rate_fit(series, window) -> RateFit:
    """Least-squares line through ``(log t, log value)`` for points with ``t`` in ``window``."""
    t_min, t_max = float(window[0]), float(window[1])
    if not t_min < t_max:
        raise AnalysisError("window must satisfy t_min < t_max")
    pts = [(float(t), float(v)) for t, v in series if t_min <= t <= t_max]
    if len(pts) < 3:
        raise AnalysisError(f"need at least 3 points in window, got {len(pts)}")
    t, v = np.array(pts).T
    if np.any(v <= 0) or np.any(t <= 0):
        raise AnalysisError("times and values must be positive")
    x, y = np.log(t), np.log(v)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(y**2))):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(float(slope), float(intercept), r2, (t_min, t_max), len(pts))


@dataclass(frozen=True)
class SigmaExponents:
    """Exponents attached to a Lebesgue index ``p``.

    Arithmetic is generic, so ``Fraction`` inputs give exact results.
    """

    p: Real
    sigma: Real
    long_time: Real

    @staticmethod
    def r_of_q(q):
        if not Fraction(3, 2) < q < 3:
            raise AnalysisError("q must lie in (3/2, 3)")
        return 2 * q / (2 * q - 3)

    @property
    def heat_lemma_order(self):
        return Fraction(3, 2) - 3 / self.p if isinstance(self.p, Fraction) else 1.5 - 3.0 / self.p


def sigma_of(p):
    return (p - 2) / (2 * (4 - p))


def sigma_exponents(p) -> SigmaExponents:
    if not 2 < p <= 3:
        raise AnalysisError("p must lie in (2, 3]")
    return SigmaExponents(p, sigma_of(p), (p - 2) / 2)


def r_of_q(q):
    return SigmaExponents.r_of_q(q)


def _scalar_values(f) -> tuple[np.ndarray, object]:
    if isinstance(f, ScalarField):
        return f.values, f.grid
    raise AnalysisError("expected a ScalarField")


def periodic_convolution(f: ScalarField, g: ScalarField) -> np.ndarray:
    """``(f * g)(x) = Σ_y f(y) g(x - y) h³`` on the torus."""
    if f.grid != g.grid:
        raise FieldError("fields live on different grids")
    return ifft3(fft3(f.values) * fft3(g.values)).real * f.grid.cell_measure


def oneil_check(f: ScalarField, g: ScalarField, p: float, q: float) -> tuple[float, float]:
    """Return ``(‖f*g‖_∞, ‖f‖_q ‖g‖_{p,∞})`` for conjugate ``p, q``."""
    if not (p > 1 and q > 1) or abs(1.0 / p + 1.0 / q - 1.0) > 1e-12:
        raise AnalysisError("p and q must be conjugate indices")
    lhs = float(np.max(np.abs(periodic_convolution(f, g))))
    rhs = lp_norm(f, q) * weak_lp_norm(g, p)
    return lhs, rhs


def ladyzhenskaya_ratio(field: VectorField) -> float:
    """``‖f‖₄ / (‖f‖₂^{1/4} ‖∇f‖₂^{3/4})``; 0 for the zero field."""
    l2 = lp_norm(field, 2)
    dl2 = np.sqrt(gradient_l2_squared(field))
    if l2 == 0 or dl2 == 0:
        return 0.0
    return lp_norm(field, 4) / (l2**0.25 * dl2**0.75)


def calibrate_ladyzhenskaya(grid, seed: int = 0, samples: int = 64) -> float:
    """Largest Ladyzhenskaya ratio over a family of random and bump fields.

    The family mixes band-limited noise at several cutoffs with Gaussian
    bumps of several widths; the maximum is used as the constant ``C_L``.
    """
    from .spectral import leray_project

    rng = np.random.Generator(np.random.Philox(key=seed))
    n = grid.n
    best = 0.0
    kmag = np.sqrt(grid.k2)
    for i in range(samples):
        if i % 2 == 0:
            kc = (2 + (i // 2) % 8) * 2 * np.pi / grid.L
            noise = rng.standard_normal((3, n, n, n))
            c = fft3(noise) * np.exp(-((kmag / kc) ** 2))
            c[:, 0, 0, 0] = 0
            f = leray_project(VectorField(grid, c, "spectral"))
        else:
            width = grid.h * (1.5 + 6.0 * rng.random())
            r = grid.radius()
            amp = rng.standard_normal(3)
            bump = np.exp(-(r**2) / (2 * width**2))
            f = leray_project(VectorField(grid, amp[:, None, None, None] * bump))
        best = max(best, ladyzhenskaya_ratio(f))
    return best
