"""Periodic-box field algebra.

Fields live on a cube of side ``L`` sampled at ``n`` points per axis, with
physical coordinates ``x_j = -L/2 + j*h`` so the box centre is a grid point.
Spectral coefficients use the unnormalised forward DFT (``u_hat = fftn(u)``);
every multiplier below depends on the wavenumber only, so the half-box phase
offset of the coordinates never enters.

Viscosity is fixed to 1 throughout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

FFT_WORKERS = int(os.environ.get("NSLAB_FFT_WORKERS", "1"))
_AXES = (-3, -2, -1)


class FieldError(ValueError):
    """Invalid grid, field, or operator argument."""


def fft3(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, axes=_AXES, workers=FFT_WORKERS)


def ifft3(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, axes=_AXES, workers=FFT_WORKERS)


@dataclass(frozen=True, eq=False)
class Grid3:
    """Cubic periodic grid with ``n`` points per axis and side ``L``."""

    n: int
    L: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise FieldError("n must be an integer")
        if self.n % 2:
            raise FieldError("n must be even")
        if self.n < 8:
            raise FieldError("n must be at least 8")
        if not np.isfinite(self.L) or self.L <= 0:
            raise FieldError("L must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    def __eq__(self, other):
        return isinstance(other, Grid3) and self.n == other.n and self.L == other.L

    def __hash__(self):
        return hash((self.n, self.L))

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_measure(self) -> float:
        return self.h**3

    @property
    def volume(self) -> float:
        return self.L**3

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers in FFT order, ``[0, 1, ..., n/2-1, -n/2, ..., -1]``."""
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return (2.0 * np.pi / self.L) * self.modes

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable wavenumber components ``(k1, k2, k3)``."""
        w = self.wavenumbers
        return w[:, None, None], w[None, :, None], w[None, None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        k1, k2, k3 = self.k
        out = k1**2 + k2**2 + k3**2
        out.setflags(write=False)
        return out

    @cached_property
    def kvec(self) -> np.ndarray:
        """Full ``(3, n, n, n)`` wavenumber array."""
        k1, k2, k3 = self.k
        out = np.stack(np.broadcast_arrays(k1, k2, k3)).astype(float)
        out.setflags(write=False)
        return out

    @cached_property
    def k2_safe(self) -> np.ndarray:
        out = self.k2.copy()
        out[0, 0, 0] = 1.0
        out.setflags(write=False)
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        m = np.abs(self.modes)
        keep = 3 * m <= self.n
        out = keep[:, None, None] & keep[None, :, None] & keep[None, None, :]
        out.setflags(write=False)
        return out

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = -0.5 * self.L + self.h * np.arange(self.n)
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def radius(self, center=(0.0, 0.0, 0.0), periodic: bool = True) -> np.ndarray:
        """Distance of every grid point from ``center`` (minimum image if ``periodic``)."""
        parts = []
        for x, c in zip(self.coords, center):
            d = x - c
            if periodic:
                d = d - self.L * np.round(d / self.L)
            parts.append(d)
        return np.sqrt(parts[0] ** 2 + parts[1] ** 2 + parts[2] ** 2)

    def displacement(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Minimum-image displacement ``x - center`` as a ``(3, n, n, n)`` array."""
        out = np.empty((3, self.n, self.n, self.n))
        for i, (x, c) in enumerate(zip(self.coords, center)):
            d = x - c
            out[i] = d - self.L * np.round(d / self.L)
        return out


def make_grid(n: int, L: float) -> Grid3:
    return Grid3(n, L)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VectorField:
    """Three-component field held in one of two views.

    ``data`` has shape ``(3, n, n, n)``: real samples when ``space`` is
    ``"physical"``, DFT coefficients when ``"spectral"``.  The other view is
    computed on first access and cached; the object is never mutated.
    """

    grid: Grid3
    data: np.ndarray
    space: str = "physical"
    solenoidal: bool = False

    def __post_init__(self):
        n = self.grid.n
        if self.space not in ("physical", "spectral"):
            raise FieldError(f"unknown representation {self.space!r}")
        data = np.asarray(self.data)
        if data.shape != (3, n, n, n):
            raise FieldError(f"expected shape {(3, n, n, n)}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise FieldError("field has non-finite entries")
        if self.space == "physical":
            if np.iscomplexobj(data):
                raise FieldError("physical samples must be real")
            data = data.astype(float, copy=False)
        else:
            data = data.astype(complex, copy=False)
        object.__setattr__(self, "data", _readonly(data))

    @cached_property
    def physical(self) -> np.ndarray:
        if self.space == "physical":
            return self.data
        return _readonly(ifft3(self.data).real)

    @cached_property
    def spectral(self) -> np.ndarray:
        if self.space == "spectral":
            return self.data
        return _readonly(fft3(self.data))

    @classmethod
    def zeros(cls, grid: Grid3) -> "VectorField":
        return cls(grid, np.zeros((3, grid.n, grid.n, grid.n)), solenoidal=True)

    def with_spectral(self, coeffs: np.ndarray, solenoidal: bool = False) -> "VectorField":
        return VectorField(self.grid, coeffs, "spectral", solenoidal)

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_grid(self, other)
        sol = self.solenoidal and other.solenoidal
        if self.space == "spectral" or other.space == "spectral":
            return VectorField(self.grid, self.spectral + other.spectral, "spectral", sol)
        return VectorField(self.grid, self.physical + other.physical, "physical", sol)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-1.0) * other

    def __rmul__(self, c: float) -> "VectorField":
        return VectorField(self.grid, c * self.data, self.space, self.solenoidal)

    def __neg__(self) -> "VectorField":
        return (-1.0) * self

    def magnitude(self) -> np.ndarray:
        u = self.physical
        return np.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar samples on a grid (pressure, cutoffs, test functions)."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        v = np.asarray(self.values, dtype=float)
        if v.shape != (n, n, n):
            raise FieldError(f"expected shape {(n, n, n)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FieldError("field has non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @cached_property
    def spectral(self) -> np.ndarray:
        return _readonly(fft3(self.values))


@dataclass(frozen=True, eq=False)
class TensorField:
    """Nine-component field ``T[i, j]``; used for products ``f ⊗ g``."""

    grid: Grid3
    data: np.ndarray
    space: str = "physical"

    def __post_init__(self):
        n = self.grid.n
        data = np.asarray(self.data)
        if data.shape != (3, 3, n, n, n):
            raise FieldError(f"expected shape {(3, 3, n, n, n)}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise FieldError("tensor has non-finite entries")
        dtype = complex if self.space == "spectral" else float
        object.__setattr__(self, "data", _readonly(data.astype(dtype, copy=False)))

    @cached_property
    def spectral(self) -> np.ndarray:
        if self.space == "spectral":
            return self.data
        return _readonly(fft3(self.data))


@dataclass(frozen=True)
class PropagatorSymbol:
    """Per-mode heat multiplier and Leray projection tensor at time ``t``."""

    grid: Grid3
    t: float
    multiplier: np.ndarray = field(repr=False)
    projection: np.ndarray = field(repr=False)


def _same_grid(a, b):
    if a.grid != b.grid:
        raise FieldError("fields live on different grids")


def heat_multiplier(grid: Grid3, t: float) -> np.ndarray:
    if t < 0:
        raise FieldError("time must be non-negative")
    return np.exp(-grid.k2 * t)


def projection_tensor(grid: Grid3) -> np.ndarray:
    """``I - k k^T / |k|^2`` per mode, identity at ``k = 0``; shape ``(3, 3, n, n, n)``."""
    kv = grid.kvec
    out = -kv[:, None] * kv[None, :] / grid.k2_safe
    for i in range(3):
        out[i, i] += 1.0
    return out


def propagator_symbol(grid: Grid3, t: float) -> PropagatorSymbol:
    return PropagatorSymbol(grid, float(t), heat_multiplier(grid, t), projection_tensor(grid))


def transform(fld: VectorField, direction: str = "forward") -> VectorField:
    """Return ``fld`` re-expressed in the other view.

    ``direction`` is ``"forward"`` (physical to spectral) or ``"inverse"``.
    """
    if direction == "forward":
        return VectorField(fld.grid, fld.spectral, "spectral", fld.solenoidal)
    if direction == "inverse":
        return VectorField(fld.grid, fld.physical, "physical", fld.solenoidal)
    raise FieldError(f"unknown direction {direction!r}")


def project_coefficients(grid: Grid3, coeffs: np.ndarray) -> np.ndarray:
    kv = grid.kvec
    kdotu = kv[0] * coeffs[0] + kv[1] * coeffs[1] + kv[2] * coeffs[2]
    return coeffs - kv * (kdotu / grid.k2_safe)


def leray_project(fld: VectorField) -> VectorField:
    """Divergence-free part of ``fld``; the mean (``k = 0``) is left unchanged."""
    return fld.with_spectral(project_coefficients(fld.grid, fld.spectral), solenoidal=True)


def heat_semigroup(fld: VectorField, t: float) -> VectorField:
    mult = heat_multiplier(fld.grid, t)
    return fld.with_spectral(fld.spectral * mult, solenoidal=fld.solenoidal)


def _abs_k_power(grid: Grid3, s: float) -> np.ndarray:
    if s == 0:
        return np.ones_like(grid.k2)
    out = grid.k2_safe ** (0.5 * s)
    out[0, 0, 0] = 0.0
    return out


def fractional_laplacian(fld: VectorField, s: float) -> VectorField:
    """Apply ``Λ^s = (-Δ)^{s/2}``, i.e. multiply each mode by ``|k|^s``."""
    coeffs = fld.spectral
    if s < 0 and np.any(np.abs(coeffs[:, 0, 0, 0]) > 0):
        raise FieldError("negative order needs a mean-free field")
    return fld.with_spectral(coeffs * _abs_k_power(fld.grid, s), solenoidal=fld.solenoidal)


def fractional_laplacian_scalar(f: ScalarField, s: float) -> ScalarField:
    coeffs = f.spectral
    if s < 0 and abs(coeffs[0, 0, 0]) > 0:
        raise FieldError("negative order needs a mean-free field")
    return ScalarField(f.grid, ifft3(coeffs * _abs_k_power(f.grid, s)).real)


def dealias(fld: VectorField) -> VectorField:
    """Zero every mode with some ``|m| > n/3``."""
    return fld.with_spectral(fld.spectral * fld.grid.dealias_mask, solenoidal=fld.solenoidal)


def divergence_coefficients(T: TensorField) -> np.ndarray:
    """Spectral ``(∇·T)_i = ∂_j T_ij`` as a ``(3, n, n, n)`` array."""
    kv = T.grid.kvec
    That = T.spectral
    return 1j * (kv[0] * That[:, 0] + kv[1] * That[:, 1] + kv[2] * That[:, 2])


def divergence(T: TensorField) -> VectorField:
    return VectorField(T.grid, divergence_coefficients(T), "spectral")


def oseen_propagate(T: TensorField, t: float) -> VectorField:
    """``e^{tΔ} P ∇·T``; the output is solenoidal."""
    mult = heat_multiplier(T.grid, t)
    coeffs = project_coefficients(T.grid, divergence_coefficients(T)) * mult
    return VectorField(T.grid, coeffs, "spectral", solenoidal=True)


def outer(f: VectorField, g: VectorField, dealiased: bool = True) -> TensorField:
    """Pointwise product ``(f ⊗ g)_ij = f_i g_j``, two-thirds dealiased by default."""
    _same_grid(f, g)
    a, b = f.physical, g.physical
    prod = a[:, None] * b[None, :]
    if not dealiased:
        return TensorField(f.grid, prod)
    return TensorField(f.grid, fft3(prod) * f.grid.dealias_mask, "spectral")


def divergence_residual(fld: VectorField) -> float:
    """``max |k·u_hat| / max |u_hat|`` (0 for the zero field)."""
    c = fld.spectral
    kv = fld.grid.kvec
    kdotu = np.abs(kv[0] * c[0] + kv[1] * c[1] + kv[2] * c[2])
    scale = np.max(np.abs(c))
    return 0.0 if scale == 0 else float(np.max(kdotu) / scale)


def gradient_coefficients(fld: VectorField) -> np.ndarray:
    """``∂_j u_i`` in spectral form, shape ``(3, 3, n, n, n)`` indexed ``[i, j]``."""
    return 1j * fld.spectral[:, None] * fld.grid.kvec[None, :]


def gradient_scalar(f: ScalarField) -> VectorField:
    return VectorField(f.grid, 1j * f.grid.kvec * f.spectral[None], "spectral")


def laplacian(fld: VectorField) -> VectorField:
    return fld.with_spectral(-fld.grid.k2 * fld.spectral, solenoidal=fld.solenoidal)


def curl(fld: VectorField) -> VectorField:
    c = fld.spectral
    k1, k2, k3 = fld.grid.kvec
    out = 1j * np.stack([k2 * c[2] - k3 * c[1], k3 * c[0] - k1 * c[2], k1 * c[1] - k2 * c[0]])
    return fld.with_spectral(out, solenoidal=True)


def remove_mean(fld: VectorField) -> VectorField:
    c = np.array(fld.spectral)
    c[:, 0, 0, 0] = 0.0
    return fld.with_spectral(c, solenoidal=fld.solenoidal)
