"""Time evolution: Navier-Stokes and heat flows, the Duhamel operator, Picard
iterates, the localized expansion terms, pressure, and energy residuals."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .analysis import gradient_l2_squared, lp_norm
from .spectral import (
    FieldError,
    Grid3,
    ScalarField,
    VectorField,
    fft3,
    heat_multiplier,
    ifft3,
    project_coefficients,
)

_FLOW_TAG = re.compile(r"^(ns|heat|derived|picard_\d+)$")
_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


class EvolutionError(RuntimeError):
    """Solver abort (CFL violation or blow-up guard) with a diagnostic message."""


class CFLError(EvolutionError):
    pass


class BlowUpError(EvolutionError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: tuple
    snapshots: tuple
    flow: str

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        snaps = tuple(self.snapshots)
        if len(times) != len(snaps):
            raise FieldError("times and snapshots differ in length")
        if not times:
            raise FieldError("trajectory is empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise FieldError("times must be strictly increasing")
        if not _FLOW_TAG.match(self.flow):
            raise FieldError(f"unknown flow tag {self.flow!r}")
        grid = snaps[0].grid
        if any(s.grid != grid for s in snaps):
            raise FieldError("snapshots live on different grids")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "snapshots", snaps)

    @property
    def grid(self) -> Grid3:
        return self.snapshots[0].grid

    def __len__(self):
        return len(self.times)

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (relative tolerance 1e-12)."""
        arr = np.asarray(self.times)
        j = int(np.argmin(np.abs(arr - t)))
        if abs(arr[j] - t) > 1e-12 * max(1.0, abs(t)):
            raise FieldError(f"time {t!r} is not a node of the trajectory")
        return j

    def at(self, t: float) -> VectorField:
        return self.snapshots[self.index_of(t)]

    def map(self, fn: Callable[[VectorField], VectorField], flow: str = "derived") -> "Trajectory":
        return Trajectory(self.times, [fn(u) for u in self.snapshots], flow)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        _same_schedule(self, other)
        return Trajectory(self.times, [a - b for a, b in zip(self.snapshots, other.snapshots)], "derived")

    def __add__(self, other: "Trajectory") -> "Trajectory":
        _same_schedule(self, other)
        return Trajectory(self.times, [a + b for a, b in zip(self.snapshots, other.snapshots)], "derived")


def _same_schedule(a: Trajectory, b: Trajectory):
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=1e-12, atol=0):
        raise FieldError("trajectories have different schedules")
    if a.grid != b.grid:
        raise FieldError("trajectories live on different grids")


def log_schedule(t_min: float, t_max: float, count: int, include_zero: bool = True) -> list[float]:
    if not 0 < t_min < t_max or count < 2:
        raise ValueError("need 0 < t_min < t_max and count >= 2")
    ts = list(np.geomspace(t_min, t_max, count))
    return ([0.0] if include_zero else []) + ts


def uniform_nodes(t_end: float, count: int) -> list[float]:
    """``count`` equally spaced nodes on ``[0, t_end]``, each computed as ``i * step``."""
    step = t_end / (count - 1)
    return [i * step for i in range(count - 1)] + [float(t_end)]


# ---------------------------------------------------------------- nonlinearity


def _product_divergence(grid: Grid3, a: np.ndarray, b: np.ndarray, symmetric: bool) -> np.ndarray:
    """Dealiased spectral ``∂_j (a_i b_j)`` (or of the symmetrised product)."""
    kv = grid.kvec
    mask = grid.dealias_mask
    out = np.zeros((3, grid.n, grid.n, grid.n), dtype=complex)
    if symmetric:
        for i, j in _PAIRS:
            prod = a[i] * b[j] if (a is b) else 0.5 * (a[i] * b[j] + a[j] * b[i])
            c = fft3(prod) * mask
            out[i] += 1j * kv[j] * c
            if i != j:
                out[j] += 1j * kv[i] * c
        return out
    for i in range(3):
        for j in range(3):
            c = fft3(a[i] * b[j]) * mask
            out[i] += 1j * kv[j] * c
    return out


def nonlinear_term(grid: Grid3, coeffs: np.ndarray) -> tuple[np.ndarray, float]:
    """``-P D ∇·(u⊗u)`` in spectral form, plus ``max|u|`` for the CFL check."""
    u = ifft3(coeffs).real
    umax = float(np.sqrt(np.max(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)))
    div = _product_divergence(grid, u, u, symmetric=True)
    return -project_coefficients(grid, div), umax


def _energy(grid: Grid3, coeffs: np.ndarray) -> float:
    return float(np.sum(np.abs(coeffs) ** 2) * grid.cell_measure / grid.n**3)


def _check_dealiased(u0: VectorField):
    c = u0.spectral
    outside = np.max(np.abs(c * ~u0.grid.dealias_mask))
    scale = np.max(np.abs(c))
    if scale > 0 and outside > 1e-12 * scale:
        raise FieldError("u0 must be dealiased (two-thirds rule)")
    if scale > 0 and np.max(np.abs(c[:, 0, 0, 0])) > 1e-12 * scale:
        raise FieldError("u0 must be mean-free")


def evolve_ns(
    u0: VectorField,
    t_end: float,
    dt: float,
    schedule: Sequence[float] | None = None,
    cfl: float = 0.4,
    guard: float = 10.0,
) -> Trajectory:
    """Integrating-factor RK4 for the unforced Navier-Stokes system with unit viscosity.

    The heat factor ``e^{-|k|^2 h}`` is applied exactly; only the quadratic
    term is approximated.  Steps have length ``dt`` except the last step
    before each schedule time, which is shortened to land on it.

    Args:
        u0: Solenoidal, dealiased, mean-free initial velocity.
        t_end: Final time.
        dt: Nominal step.
        schedule: Output times in ``[0, t_end]``; defaults to every step.
        cfl: Advective constant, each step needs ``h_step <= cfl * h / max|u|``.
        guard: Abort once the energy exceeds ``guard`` times its initial value.

    Raises:
        CFLError: a step violates the advective bound.
        BlowUpError: the energy guard trips.
    """
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    _check_dealiased(u0)
    grid = u0.grid
    if schedule is None:
        nsteps = int(np.ceil(t_end / dt - 1e-9))
        schedule = [min(i * dt, t_end) for i in range(nsteps + 1)]
    schedule = sorted(float(t) for t in schedule)
    if schedule[0] < 0 or schedule[-1] > t_end * (1 + 1e-12):
        raise ValueError("schedule must lie inside [0, t_end]")

    u = np.array(u0.spectral)
    e0 = _energy(grid, u)
    t = 0.0
    times, snaps = [], []
    factors: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def factor(h):
        if h not in factors:
            if len(factors) > 8:
                factors.clear()
            factors[h] = (np.exp(-grid.k2 * h), np.exp(-grid.k2 * (0.5 * h)))
        return factors[h]

    for target in schedule:
        while t < target * (1 - 1e-14) - 1e-300:
            h = min(dt, target - t)
            if target - (t + h) < 1e-9 * dt:
                h = target - t
            E, E2 = factor(h)
            k1, umax = nonlinear_term(grid, u)
            if umax > 0 and h > cfl * grid.h / umax * (1 + 1e-12):
                raise CFLError(
                    f"step {h:.3e} at t={t:.6e} exceeds CFL bound {cfl * grid.h / umax:.3e} (max|u|={umax:.4e})"
                )
            k2, _ = nonlinear_term(grid, E2 * (u + 0.5 * h * k1))
            k3, _ = nonlinear_term(grid, E2 * u + 0.5 * h * k2)
            k4, _ = nonlinear_term(grid, E * u + h * E2 * k3)
            u = E * u + (h / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
            t = t + h if target - (t + h) >= 1e-9 * dt else target
            en = _energy(grid, u)
            if not np.isfinite(en) or (e0 > 0 and en > guard * e0):
                raise BlowUpError(f"energy {en:.4e} exceeds {guard:g} x initial {e0:.4e} at t={t:.6e}")
        times.append(target)
        snaps.append(VectorField(grid, u, "spectral", solenoidal=True))
    return Trajectory(times, snaps, "ns")


def evolve_heat(u0: VectorField, times: Sequence[float]) -> Trajectory:
    """Exact heat flow ``e^{tΔ}u0`` at each requested time."""
    c = u0.spectral
    snaps = [
        VectorField(u0.grid, c * heat_multiplier(u0.grid, float(t)), "spectral", u0.solenoidal)
        for t in times
    ]
    return Trajectory(times, snaps, "heat")


# ---------------------------------------------------------------- Duhamel


def simpson_weights(nodes: Sequence[float]) -> np.ndarray:
    """Quadrature weights on possibly nonuniform ``nodes``.

    Composite Simpson over consecutive interval pairs; with an odd number of
    intervals the last interval uses the parabola through its three trailing
    nodes.  One interval falls back to the trapezoid rule.
    """
    s = np.asarray(nodes, dtype=float)
    J = len(s) - 1
    w = np.zeros(J + 1)
    if J < 1:
        return w
    if J == 1:
        w[:] = 0.5 * (s[1] - s[0])
        return w
    end = J if J % 2 == 0 else J - 1
    for i in range(0, end, 2):
        h0, h1 = s[i + 1] - s[i], s[i + 2] - s[i + 1]
        c = (h0 + h1) / 6.0
        w[i] += c * (2.0 - h1 / h0)
        w[i + 1] += c * (h0 + h1) ** 2 / (h0 * h1)
        w[i + 2] += c * (2.0 - h0 / h1)
    if end != J:
        a, b = s[J - 1] - s[J - 2], s[J] - s[J - 1]
        w[J - 2] += -(b**3) / (6.0 * a * (a + b))
        w[J - 1] += b * (3.0 * a + b) / (6.0 * a)
        w[J] += b * (3.0 * a + 2.0 * b) / (6.0 * (a + b))
    return w


class _HeatFactors:
    """Small cache of ``e^{-|k|^2 τ}`` arrays keyed by the float ``τ``."""

    def __init__(self, grid: Grid3, capacity: int = 32):
        self.grid = grid
        self.capacity = capacity
        self.store: dict[float, np.ndarray] = {}

    def __call__(self, tau: float) -> np.ndarray:
        arr = self.store.get(tau)
        if arr is None:
            if len(self.store) >= self.capacity:
                self.store.pop(next(iter(self.store)))
            arr = np.exp(-self.grid.k2 * tau)
            self.store[tau] = arr
        return arr


def _integrands(f: Trajectory, g: Trajectory, upto: int, symmetric: bool) -> list[np.ndarray]:
    grid = f.grid
    out = []
    for a, b in zip(f.snapshots[: upto + 1], g.snapshots[: upto + 1]):
        if symmetric and a is b:
            div = _product_divergence(grid, a.physical, a.physical, True)
        else:
            div = _product_divergence(grid, a.physical, b.physical, symmetric)
        out.append(project_coefficients(grid, div))
    return out


def _duhamel_sweep(grid: Grid3, times: Sequence[float], M: list[np.ndarray], last: int) -> list[np.ndarray]:
    """``-∫_0^{t_J} e^{(t_J - s)Δ} M(s) ds`` for every ``J <= last``.

    Pairs of intervals are accumulated recursively: the running Simpson sum
    over ``[0, t_{2m}]`` is carried forward by the exact heat factor, so each
    target costs O(1) array operations.  A target with an odd interval count
    adds its trailing parabolic interval to the sum at ``t_{J-1}``.
    """
    E = _HeatFactors(grid)
    zero = np.zeros_like(M[0])
    out = [zero]
    even_sum = zero  # Simpson integral over [0, t_{2m}] at time t_{2m}
    even_idx = 0
    for J in range(1, last + 1):
        if J == 1:
            w = simpson_weights(times[:2])
            acc = w[0] * (E(times[1] - times[0]) * M[0]) + w[1] * M[1]
            out.append(-acc)
            continue
        if J % 2 == 0:
            s0, s1, s2 = times[J - 2], times[J - 1], times[J]
            w = simpson_weights([s0, s1, s2])
            even_sum = (E(s2 - s0) * even_sum
                        + w[0] * (E(s2 - s0) * M[J - 2])
                        + w[1] * (E(s2 - s1) * M[J - 1])
                        + w[2] * M[J])
            even_idx = J
            out.append(-even_sum)
        else:
            s0, s1, s2 = times[J - 2], times[J - 1], times[J]
            # trailing interval [s1, s2] from the parabola through s0, s1, s2
            a, b = s1 - s0, s2 - s1
            w0 = -(b**3) / (6.0 * a * (a + b))
            w1 = b * (3.0 * a + b) / (6.0 * a)
            w2 = b * (3.0 * a + 2.0 * b) / (6.0 * (a + b))
            acc = (E(s2 - s1) * even_sum
                   + w0 * (E(s2 - s0) * M[J - 2])
                   + w1 * (E(s2 - s1) * M[J - 1])
                   + w2 * M[J])
            assert even_idx == J - 1
            out.append(-acc)
    return out


def duhamel_series(f: Trajectory, g: Trajectory, symmetric: bool = False, last: int | None = None) -> Trajectory:
    """``B(f, g)(t_J)`` at every node ``t_J`` of the shared schedule (which must start at 0).

    Targets with fewer than 9 nodes use the same rule on the nodes available.
    """
    _same_schedule(f, g)
    if f.times[0] != 0.0:
        raise FieldError("schedule must start at t = 0")
    last = len(f.times) - 1 if last is None else last
    M = _integrands(f, g, last, symmetric)
    coeffs = _duhamel_sweep(f.grid, f.times, M, last)
    snaps = [VectorField(f.grid, c, "spectral", solenoidal=True) for c in coeffs]
    return Trajectory(f.times[: last + 1], snaps, "derived")


def duhamel_B(f: Trajectory, g: Trajectory, t: float, symmetric: bool = False) -> VectorField:
    """``B(f, g)(t) = -∫_0^t e^{(t-s)Δ} P ∇·(f⊗g)(s) ds`` by composite Simpson on the nodes.

    ``t`` must be a node of the shared schedule, which starts at 0, and at
    least 9 nodes must cover ``[0, t]``.  With ``symmetric`` the product is
    replaced by ``(f⊗g + g⊗f)/2``.
    """
    _same_schedule(f, g)
    if f.times[0] != 0.0:
        raise FieldError("schedule must start at t = 0")
    if not 0 <= t <= f.times[-1] * (1 + 1e-12):
        raise FieldError(f"t={t} is outside the shared range")
    J = f.index_of(t)
    if J + 1 < 9:
        raise FieldError(f"need at least 9 nodes on [0, t], got {J + 1}")
    return duhamel_series(f, g, symmetric, last=J).snapshots[-1]


def duhamel_closed_form_mode(grid: Grid3, coeff_tensor: np.ndarray, t: float) -> np.ndarray:
    """``-(1 - e^{-|k|^2 t})/|k|^2 · P(i k_j T_ij)`` for a time-independent tensor (spectral)."""
    kv = grid.kvec
    div = 1j * (kv[0] * coeff_tensor[:, 0] + kv[1] * coeff_tensor[:, 1] + kv[2] * coeff_tensor[:, 2])
    proj = project_coefficients(grid, div)
    k2 = grid.k2
    with np.errstate(invalid="ignore", divide="ignore"):
        integral = np.where(k2 > 0, -np.expm1(-k2 * t) / np.where(k2 > 0, k2, 1.0), t)
    return -integral * proj


# ---------------------------------------------------------------- Picard


@dataclass(frozen=True, eq=False)
class PicardSeries:
    """Iterates ``P_0..P_k`` with the increments ``B(P_{j-1}, P_{j-1})`` kept alongside."""

    iterates: tuple
    increments: tuple  # increments[j-1] = B(P_{j-1}, P_{j-1}) for j >= 1

    def __getitem__(self, k):
        return self.iterates[k]

    def __len__(self):
        return len(self.iterates)


def picard_iterates(u0: VectorField, k_max: int, times: Sequence[float]) -> PicardSeries:
    """``P_0 = e^{tΔ}u0`` and ``P_k = P_0 + B(P_{k-1}, P_{k-1})`` on the schedule ``times``."""
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    P0 = Trajectory(times, evolve_heat(u0, times).snapshots, "picard_0")
    iterates, increments = [P0], []
    for k in range(1, k_max + 1):
        prev = iterates[-1]
        inc = duhamel_series(prev, prev, symmetric=True)
        increments.append(inc)
        snaps = [a + b for a, b in zip(P0.snapshots, inc.snapshots)]
        iterates.append(Trajectory(times, snaps, f"picard_{k}"))
    return PicardSeries(tuple(iterates), tuple(increments))


# ---------------------------------------------------------------- expansion


def radial_cutoff(grid: Grid3, r_in: float, r_out: float, center=(0.0, 0.0, 0.0)) -> ScalarField:
    """1 on ``|x - center| <= r_in``, 0 beyond ``r_out``, quintic C² monotone in between."""
    if not 0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")
    r = grid.radius(center)
    s = np.clip((r_out - r) / (r_out - r_in), 0.0, 1.0)
    return ScalarField(grid, s**3 * (10.0 - 15.0 * s + 6.0 * s**2))


def _times_scalar(traj: Trajectory, chi: ScalarField) -> Trajectory:
    snaps = [VectorField(traj.grid, u.physical * chi.values) for u in traj.snapshots]
    return Trajectory(traj.times, snaps, "derived")


def check_cutoff(chi: ScalarField, ball_radius: float, omega_radius: float, center=(0.0, 0.0, 0.0)):
    """Require ``0 <= chi <= 1``, ``chi = 0`` outside ``B`` and ``chi > 0`` on the closed ``B_Ω``."""
    v = chi.values
    if np.any(v < 0) or np.any(v > 1):
        raise FieldError("cutoff must take values in [0, 1]")
    r = chi.grid.radius(center)
    if np.any(v[r >= ball_radius] != 0):
        raise FieldError("cutoff support is not strictly inside the ball B")
    if np.any(v[r <= omega_radius] <= 0):
        raise FieldError("B_Omega is not inside the cutoff support")


@dataclass(frozen=True, eq=False)
class ExpansionTerms:
    P0: Trajectory
    P1: Trajectory
    P2_tilde: Trajectory
    P_Omega: Trajectory


def expansion_terms(
    u0: VectorField,
    chi1: ScalarField,
    times: Sequence[float],
    ball_radius: float | None = None,
    omega_radius: float | None = None,
    center=(0.0, 0.0, 0.0),
) -> ExpansionTerms:
    """``P_1``, ``P̃_2 = B(P_0, B(P_0,P_0)χ₁) + B(B(P_0,P_0), P_0χ₁)`` and ``P_Ω = P_1 + P̃_2``.

    Everything is computed from ``u0`` alone.  When the ball radii are given
    the cutoff is checked against them.
    """
    v = chi1.values
    if np.any(v < 0) or np.any(v > 1):
        raise FieldError("cutoff must take values in [0, 1]")
    if ball_radius is not None and omega_radius is not None:
        check_cutoff(chi1, ball_radius, omega_radius, center)
    P0 = evolve_heat(u0, times)
    B00 = duhamel_series(P0, P0, symmetric=True)
    P1 = P0 + B00
    if not np.any(v):
        P2t = P0.map(lambda u: VectorField.zeros(u.grid))
    else:
        first = duhamel_series(P0, _times_scalar(B00, chi1))
        second = duhamel_series(B00, _times_scalar(P0, chi1))
        P2t = first + second
    return ExpansionTerms(P0, P1, P2t, P1 + P2t)


# ---------------------------------------------------------------- pressure


def pressure_coefficients(u: VectorField) -> np.ndarray:
    grid = u.grid
    a = u.physical
    kv = grid.kvec
    acc = np.zeros((grid.n,) * 3, dtype=complex)
    for i, j in _PAIRS:
        c = fft3(a[i] * a[j]) * grid.dealias_mask
        weight = 1.0 if i == j else 2.0
        acc += weight * kv[i] * kv[j] * c
    p = -acc / grid.k2_safe
    p[0, 0, 0] = 0.0
    return p


def pressure_field(u: VectorField) -> ScalarField:
    """``p = -(k_i k_j/|k|^2) (u_i u_j)^``, mean zero."""
    return ScalarField(u.grid, ifft3(pressure_coefficients(u)).real)


def momentum_residual(traj: Trajectory, j: int) -> float:
    """Relative size of ``∂_t u - Δu + u·∇u + ∇p`` at node ``j`` (central difference in time).

    The quadratic terms are dealiased as in the solver.
    """
    if not 0 < j < len(traj) - 1:
        raise ValueError("need an interior node")
    grid = traj.grid
    t0, t1, t2 = traj.times[j - 1 : j + 2]
    c0, c1, c2 = (traj.snapshots[i].spectral for i in (j - 1, j, j + 1))
    h0, h1 = t1 - t0, t2 - t1
    dudt = (-(h1 / (h0 * (h0 + h1))) * c0 + ((h1 - h0) / (h0 * h1)) * c1 + (h0 / (h1 * (h0 + h1))) * c2)
    u = traj.snapshots[j]
    adv = _product_divergence(grid, u.physical, u.physical, True)
    gradp = 1j * grid.kvec * pressure_coefficients(u)[None]
    res = dudt + grid.k2 * c1 + adv + gradp
    scale = np.max(np.abs(dudt)) + np.max(np.abs(grid.k2 * c1)) + np.max(np.abs(adv))
    return float(np.max(np.abs(res)) / scale) if scale > 0 else 0.0


# ---------------------------------------------------------------- energy


@dataclass(frozen=True)
class SeparableTest:
    """Test function ``φ(x, t) = a(t) ψ(x)`` with ``a, ψ >= 0``."""

    psi: ScalarField
    a: Callable[[float], float]
    a_dot: Callable[[float], float]

    def __post_init__(self):
        if np.any(self.psi.values < 0):
            raise FieldError("test function must be non-negative")


def time_bump(t0: float, t1: float) -> tuple[Callable[[float], float], Callable[[float], float]]:
    """``sin²`` bump on ``[t0, t1]`` and its derivative (C¹, zero outside)."""
    w = t1 - t0

    def a(t):
        return float(np.sin(np.pi * (t - t0) / w) ** 2) if t0 <= t <= t1 else 0.0

    def a_dot(t):
        return float((np.pi / w) * np.sin(2 * np.pi * (t - t0) / w)) if t0 <= t <= t1 else 0.0

    return a, a_dot


def gaussian_test(grid: Grid3, width: float, center=(0.0, 0.0, 0.0)) -> ScalarField:
    r = grid.radius(center)
    return ScalarField(grid, np.exp(-0.5 * (r / width) ** 2))


def local_energy_residuals(traj: Trajectory, phi: SeparableTest, upto: float | None = None) -> np.ndarray:
    """LHS - RHS of the local energy relation at every node up to time ``upto``.

    LHS = ``∫φ|u|²(t) + 2∫∫|∇u|²φ``; RHS = ``∫φ|u|²(0) + ∫∫|u|²(∂_tφ + Δφ) + ∫∫(|u|² + 2p) u·∇φ``.
    Time integrals use the cumulative trapezoid rule over the trajectory nodes.
    """
    grid = traj.grid
    if phi.psi.grid != grid:
        raise FieldError("test function lives on a different grid")
    if traj.times[0] != 0.0:
        raise FieldError("trajectory must start at t = 0")
    J = len(traj.times) - 1 if upto is None else traj.index_of(upto)
    times = np.asarray(traj.times[: J + 1])
    a_vals = np.array([phi.a(s) for s in times])
    if np.any(a_vals < 0):
        raise FieldError("test function must be non-negative")
    psi = phi.psi.values
    psi_hat = phi.psi.spectral
    lap_psi = ifft3(-grid.k2 * psi_hat).real
    grad_psi = ifft3(1j * grid.kvec * psi_hat[None]).real
    dV = grid.cell_measure
    local, diss, heat_terms, flux = [], [], [], []
    for s, u, a in zip(times, traj.snapshots[: J + 1], a_vals):
        uu = u.physical
        e = np.sum(uu**2, axis=0)
        grad = ifft3(1j * u.spectral[:, None] * grid.kvec[None, :]).real
        g2 = np.sum(grad**2, axis=(0, 1))
        p = pressure_field(u).values
        udotgrad = np.sum(uu * grad_psi, axis=0)
        local.append(a * np.sum(e * psi) * dV)
        diss.append(2.0 * a * np.sum(g2 * psi) * dV)
        heat_terms.append(np.sum(e * (phi.a_dot(s) * psi + a * lap_psi)) * dV)
        flux.append(a * np.sum((e + 2.0 * p) * udotgrad) * dV)
    lhs = np.asarray(local) + _cumtrapz(diss, times)
    rhs = local[0] + _cumtrapz(heat_terms, times) + _cumtrapz(flux, times)
    return lhs - rhs


def local_energy_residual(traj: Trajectory, phi: SeparableTest, t: float) -> float:
    """LHS - RHS of the local energy relation at the node ``t`` (see :func:`local_energy_residuals`)."""
    return float(local_energy_residuals(traj, phi, t)[-1])


EPS1 = 3.0 / 7.0
EPS2 = 3.0 / 4.0


@dataclass(frozen=True)
class EnergyLedger:
    times: tuple
    energy: tuple          # ‖w(t)‖₂²
    dissipation: tuple     # ∫_0^t ‖∇w‖₂²
    v_l4_4: tuple          # ‖V(t)‖₄⁴
    mu: tuple              # μ(0, t)
    lhs: tuple
    rhs: tuple
    C_L: float

    def holds(self) -> bool:
        return all(l <= r for l, r in zip(self.lhs, self.rhs))


def _cumtrapz(vals, times) -> np.ndarray:
    vals = np.asarray(vals, dtype=float)
    times = np.asarray(times, dtype=float)
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (vals[1:] + vals[:-1]))])


def perturbed_energy_check(u: Trajectory, V: Trajectory, C_L: float) -> EnergyLedger:
    """Both sides of ``‖w‖² + ½∫‖∇w‖² <= μ(0,t)(‖w_0‖² + ∫ ε₂⁻¹‖V‖₄⁴)`` with ``w = u - V``.

    ``μ(0,t) = exp((C_L⁸/4) ∫_0^t ε₁⁻⁷ ‖V‖₄⁸)``, ``ε₁ = 3/7``, ``ε₂ = 3/4``.
    """
    if not C_L > 0:
        raise ValueError("C_L must be positive")
    _same_schedule(u, V)
    times = np.asarray(u.times)
    energy, grad2, v4 = [], [], []
    for a, b in zip(u.snapshots, V.snapshots):
        w = a - b
        energy.append(lp_norm(w, 2) ** 2)
        grad2.append(gradient_l2_squared(w))
        v4.append(lp_norm(b, 4) ** 4)
    diss = _cumtrapz(grad2, times)
    v4 = np.asarray(v4)
    mu = np.exp((C_L**8 / 4.0) * _cumtrapz(EPS1**-7 * v4**2, times))
    source = _cumtrapz(v4 / EPS2, times)
    lhs = np.asarray(energy) + 0.5 * diss
    rhs = mu * (energy[0] + source)
    return EnergyLedger(
        tuple(times), tuple(energy), tuple(diss), tuple(v4), tuple(mu), tuple(lhs), tuple(rhs), float(C_L)
    )


# ---------------------------------------------------------------- Oseen kernel


def oseen_kernel(grid: Grid3, t: float, drop_mean: bool = True) -> np.ndarray:
    """Grid samples of the periodic kernel of ``e^{tΔ}P``, shape ``(3, 3, n, n, n)``.

    The origin sits at grid index ``n/2``.  With ``drop_mean`` the ``k = 0``
    mode is omitted, which removes the constant ``1/L³`` offset of the torus.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    kv = grid.kvec
    mult = np.exp(-grid.k2 * t)
    m = grid.modes
    sign = ((-1.0) ** m)[:, None, None] * ((-1.0) ** m)[None, :, None] * ((-1.0) ** m)[None, None, :]
    out = np.empty((3, 3) + (grid.n,) * 3)
    for i in range(3):
        for j in range(i, 3):
            sym = (1.0 if i == j else 0.0) - kv[i] * kv[j] / grid.k2_safe
            if i == j:
                sym[0, 0, 0] = 0.0 if drop_mean else 1.0
            else:
                sym[0, 0, 0] = 0.0
            vals = ifft3(sym * mult * sign).real * (grid.n**3 / grid.volume)
            out[i, j] = vals
            out[j, i] = vals
    return out


def oseen_reference(x: np.ndarray, t: float) -> np.ndarray:
    """Whole-space kernel ``Γ I + (1/4π) ∇∇[erf(r/2√t)/r]`` at one point ``x``."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    gamma = (4 * np.pi * t) ** -1.5 * np.exp(-(r**2) / (4 * t))
    if r < 1e-12 * np.sqrt(t):
        return (2.0 / 3.0) * (4 * np.pi * t) ** -1.5 * np.eye(3)
    a = 1.0 / (2.0 * np.sqrt(t))
    g = (2 * a / np.sqrt(np.pi)) * np.exp(-(a * r) ** 2)
    E = erf(a * r)
    F1 = g / r - E / r**2
    F2 = -2 * a**2 * g - 2 * g / r**2 + 2 * E / r**3
    xh = x / r
    hess = F2 * np.outer(xh, xh) + (F1 / r) * (np.eye(3) - np.outer(xh, xh))
    return gamma * np.eye(3) + hess / (4 * np.pi)


@dataclass(frozen=True)
class OseenRow:
    x: tuple
    t: float
    magnitude: float
    ratio: float


def oseen_kernel_check(t_values, sample_points, n: int = 128, L: float = 2 * np.pi) -> list[OseenRow]:
    """``|S(x,t)|`` (Euclidean norm of the 3x3 kernel) and ``|S|(|x| + √t)³`` per sample.

    Sample points must be grid points with ``|x| <= L/4``; times need ``√t <= L/8``.
    """
    grid = Grid3(n, L)
    rows = []
    idx = []
    for x in sample_points:
        x = np.asarray(x, dtype=float)
        if np.linalg.norm(x) > L / 4 + 1e-12:
            raise ValueError(f"sample {tuple(x)} is too close to the box boundary")
        j = np.rint(x / grid.h).astype(int) + n // 2
        if np.max(np.abs(x - (j - n // 2) * grid.h)) > 1e-9 * grid.h:
            raise ValueError(f"sample {tuple(x)} is not a grid point")
        idx.append(j)
    for t in t_values:
        if np.sqrt(t) > L / 8 + 1e-12:
            raise ValueError(f"t={t} violates sqrt(t) <= L/8")
        S = oseen_kernel(grid, t)
        for x, j in zip(sample_points, idx):
            mat = S[:, :, j[0], j[1], j[2]]
            mag = float(np.linalg.norm(mat))
            r = float(np.linalg.norm(x))
            rows.append(OseenRow(tuple(float(c) for c in x), float(t), mag, mag * (r + np.sqrt(t)) ** 3))
    return rows


def oseen_spread(rows: list[OseenRow]) -> dict:
    """Per-sample max/min of the ratio across times, and its worst value."""
    by_x: dict[tuple, list[float]] = {}
    for row in rows:
        by_x.setdefault(row.x, []).append(row.ratio)
    spreads = {x: max(v) / min(v) for x, v in by_x.items()}
    return {"per_point": spreads, "worst": max(spreads.values())}
