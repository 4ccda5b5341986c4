"""Experiment configuration parsed from JSON; unknown keys are rejected."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..analysis import sigma_of
from ..tolerances import TOLERANCES
from .data import DatumError, DatumSpec

SCENARIOS = {
    "decay": "decay_rate",
    "long-time": "long_time",
    "spacetime": "spacetime",
    "expansion": "expansion",
    "separation": "separation_data",
    "heat-lemma": "heat_lemma",
    "splitting": "splitting_bound",
    "oseen": "oseen_bound",
    "lei": "lei_residual",
    "time-holder": "time_holder",
}
TAGS = {v: k for k, v in SCENARIOS.items()}


class ConfigError(ValueError):
    pass


def _build(cls, raw: Any, where: str):
    """Instantiate dataclass ``cls`` from a dict, rejecting unknown keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class GridSpec:
    n: int = 32
    L: float = 2 * np.pi


@dataclass(frozen=True)
class ScheduleSpec:
    t_min: float = 1e-3
    t_max: float = 1e-2
    count: int = 12
    spacing: str = "log"

    def __post_init__(self):
        if self.spacing not in ("log", "uniform"):
            raise ValueError("spacing must be 'log' or 'uniform'")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if self.count < 3:
            raise ValueError("count must be at least 3")

    def times(self) -> list[float]:
        """Output times, always starting at 0."""
        if self.spacing == "log":
            return [0.0] + [float(t) for t in np.geomspace(self.t_min, self.t_max, self.count)]
        step = self.t_max / (self.count - 1)
        return [i * step for i in range(self.count - 1)] + [float(self.t_max)]


@dataclass(frozen=True)
class Exponents:
    p: float = 3.0
    q: float = 2.0
    alpha: float = 4.0
    delta: float | None = None


@dataclass(frozen=True)
class SolverSpec:
    dt: float = 1e-4
    cfl: float = 0.4
    guard: float = 10.0


@dataclass(frozen=True)
class Geometry:
    """Radii of B_Ω, the cutoff transition and the ball B; ``None`` picks a multiple of h."""

    omega_radius: float | None = None
    cutoff_inner: float | None = None
    cutoff_outer: float | None = None
    ball_radius: float | None = None

    def resolved(self, h: float) -> "Geometry":
        return Geometry(
            self.omega_radius if self.omega_radius is not None else 2 * h,
            self.cutoff_inner if self.cutoff_inner is not None else 2.5 * h,
            self.cutoff_outer if self.cutoff_outer is not None else 4 * h,
            self.ball_radius if self.ball_radius is not None else 5 * h,
        )


@dataclass(frozen=True)
class Options:
    """Scenario-specific knobs; each scenario reads only the ones it needs."""

    fields: int = 200             # heat-lemma: random fields besides the datum
    test_functions: int = 6       # lei: spatial bumps
    C_L: float | None = None      # splitting: None calibrates on the grid
    thresholds: int = 5           # splitting: scaling audit rows
    samples: list | None = None   # oseen: sample points (None = radial sweep)
    compare_n: int | None = None  # oseen: coarser grid for the resolution check
    probes: int = 4               # time-holder: interior points


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    grid: GridSpec
    datum: DatumSpec | None
    schedule: ScheduleSpec
    window: tuple
    exponents: Exponents
    solver: SolverSpec
    geometry: Geometry
    options: Options
    tolerances: dict
    seed: int
    output_dir: str | None = None

    @property
    def tag(self) -> str:
        return SCENARIOS[self.scenario]

    @property
    def delta(self) -> float:
        return self.exponents.delta if self.exponents.delta is not None else sigma_of(self.exponents.p) / 10

    @classmethod
    def from_dict(cls, raw: dict, scenario: str | None = None, seed: int | None = None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ConfigError(f"unknown keys {unknown}")
        name = raw.get("scenario", scenario)
        if scenario is not None and name != scenario:
            raise ConfigError(f"config is for scenario {name!r}, not {scenario!r}")
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}")
        cfg_seed = int(raw.get("seed", 0)) if seed is None else int(seed)
        if not 0 <= cfg_seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        grid = _build(GridSpec, raw.get("grid"), "grid")
        datum = None
        if raw.get("datum") is not None:
            d = dict(raw["datum"])
            if seed is not None or "seed" not in d:
                d["seed"] = cfg_seed
            if "center" in d:
                d["center"] = tuple(d["center"])
            try:
                datum = _build(DatumSpec, d, "datum")
            except DatumError as exc:
                raise ConfigError(f"datum: {exc}") from exc
        schedule = _build(ScheduleSpec, raw.get("schedule"), "schedule")
        window = tuple(float(w) for w in raw.get("window", (1e-3, 1e-2)))
        tolerances = dict(raw.get("tolerances", {}))
        bad = sorted(set(tolerances) - set(TOLERANCES))
        if bad:
            raise ConfigError(f"tolerances: unknown keys {bad}")
        cfg = cls(
            scenario=name,
            grid=grid,
            datum=datum,
            schedule=schedule,
            window=window,
            exponents=_build(Exponents, raw.get("exponents"), "exponents"),
            solver=_build(SolverSpec, raw.get("solver"), "solver"),
            geometry=_build(Geometry, raw.get("geometry"), "geometry"),
            options=_build(Options, raw.get("options"), "options"),
            tolerances={k: float(v) for k, v in sorted(tolerances.items())},
            seed=cfg_seed,
            output_dir=raw.get("output_dir"),
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.grid.n % 2 or self.grid.n < 8 or not self.grid.L > 0:
            raise ConfigError("grid needs even n >= 8 and L > 0")
        s = self.schedule
        if np.sqrt(s.t_max) > self.grid.L / 8 * (1 + 1e-12):
            raise ConfigError(f"sqrt(t_max) = {np.sqrt(s.t_max):.4g} exceeds L/8 = {self.grid.L / 8:.4g}")
        if len(self.window) != 2:
            raise ConfigError("window needs two entries")
        w0, w1 = self.window
        lo = s.t_min if s.spacing == "log" else 0.0
        if not (w0 < w1 and w0 >= lo * (1 - 1e-12) and w1 <= s.t_max * (1 + 1e-12)):
            raise ConfigError(f"window {self.window} is not inside the schedule range [{lo}, {s.t_max}]")
        p = self.exponents.p
        if self.tag not in ("oseen_bound",) and not 2 < p <= 3:
            raise ConfigError("p must lie in (2, 3]")
        d = self.delta
        if not 0 < d < sigma_of(p):
            raise ConfigError("delta must lie in (0, sigma(p))")
        needs_datum = self.tag not in ("oseen_bound",)
        if needs_datum and self.datum is None:
            raise ConfigError(f"scenario {self.scenario!r} needs a datum")

    def as_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "grid": dataclasses.asdict(self.grid),
            "datum": self.datum.as_dict() if self.datum is not None else None,
            "schedule": dataclasses.asdict(self.schedule),
            "window": list(self.window),
            "exponents": dataclasses.asdict(self.exponents),
            "solver": dataclasses.asdict(self.solver),
            "geometry": dataclasses.asdict(self.geometry),
            "options": dataclasses.asdict(self.options),
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
        }
        return out
