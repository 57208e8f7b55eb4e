"""Random potentials: ensembles, grid realizations, sup/inf estimates.

Three stationary ensembles are provided:

* ``Constant(level)``: the deterministic potential ``V = level``.
* ``ShiftedPeriodic(profile, period, amplitude)``: a periodic profile moved by
  a shift drawn uniformly over one period, which makes the law
  translation invariant.
* ``PoissonBumps(intensity, radius, height)``: a sum of compactly supported
  bumps centred at the points of a Poisson process, clipped at the uniform
  bound ``K0``.

A realization is a continuum function. ``sample_potential`` evaluates it on
the nodes of a :class:`~hjhomog.grid.Grid`; between nodes a field is only
available through multilinear interpolation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import io
from .grid import Grid
from .rng import realization_seeds, stream

# Periodic profiles on the unit cell, as functions of the phases 2*pi*x/period.
# Every profile takes values in [0, 2] with both extremes attained, so the
# potential amplitude*profile has inf 0 and sup 2*amplitude.


def _cosine(phases):
    return sum(1.0 - np.cos(t) for t in phases) / len(phases)


def _product(phases):
    out = np.full(np.shape(phases[0]), 2.0)
    for t in phases:
        out = out * (1.0 - np.cos(t)) / 2.0
    return out


PROFILES: dict[str, Callable] = {"cosine": _cosine, "product": _product}


@dataclass(frozen=True)
class Constant:
    level: float = 0.0


@dataclass(frozen=True)
class ShiftedPeriodic:
    profile: str = "cosine"
    period: float = 1.0
    amplitude: float = 0.2


@dataclass(frozen=True)
class PoissonBumps:
    intensity: float = 0.15
    radius: float = 1.0
    height: float = 0.4


Kind = Union[Constant, ShiftedPeriodic, PoissonBumps]
_KINDS = {"constant": Constant, "shifted_periodic": ShiftedPeriodic, "poisson_bumps": PoissonBumps}


def _kind_name(kind) -> str:
    for name, cls in _KINDS.items():
        if isinstance(kind, cls):
            return name
    raise TypeError(f"unknown ensemble kind {kind!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    """Law of the random potential plus the seed of one realization."""

    kind: Kind = field(default_factory=Constant)
    dimension: int = 1
    bound: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dimension}; expected 1 or 2")
        if self.bound < 0:
            raise ValueError("the uniform bound K0 must be nonnegative")
        k = self.kind
        if isinstance(k, Constant):
            if abs(k.level) > self.bound:
                raise ValueError(f"constant level {k.level} exceeds the bound {self.bound}")
        elif isinstance(k, ShiftedPeriodic):
            if k.profile not in PROFILES:
                raise ValueError(f"unknown periodic profile {k.profile!r}")
            if k.period <= 0:
                raise ValueError("period must be positive")
            if k.amplitude < 0 or 2 * k.amplitude > self.bound:
                raise ValueError(
                    f"profile range [0, {2 * k.amplitude}] is not within the bound {self.bound}"
                )
        elif isinstance(k, PoissonBumps):
            if k.intensity < 0 or k.radius <= 0 or k.height < 0:
                raise ValueError("bump intensity/height must be >= 0 and radius > 0")
        else:
            raise TypeError(f"unknown ensemble kind {k!r}")

    def with_seed(self, seed: int) -> "EnsembleSpec":
        return replace(self, seed=int(seed))

    @property
    def correlation_length(self) -> float:
        k = self.kind
        if isinstance(k, ShiftedPeriodic):
            return k.period
        if isinstance(k, PoissonBumps):
            return k.radius
        return 1.0

    def realization(self) -> "Realization":
        return Realization(self)

    def to_dict(self) -> dict:
        return {
            "kind": _kind_name(self.kind),
            "params": asdict(self.kind),
            "dimension": self.dimension,
            "bound": self.bound,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleSpec":
        kind_cls = _KINDS[data["kind"]]
        return cls(
            kind=kind_cls(**data.get("params", {})),
            dimension=int(data.get("dimension", 1)),
            bound=float(data.get("bound", 1.0)),
            seed=int(data.get("seed", 0)),
        )


def _bump(r2, radius, height):
    s = np.clip(1.0 - r2 / radius**2, 0.0, None)
    return height * s * s


class Realization:
    """One draw of the ensemble, defined on all of R^d.

    ``lower`` is the almost-sure infimum of the ensemble, known in closed
    form for every supported kind.
    """

    def __init__(self, spec: EnsembleSpec):
        self.spec = spec
        k = spec.kind
        self.shift = np.zeros(spec.dimension)
        if isinstance(k, ShiftedPeriodic):
            self.shift = stream(spec.seed, "shift").uniform(0.0, k.period, size=spec.dimension)
        self.lower = float(k.level) if isinstance(k, Constant) else 0.0

    # Poisson points are generated tile by tile with one stream per tile, so a
    # realization restricted to a small box agrees with the same realization
    # restricted to a larger one.
    def _tile_side(self) -> float:
        return 4.0 * self.spec.kind.radius

    def bump_centers(self, lo, hi) -> np.ndarray:
        k = self.spec.kind
        d = self.spec.dimension
        if k.intensity == 0:
            return np.zeros((0, d))
        side = self._tile_side()
        lo_t = np.floor((np.asarray(lo) - k.radius) / side).astype(int)
        hi_t = np.floor((np.asarray(hi) + k.radius) / side).astype(int)
        centers = []
        for tile in np.ndindex(*(hi_t - lo_t + 1)):
            t = lo_t + np.asarray(tile)
            rng = stream(self.spec.seed, "bumps", *t.tolist())
            n = rng.poisson(k.intensity * side**d)
            centers.append(side * (t + rng.uniform(size=(n, d))))
        return np.concatenate(centers) if centers else np.zeros((0, d))

    def __call__(self, points) -> np.ndarray:
        """Evaluate V at ``points`` of shape ``(d, ...)``."""
        points = np.asarray(points, dtype=float)
        d = self.spec.dimension
        if points.shape[0] != d:
            raise ValueError(f"points must have leading axis of length {d}")
        k = self.spec.kind
        if isinstance(k, Constant):
            return np.full(points.shape[1:], float(k.level))
        if isinstance(k, ShiftedPeriodic):
            phases = [2 * np.pi * (points[i] + self.shift[i]) / k.period for i in range(d)]
            return k.amplitude * PROFILES[k.profile](phases)
        flat = points.reshape(d, -1)
        out = np.zeros(flat.shape[1])
        if flat.shape[1] == 0:
            return out.reshape(points.shape[1:])
        centers = self.bump_centers(flat.min(axis=1), flat.max(axis=1))
        r = k.radius
        for c in centers:
            near = np.all(np.abs(flat - c[:, None]) < r, axis=0)
            if np.any(near):
                r2 = np.sum((flat[:, near] - c[:, None]) ** 2, axis=0)
                out[near] += _bump(r2, r, k.height)
        np.minimum(out, self.spec.bound, out=out)
        return out.reshape(points.shape[1:])

    def normalized(self) -> Callable:
        lower = self.lower
        return lambda pts: self(pts) - lower


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: Grid
    values: np.ndarray
    vbar: float
    vlow: float
    normalized: bool = False
    spec: EnsembleSpec | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, grid: Grid, values, spec: EnsembleSpec | None = None) -> "PotentialField":
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        return cls(grid, values, float(values.max()), float(values.min()), False, spec)

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation at ``points`` of shape ``(d, ...)``.

        Periodic grids wrap around; otherwise points are clamped to the box.
        """
        g = self.grid
        points = np.asarray(points, dtype=float)
        shape = points.shape[1:]
        pts = points.reshape(g.dimension, -1)
        n = g.nodes_per_axis
        lo_idx, weights = [], []
        for axis in range(g.dimension):
            s = (pts[axis] + g.half_extent) / g.spacing
            if g.periodic:
                s = np.mod(s, n)
                i0 = np.floor(s).astype(int)
                w = s - i0
                i0 = i0 % n
            else:
                s = np.clip(s, 0.0, n - 1)
                i0 = np.minimum(np.floor(s).astype(int), n - 2) if n > 1 else np.zeros_like(s, int)
                w = s - i0
            lo_idx.append(i0)
            weights.append(w)
        out = np.zeros(pts.shape[1])
        for corner in np.ndindex(*(2,) * g.dimension):
            idx, wt = [], np.ones(pts.shape[1])
            for axis, c in enumerate(corner):
                i = lo_idx[axis] + c
                if g.periodic:
                    i = i % n
                else:
                    i = np.minimum(i, n - 1)
                idx.append(i)
                wt = wt * (weights[axis] if c else 1.0 - weights[axis])
            out += wt * self.values[tuple(idx)]
        return out.reshape(shape)

    def header(self) -> dict:
        return {
            "spec": self.spec.to_dict() if self.spec else None,
            "seed": self.spec.seed if self.spec else None,
            "vbar": self.vbar,
            "vlow": self.vlow,
            "normalized": self.normalized,
            "grid": self.grid.to_dict(),
        }

    def export(self, stem) -> tuple[Path, Path]:
        """Write ``stem.csv`` (coordinates, value) and ``stem.json`` (header)."""
        stem = Path(stem)
        pts = self.grid.points().reshape(self.grid.dimension, -1)
        names = ["x", "y"][: self.grid.dimension] + ["value"]
        csv_path = io.write_csv(io.sibling(stem, ".csv"), names, [*pts, self.values.ravel()])
        json_path = io.write_json(io.sibling(stem, ".json"), self.header())
        return csv_path, json_path


def sample_potential(spec: EnsembleSpec, grid: Grid) -> PotentialField:
    """Evaluate the realization selected by ``spec.seed`` on the grid nodes."""
    if grid.dimension != spec.dimension:
        raise ValueError(
            f"grid dimension {grid.dimension} does not match ensemble dimension {spec.dimension}"
        )
    values = spec.realization()(grid.points())
    return PotentialField(grid, values, float(values.max()), float(values.min()), False, spec)


def normalize(field: PotentialField) -> PotentialField:
    """Shift the field so that its grid minimum is 0."""
    low = float(field.values.min())
    if field.normalized and low == 0.0:
        return field
    values = field.values - low
    return PotentialField(
        field.grid,
        values,
        float(values.max()),
        field.vlow if field.normalized else low,
        True,
        field.spec,
    )


def default_spacing(spec: EnsembleSpec) -> float:
    """Desk-scale resolution: 128 (1D) or 32 (2D) nodes per period, 32 or 8 per bump radius."""
    k = spec.kind
    fine = spec.dimension == 1
    if isinstance(k, ShiftedPeriodic):
        return k.period / (128 if fine else 32)
    if isinstance(k, PoissonBumps):
        return k.radius / (32 if fine else 8)
    return 1.0 / (64 if fine else 8)


@dataclass(frozen=True)
class BoundsEstimate:
    """Grid extrema of realizations on nested boxes ``[-R, R]^d``.

    ``vlow[i, j]`` and ``vbar[i, j]`` belong to realization ``i`` and radius
    ``radii[j]``.
    """

    radii: tuple[float, ...]
    seeds: tuple[int, ...]
    vlow: np.ndarray
    vbar: np.ndarray

    def per_radius(self) -> list[tuple[float, float]]:
        return [(float(lo), float(hi)) for lo, hi in zip(self.vlow.min(axis=0), self.vbar.max(axis=0))]

    @property
    def lower(self) -> float:
        return float(self.vlow[:, -1].min())

    @property
    def upper(self) -> float:
        return float(self.vbar[:, -1].max())

    @property
    def oscillation(self) -> float:
        """Estimated ``sup V - inf V`` at the largest radius."""
        return self.upper - self.lower


def estimate_bounds(spec: EnsembleSpec, box_radii, samples: int, spacing: float | None = None) -> BoundsEstimate:
    if samples < 1:
        raise ValueError("estimate_bounds needs at least one sample")
    radii = tuple(float(r) for r in box_radii)
    if not radii or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("box radii must be nonempty and strictly increasing")
    h = spacing or default_spacing(spec)
    seeds = tuple(realization_seeds(spec.seed, samples))
    vlow = np.empty((samples, len(radii)))
    vbar = np.empty_like(vlow)
    for i, s in enumerate(seeds):
        real = spec.with_seed(s).realization()
        for j, R in enumerate(radii):
            R_grid = math.ceil(R / h) * h
            values = real(Grid(spec.dimension, h, R_grid).points())
            vlow[i, j] = values.min()
            vbar[i, j] = values.max()
    return BoundsEstimate(radii, seeds, vlow, vbar)
