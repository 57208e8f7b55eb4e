"""Time-dependent problems: the oscillatory equation and its homogenized limit.

Both are advanced with forward Euler and a monotone numerical Hamiltonian.
In 2D, and for the homogenized run, that is Lax-Friedrichs:

    u <- u - dt * (H(central gradient) - sum_k alpha/2 (q+_k - q-_k) - forcing)

The 1D oscillatory run defaults to the Godunov flux, which is monotone under
the same time step and adds no artificial viscosity. The oscillatory run
uses ``H(q) = (|q|^2-1)^2`` with forcing ``V(x/eps)``. The homogenized run
uses the tabulated ``Hbar`` through its interpolant and no forcing. Outside the box, ghost values copy the increments of the initial
data. That is an extrapolated Neumann closure; it is exact for linear data
and keeps the scheme monotone.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import io
from .cell import dissipation_bound, h0, hamiltonian
from .effham import EffectiveHamiltonian
from .field import PotentialField
from .grid import Grid

MIN_NODES_PER_EPS = 8
DEFAULT_CFL = 0.4


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    epsilon: float  # 0 marks a homogenized run
    initial_data: str
    grid: Grid
    times: tuple
    slices: np.ndarray  # (len(times), *grid.shape)
    dt: float
    alpha: float
    steps: int
    error_vs_reference: float | None = None
    error_history: np.ndarray | None = field(default=None, repr=False)

    def slice_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise KeyError(f"no slice at t={t}")
        return self.slices[i]

    def manifest(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "initial_data": self.initial_data,
            "grid": self.grid.to_dict(),
            "times": list(self.times),
            "dt": self.dt,
            "alpha": self.alpha,
            "cfl": self.dt * 2 * self.grid.dimension * self.alpha / self.grid.spacing,
            "steps": self.steps,
            "error_vs_reference": self.error_vs_reference,
        }

    def export(self, stem) -> list[Path]:
        stem = Path(stem)
        d = self.grid.dimension
        coords = self.grid.points().reshape(d, -1)
        paths = []
        for i, t in enumerate(self.times):
            paths.append(
                io.write_csv(
                    stem.with_name(f"{stem.name}_t{i:03d}.csv"),
                    ["x", "y"][:d] + ["u"],
                    [*coords, self.slices[i].ravel()],
                )
            )
        paths.append(io.write_json(io.sibling(stem, ".json"), self.manifest()))
        return paths


def evolution_grid(
    epsilon: float,
    k: float,
    T: float,
    alpha: float,
    *,
    nodes_per_eps: int = 16,
    dimension: int = 1,
    margin: float = 0.5,
) -> Grid:
    """Box ``B_{k + T alpha + margin}`` at spacing ``epsilon / nodes_per_eps``."""
    h = epsilon / nodes_per_eps
    half = math.ceil((k + T * alpha + margin) / h) * h
    return Grid(dimension, h, half)


def _take(a, idx, axis):
    return np.take(a, [idx], axis=axis)


class _Stepper:
    """One-sided slopes with the initial-data ghost closure."""

    def __init__(self, grid: Grid, g0: np.ndarray, g: Callable):
        self.grid = grid
        self.h = grid.spacing
        self.incr = []
        if not grid.periodic:
            pts = grid.points()
            for k in range(grid.dimension):
                lo, hi = pts.copy(), pts.copy()
                lo[k] -= self.h
                hi[k] += self.h
                glo = np.asarray(g(_take(lo, 0, k + 1)), dtype=float)
                ghi = np.asarray(g(_take(hi, -1, k + 1)), dtype=float)
                self.incr.append((glo - _take(g0, 0, k), ghi - _take(g0, -1, k)))

    def slopes(self, u):
        qp, qm = [], []
        for k in range(u.ndim):
            if self.grid.periodic:
                up, um = np.roll(u, -1, axis=k), np.roll(u, 1, axis=k)
            else:
                lo_inc, hi_inc = self.incr[k]
                head = [slice(None)] * u.ndim
                tail = [slice(None)] * u.ndim
                head[k], tail[k] = slice(1, None), slice(None, -1)
                up = np.concatenate([u[tuple(head)], _take(u, -1, k) + hi_inc], axis=k)
                um = np.concatenate([_take(u, 0, k) + lo_inc, u[tuple(tail)]], axis=k)
            qp.append((up - u) / self.h)
            qm.append((u - um) / self.h)
        return np.array(qp), np.array(qm)


def _data_level(grid: Grid, g0: np.ndarray, stepper: _Stepper) -> float:
    """``max H`` over the one-sided slopes of the data.

    Where an axis has a concave kink (``q- > q+``) the whole interval between
    the slopes counts, since it lies in the superdifferential. ``H`` is convex
    in ``s = |q|^2``, so only the smallest and largest ``s`` matter.
    """
    qp, qm = stepper.slopes(g0)
    a2, b2 = qp * qp, qm * qm
    straddle = (qp < qm) & (qp <= 0) & (qm >= 0)
    smin = np.sum(np.where(straddle, 0.0, np.minimum(a2, b2)), axis=0)
    smax = np.sum(np.maximum(a2, b2), axis=0)
    return float(max(np.max((smin - 1.0) ** 2), np.max((smax - 1.0) ** 2)))


def _level_dissipation(level: float, vbar: float) -> float:
    return dissipation_bound(math.sqrt(1.0 + math.sqrt(vbar + max(level, vbar))))


def plane_dissipation(p, vbar: float) -> float:
    """:func:`data_dissipation` for plane data ``p . x`` (exact slopes)."""
    return _level_dissipation(h0(np.atleast_1d(np.asarray(p, dtype=float))), vbar)


def data_dissipation(grid: Grid, g: Callable, vbar: float) -> float:
    """A priori ``max |dH/dq_k|`` for data ``g`` on ``grid``.

    The comparison principle bounds ``|u_t|`` by ``max(L, vbar)`` where ``L``
    is the largest ``H(Dg)``. Then ``H(Du) <= vbar + max(L, vbar)``.
    """
    g0 = np.asarray(g(grid.points()), dtype=float).reshape(grid.shape)
    level = _data_level(grid, g0, _Stepper(grid, g0, g))
    return _level_dissipation(level, vbar)


def _march(
    grid: Grid,
    g: Callable,
    T: float,
    flux: Callable,
    alpha: float,
    forcing,
    *,
    times,
    cfl: float,
    reference,
    k,
    epsilon: float,
    name: str,
):
    if T < 0:
        raise ValueError("final time must be nonnegative")
    if not 0 < cfl <= 0.5:
        raise ValueError(f"CFL number {cfl} outside (0, 0.5]; the scheme would not be monotone")
    pts = grid.points()
    u = np.asarray(g(pts), dtype=float).reshape(grid.shape).copy()
    stepper = _Stepper(grid, u, g)
    dt = cfl * grid.spacing / (2 * grid.dimension * alpha)
    steps = max(1, math.ceil(T / dt)) if T > 0 else 0
    dt = T / steps if steps else 0.0
    want = sorted(set([0.0, T] + [float(t) for t in ([] if times is None else times)]))
    if any(t < 0 or t > T + 1e-12 for t in want):
        raise ValueError("slice times must lie in [0, T]")
    slice_steps = {int(round(t / dt)) if dt > 0 else 0: t for t in want}
    out_t, out_u = [], []

    inner = None
    err = None
    errs = []
    if reference is not None:
        radius = T if k is None else k
        inner = np.sqrt(np.sum(pts**2, axis=0)) <= radius + 1e-12
        err = float(np.max(np.abs(u[inner] - reference(pts[:, inner], 0.0)))) if inner.any() else 0.0
        errs.append(err)
    for s in range(steps + 1):
        if s in slice_steps:
            out_t.append(s * dt)
            out_u.append(u.copy())
        if s == steps:
            break
        qp, qm = stepper.slopes(u)
        u = u - dt * (flux(qp, qm) - forcing)
        if reference is not None and inner.any():
            e = float(np.max(np.abs(u[inner] - reference(pts[:, inner], (s + 1) * dt))))
            err = max(err, e)
            errs.append(e)
    return EvolutionResult(
        epsilon,
        name,
        grid,
        tuple(out_t),
        np.array(out_u),
        dt,
        alpha,
        steps,
        err,
        np.array(errs) if errs else None,
    )


def godunov_flux(qp, qm) -> np.ndarray:
    """Godunov numerical Hamiltonian of ``(q^2 - 1)^2`` in 1D.

    ``min H`` over ``[q-, q+]`` when ``q- <= q+``, else ``max H`` over ``[q+, q-]``.
    The extrema of ``H`` sit at ``q = +-1`` (value 0) and ``q = 0`` (value 1).
    """
    a, b = qm[0], qp[0]
    ha, hb = (a * a - 1.0) ** 2, (b * b - 1.0) ** 2
    lo, hi = np.minimum(ha, hb), np.maximum(ha, hb)
    well = ((a <= 1.0) & (1.0 <= b)) | ((a <= -1.0) & (-1.0 <= b))
    ridge = (b <= 0.0) & (0.0 <= a)
    return np.where(a <= b, np.where(well, 0.0, lo), np.where(ridge, np.maximum(hi, 1.0), hi))


def solve_oscillatory(
    potential,
    epsilon: float,
    g: Callable,
    T: float,
    grid: Grid,
    *,
    times=None,
    dissipation: str | None = None,
    cfl: float = DEFAULT_CFL,
    reference: Callable | None = None,
    k: float | None = None,
    name: str = "g",
    alpha: float | None = None,
) -> EvolutionResult:
    """``u_t + (|Du|^2 - 1)^2 - V(x/eps) = 0`` with ``u(., 0) = g``.

    ``potential`` is either a callable ``V(points)`` defined on all of R^d
    (such as ``Realization.normalized()``) or a :class:`PotentialField`,
    which is then interpolated. ``reference(points, t)`` enables the running
    sup error over ``B_k x [0, T]``. ``alpha`` may raise the a priori
    dissipation bound, e.g. to run several data sets with one time step.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if grid.spacing > epsilon / MIN_NODES_PER_EPS + 1e-15:
        raise ValueError(f"grid spacing {grid.spacing} does not resolve epsilon={epsilon} (need h <= eps/8)")
    vfun = potential.interpolate if isinstance(potential, PotentialField) else potential
    pts = grid.points()
    vx = np.asarray(vfun(pts / epsilon), dtype=float).reshape(grid.shape)
    vbar = float(vx.max() - min(vx.min(), 0.0))
    bound = data_dissipation(grid, g, vbar)
    if alpha is None:
        alpha = bound
    elif alpha < bound:
        raise ValueError(f"alpha={alpha} is below the a priori bound {bound:.6g}")
    dissipation = dissipation or ("godunov" if grid.dimension == 1 else "global")
    if dissipation not in ("godunov", "global"):
        raise ValueError(f"unknown numerical Hamiltonian {dissipation!r}")
    if dissipation == "godunov" and grid.dimension != 1:
        raise ValueError("the Godunov flux is implemented in 1D only")

    if dissipation == "godunov":
        flux = godunov_flux
    else:

        def flux(qp, qm):
            return hamiltonian(0.5 * (qp + qm)) - 0.5 * alpha * np.sum(qp - qm, axis=0)

    return _march(
        grid, g, T, flux, alpha, vx, times=times, cfl=cfl, reference=reference, k=k, epsilon=float(epsilon), name=name
    )


def table_slope_bound(table: EffectiveHamiltonian, level: float | None = None) -> float:
    """Largest finite-difference slope of the tabulated ``Hbar`` along each axis.

    With ``level`` only cells where the interpolant reaches ``Hbar <= level``
    count (the interpolant attains its cell minimum at a node).
    """
    keep = np.inf if level is None else level
    if table.dimension == 1:
        order = np.argsort(table.p_grid[:, 0])
        x, y = table.p_grid[order, 0], table.values[order]
        if len(x) < 2:
            return 0.0
        low = np.minimum(y[1:], y[:-1]) <= keep
        slopes = np.abs(np.diff(y) / np.diff(x))[low]
        return float(slopes.max()) if slopes.size else 0.0
    ax0, ax1 = np.unique(table.p_grid[:, 0]), np.unique(table.p_grid[:, 1])
    grid = np.full((len(ax0), len(ax1)), np.nan)
    grid[np.searchsorted(ax0, table.p_grid[:, 0]), np.searchsorted(ax1, table.p_grid[:, 1])] = table.values
    s0 = np.abs(np.diff(grid, axis=0)) / np.diff(ax0)[:, None]
    s1 = np.abs(np.diff(grid, axis=1)) / np.diff(ax1)[None, :]
    cells = np.minimum(np.minimum(grid[1:, 1:], grid[:-1, 1:]), np.minimum(grid[1:, :-1], grid[:-1, :-1])) <= keep
    if not cells.any():
        return 0.0
    # a bilinear cell's axis slope is a convex combination of its two edge slopes
    e0 = np.maximum(s0[:, 1:], s0[:, :-1])[cells]
    e1 = np.maximum(s1[1:, :], s1[:-1, :])[cells]
    return float(max(np.nanmax(e0), np.nanmax(e1)))


def _homogenized_level(grid: Grid, g: Callable, hbar_of, table: EffectiveHamiltonian) -> float | None:
    """``max Hbar`` over the data's slopes, as in :func:`_data_level`.

    In 1D the interpolant peaks over a concave-kink interval at an end or a
    table node. In 2D a concave kink returns ``None`` (use the full table).
    """
    g0 = np.asarray(g(grid.points()), dtype=float).reshape(grid.shape)
    qp, qm = _Stepper(grid, g0, g).slopes(g0)
    concave = qm > qp
    level = 0.0
    if np.any(concave):
        if grid.dimension != 1:
            return None
        lo, hi = qp[0][concave[0]], qm[0][concave[0]]
        nodes = table.p_grid[:, 0]
        covered = np.array([np.any((lo <= x) & (x <= hi)) for x in nodes])
        if covered.any():
            level = float(np.max(table.values[covered]))
    for pick in itertools.product((0, 1), repeat=grid.dimension):
        q = np.array([(qp, qm)[c][k] for k, c in enumerate(pick)])
        level = max(level, float(np.max(hbar_of(q))))
    return level


def solve_homogenized(
    table: EffectiveHamiltonian,
    g: Callable,
    T: float,
    grid: Grid,
    *,
    times=None,
    cfl: float = DEFAULT_CFL,
    reference: Callable | None = None,
    k: float | None = None,
    name: str = "g",
) -> EvolutionResult:
    """``u_t + Hbar(Du) = 0`` with ``Hbar`` read only through the table interpolant."""
    if table.dimension != grid.dimension:
        raise ValueError("table and grid dimensions differ")
    interp = table.interpolator()

    if grid.dimension == 1:

        def hbar_of(q):
            return interp(q[0])

    else:

        def hbar_of(q):
            return interp(np.moveaxis(q, 0, -1))

    try:
        level = _homogenized_level(grid, g, hbar_of, table)
    except ValueError as exc:
        raise ValueError(f"initial slopes leave the tabulated range: {exc}") from None
    # |u_t| <= level keeps Du in the sublevel set {Hbar <= level}
    alpha = max(table_slope_bound(table, level), 1e-12)

    def flux(qp, qm):
        try:
            return hbar_of(0.5 * (qp + qm)) - 0.5 * alpha * np.sum(qp - qm, axis=0)
        except ValueError as exc:
            raise ValueError(f"gradient left the tabulated range: {exc}") from None

    return _march(grid, g, T, flux, alpha, 0.0, times=times, cfl=cfl, reference=reference, k=k, epsilon=0.0, name=name)


def compare(a: EvolutionResult, b: EvolutionResult, k: float) -> float:
    """``sup |a - b|`` over ``B_k x [0, k]`` on the common slices."""
    if a.grid != b.grid:
        raise ValueError("results live on different grids")
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, atol=1e-9):
        raise ValueError("results have mismatched time slices")
    pts = a.grid.points()
    inner = np.sqrt(np.sum(pts**2, axis=0)) <= k + 1e-12
    keep = [i for i, t in enumerate(a.times) if t <= k + 1e-12]
    if not keep or not inner.any():
        return 0.0
    return float(max(np.max(np.abs(a.slices[i][inner] - b.slices[i][inner])) for i in keep))
