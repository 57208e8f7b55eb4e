"""The discounted cell problem ``delta v + H(p + Dv) - V = 0``.

``H(q) = (|q|^2 - 1)^2``. The discrete equation is a Lax-Friedrichs scheme:
central gradient plus ``alpha/2`` times the jump of one-sided differences
per axis. In 1D ``alpha`` is local (the largest ``|H'|`` between the two
one-sided slopes); in 2D it is the global a priori bound. Either way the
scheme is monotone, so its solution inherits the comparison bounds.

The nonlinear system is solved with semismooth Newton and a max-norm line
search; pseudo-time iterations ``v <- v - tau F(v)`` take over when Newton
stalls. ``-delta v(0)`` approximates ``Hbar(p)`` as ``delta -> 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import io
from .field import EnsembleSpec, PotentialField, ShiftedPeriodic, Constant
from .grid import Grid

_CRIT = 1.0 / math.sqrt(3.0)  # critical points of H'(q) = 4 q (q^2 - 1) in 1D


class CellSolverError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


def hamiltonian(q) -> np.ndarray:
    """``H`` for ``q`` of shape ``(d, ...)``."""
    s = np.sum(np.asarray(q) ** 2, axis=0)
    return (s - 1.0) ** 2


def h0(p) -> float:
    return float((np.dot(p, p) - 1.0) ** 2)


def gradient_bound(p, vbar: float) -> float:
    """A priori bound on ``|p + Dv|`` from ``(|q|^2-1)^2 <= H(p) + vbar``."""
    return math.sqrt(1.0 + math.sqrt(h0(p) + vbar))


def dissipation_bound(radius: float) -> float:
    """``max |dH/dq_k|`` over the ball of the given radius."""
    inner = 4.0 * (1 - _CRIT**2) * _CRIT if radius >= _CRIT else 0.0
    return max(4.0 * abs(radius**2 - 1.0) * radius, inner)


def _dh1(q):
    return 4.0 * q * (q * q - 1.0)


def _d2h1(q):
    return 12.0 * q * q - 4.0


def local_alpha(a, b) -> np.ndarray:
    """``max |H'|`` over ``[min(a,b), max(a,b)]`` for the 1D Hamiltonian."""
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    alpha = np.maximum(np.abs(_dh1(lo)), np.abs(_dh1(hi)))
    crit = abs(_dh1(_CRIT))
    inside = ((lo <= _CRIT) & (_CRIT <= hi)) | ((lo <= -_CRIT) & (-_CRIT <= hi))
    return np.where(inside, np.maximum(alpha, crit), alpha)


def _local_alpha(a, b):
    """Local ``max |H'|`` over ``[min(a,b), max(a,b)]`` and its derivatives in ``a`` and ``b``."""
    alpha, dm, dp = _box_alpha(np.asarray(a)[None], np.asarray(b)[None])
    return alpha[0], dm[0, 0], dp[0, 0]


def _box_alpha(qm, qp):
    """Per-axis ``max |dH/dq_k|`` over the box spanned by the one-sided slopes.

    ``qm`` and ``qp`` have shape ``(d, n)``. Returns ``alpha`` of shape ``(d, n)``
    and its derivatives ``dm[k, j] = d alpha_k / d qm_j`` and ``dp[k, j]``.
    With ``x = q_k`` and ``y`` the other component, ``dH/dq_k = 4 x (x^2 + y^2 - 1)``
    peaks over the box where ``y`` sits at an end of its interval or at 0, and
    ``x`` at an end or at ``+-sqrt((1 - y^2)/3)``. At the interior ``x`` the
    derivative in ``y`` is the partial one (envelope theorem).
    """
    d, n = qm.shape
    lo, hi = np.minimum(qm, qp), np.maximum(qm, qp)
    lo_is_m = qm <= qp
    alpha = np.zeros((d, n))
    dm = np.zeros((d, d, n))
    dp = np.zeros((d, d, n))
    zero = np.zeros(n)
    for k in range(d):
        j = 1 - k if d == 2 else None
        if j is None:
            ys = [(zero, None, np.ones(n, bool))]
        else:
            ys = [(lo[j], "lo", np.ones(n, bool)), (hi[j], "hi", np.ones(n, bool)), (zero, None, (lo[j] <= 0) & (hi[j] >= 0))]
        best = np.full(n, -1.0)
        # derivative of the winning |f| with respect to lo_k, hi_k, lo_j, hi_j
        g = np.zeros((4, n))
        for y, yend, ymask in ys:
            r = np.sqrt(np.maximum(1.0 - y * y, 0.0) / 3.0)
            xs = [(lo[k], 0), (hi[k], 1), (r, None), (-r, None)]
            for x, xend in xs:
                ok = ymask.copy()
                if xend is None:
                    ok &= (y * y < 1.0) & (lo[k] <= x) & (x <= hi[k])
                f = 4.0 * x * (x * x + y * y - 1.0)
                val = np.where(ok, np.abs(f), -1.0)
                win = val > best
                if not np.any(win):
                    continue
                best = np.where(win, val, best)
                sgn = np.sign(f)
                fx = sgn * 4.0 * (3.0 * x * x + y * y - 1.0)
                fy = sgn * 8.0 * x * y
                gk = np.zeros((4, n))
                if xend is not None:
                    gk[xend] = fx
                if yend == "lo":
                    gk[2] = fy
                elif yend == "hi":
                    gk[3] = fy
                g = np.where(win[None], gk, g)
        alpha[k] = best
        for axis, (glo, ghi) in ((k, (g[0], g[1])), (j, (g[2], g[3]))):
            if axis is None:
                continue
            dm[k, axis] = np.where(lo_is_m[axis], glo, ghi)
            dp[k, axis] = np.where(lo_is_m[axis], ghi, glo)
    return alpha, dm, dp


class _Operator:
    """Residual and Jacobian of the discrete cell equation on one grid."""

    def __init__(self, grid: Grid, vvals: np.ndarray, p, delta: float, dissipation: str, alpha: float):
        self.grid = grid
        self.shape = grid.shape
        self.d = grid.dimension
        self.h = grid.spacing
        self.V = np.asarray(vvals, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.delta = delta
        self.local = dissipation == "local"
        self.alpha = alpha
        n = grid.size
        self.idx = np.arange(n).reshape(self.shape)
        # Neighbour index maps; constant extrapolation on a box clamps at the edge.
        self.nbr = []
        for k in range(self.d):
            if grid.periodic:
                plus = np.roll(self.idx, -1, axis=k)
                minus = np.roll(self.idx, 1, axis=k)
            else:
                sl_p = [slice(None)] * self.d
                sl_m = [slice(None)] * self.d
                pad = np.pad(self.idx, [(1, 1) if j == k else (0, 0) for j in range(self.d)], mode="edge")
                sl_p[k] = slice(2, None)
                sl_m[k] = slice(None, -2)
                plus, minus = pad[tuple(sl_p)], pad[tuple(sl_m)]
            self.nbr.append((plus.ravel(), minus.ravel()))

    def _slopes(self, v):
        flat = v.ravel()
        qp = [(flat[pl] - flat) / self.h + self.p[k] for k, (pl, _) in enumerate(self.nbr)]
        qm = [(flat - flat[mi]) / self.h + self.p[k] for k, (_, mi) in enumerate(self.nbr)]
        return np.array(qp), np.array(qm)

    def residual(self, v, full=False):
        qp, qm = self._slopes(v)
        qc = 0.5 * (qp + qm)
        if self.local:
            alpha, dm, dp = _box_alpha(qm, qp)
        else:
            alpha = np.full(qp.shape, self.alpha)
            dm = dp = None
        r = self.delta * v.ravel() + hamiltonian(qc) - 0.5 * np.sum(alpha * (qp - qm), axis=0) - self.V.ravel()
        if full:
            return r, qp, qm, qc, alpha, dm, dp
        return r

    def jacobian(self, v):
        r, qp, qm, qc, alpha, dm, dp = self.residual(v, full=True)
        n = self.grid.size
        rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, self.delta)]
        s = np.sum(qc**2, axis=0)
        jump = qp - qm
        for k, (pl, mi) in enumerate(self.nbr):
            c = 0.5 * 4.0 * (s - 1.0) * qc[k]  # dH/dq_k * 1/2
            a = alpha[k]
            dqp = c - 0.5 * a  # d r / d qp_k
            dqm = c + 0.5 * a  # d r / d qm_k
            if self.local:
                dqp = dqp - 0.5 * np.sum(jump * dp[:, k], axis=0)
                dqm = dqm - 0.5 * np.sum(jump * dm[:, k], axis=0)
            # qp = (v[pl] - v)/h, qm = (v - v[mi])/h
            rows += [np.arange(n), np.arange(n), np.arange(n)]
            cols += [pl, mi, np.arange(n)]
            vals += [dqp / self.h, -dqm / self.h, (dqm - dqp) / self.h]
        J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return r, J

    def pseudo_step(self) -> float:
        a = self.alpha
        return 0.4 * self.h / (2 * self.d * a + self.delta * self.h)


@dataclass(frozen=True, eq=False)
class CellSolution:
    p: np.ndarray
    delta: float
    grid: Grid
    values: np.ndarray
    residual: float
    iterations: int
    vmin: float
    vmax: float
    history: tuple = field(default=(), repr=False)

    @property
    def minus_delta_v0(self) -> float:
        return float(-self.delta * self.values[self.grid.index_of(np.zeros(self.grid.dimension))])

    def bounds(self) -> tuple[float, float]:
        """Comparison bounds ``-(H(p) - min V)/delta <= v <= -(H(p) - max V)/delta``."""
        hp = h0(self.p)
        return -(hp - self.vmin) / self.delta, -(hp - self.vmax) / self.delta

    def bound_violation(self) -> float:
        lo, hi = self.bounds()
        return float(max(np.max(lo - self.values), np.max(self.values - hi), 0.0))

    def lipschitz(self) -> float:
        """Largest one-sided difference quotient of ``v``."""
        g = self.grid
        out = 0.0
        for k in range(g.dimension):
            dv = np.diff(self.values, axis=k) / g.spacing
            if dv.size:
                out = max(out, float(np.max(np.abs(dv))))
        return out

    def lipschitz_bound(self, vbar: float) -> float:
        return gradient_bound(self.p, vbar) + float(np.linalg.norm(self.p))

    def row(self) -> list:
        return [*self.p, self.delta, self.minus_delta_v0, self.residual, self.iterations]

    def export(self, stem, full_field: bool = False) -> Path:
        stem = Path(stem)
        d = len(self.p)
        names = [f"p{k + 1}" for k in range(d)] + ["delta", "minus_delta_v_at_0", "residual", "iterations"]
        path = io.write_csv(io.sibling(stem, ".csv"), names, [[x] for x in self.row()])
        if full_field:
            coords = self.grid.points().reshape(d, -1)
            io.write_csv(
                stem.with_name(stem.name + "_field.csv"),
                ["x", "y"][:d] + ["v"],
                [*coords, self.values.ravel()],
            )
        return path


def write_ladder(path, solutions) -> Path:
    """One row per solve: ``(p..., delta, minus_delta_v_at_0, residual, iterations)``."""
    solutions = list(solutions)
    d = len(solutions[0].p) if solutions else 1
    names = [f"p{k + 1}" for k in range(d)] + ["delta", "minus_delta_v_at_0", "residual", "iterations"]
    rows = [s.row() for s in solutions]
    cols = [[r[j] for r in rows] for j in range(len(names))]
    return io.write_csv(path, names, cols)


def cell_tolerance(p, vbar: float) -> float:
    return 1e-6 * (1.0 + h0(p) + vbar)


def cell_domain(spec: EnsembleSpec, delta: float, spacing: float | None = None, extent_factor: float | None = None) -> Grid:
    """Periodic cell for periodic or constant ensembles, else a box of half-extent ``s/delta``."""
    k = spec.kind
    d = spec.dimension
    if isinstance(k, ShiftedPeriodic):
        h = spacing or k.period / (1024 if d == 1 else 64)
        return Grid(d, h, k.period / 2, periodic=True)
    if isinstance(k, Constant):
        h = spacing or 1.0 / 16
        return Grid(d, h, 0.5, periodic=True)
    h = spacing or k.radius / 8
    s = extent_factor or 2.0 * (1.0 + math.sqrt(spec.bound + 1.0))
    half = math.ceil(s / delta / h) * h
    return Grid(d, h, half, periodic=False)


COARSEST_NODES = 64


def _newton(op: _Operator, v, target, max_newton, max_pseudo, history):
    """Semismooth Newton with an l2 Armijo line search; pseudo-time bursts on stalls."""
    r = op.residual(v)
    res = float(np.max(np.abs(r)))
    history.append(res)
    it = 0
    pseudo_used = 0
    tau = op.pseudo_step()
    while res > target:
        if it >= max_newton:
            raise CellSolverError(f"no convergence after {it} Newton steps (residual {res:.3e})", history)
        it += 1
        r, J = op.jacobian(v)
        try:
            dv = spl.spsolve(J.tocsc(), -r)
        except RuntimeError:
            dv = np.full_like(v, np.nan)
        merit = float(r @ r)
        t = 1.0
        accepted = False
        while np.all(np.isfinite(dv)) and t >= 1e-10:
            vn = v + t * dv
            rn = op.residual(vn)
            if float(rn @ rn) <= merit * (1 - 1e-4 * t):
                accepted = True
                break
            t *= 0.5
        if accepted:
            v, res = vn, float(np.max(np.abs(rn)))
        else:
            burst = min(2000, max_pseudo - pseudo_used)
            if burst <= 0:
                raise CellSolverError(f"Newton stalled and pseudo-time budget exhausted (residual {res:.3e})", history)
            for _ in range(burst):
                v = v - tau * op.residual(v)
            pseudo_used += burst
            res = float(np.max(np.abs(op.residual(v))))
        history.append(res)
    return v, res, it


def _levels(grid: Grid, values: np.ndarray):
    """Grid hierarchy by repeated 2x coarsening, finest first."""
    out = [(grid, values)]
    while grid.cells % 2 == 0 and grid.nodes_per_axis > COARSEST_NODES:
        grid = Grid(grid.dimension, 2 * grid.spacing, grid.half_extent, grid.periodic)
        values = values[(slice(None, None, 2),) * grid.dimension]
        out.append((grid, values))
    return out


def solve_cell(
    field: PotentialField,
    p,
    delta: float,
    *,
    dissipation: str | None = None,
    tol: float | None = None,
    max_newton: int = 400,
    max_pseudo: int = 20000,
    initial=None,
    nested: bool = True,
) -> CellSolution:
    """Solve the discrete cell problem on ``field.grid`` and return ``v``.

    With ``nested`` the problem is first solved on 2x coarsenings of the grid
    (down to about 64 nodes per axis). Each solution, interpolated, starts
    Newton on the next finer grid. Without a good start, Newton can crawl
    where the solution has kinks, as it does on the flat hilltop.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not field.normalized:
        raise ValueError("solve_cell needs a normalized field (min V = 0)")
    g = field.grid
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (g.dimension,):
        raise ValueError(f"momentum must have {g.dimension} components")
    dissipation = dissipation or "local"
    if dissipation not in ("local", "global"):
        raise ValueError(f"unknown dissipation {dissipation!r}")
    vmin, vmax = float(field.values.min()), float(field.values.max())
    vbar = vmax - vmin
    alpha = dissipation_bound(gradient_bound(p, vbar))
    tol = cell_tolerance(p, vbar) if tol is None else tol
    target = delta * tol
    hp = h0(p)

    levels = _levels(g, field.values) if nested and initial is None else [(g, field.values)]
    history = []
    v = None
    iterations = 0
    for grid, vals in reversed(levels):
        op = _Operator(grid, vals, p, delta, dissipation, alpha)
        if v is None:
            if initial is None:
                v = np.full(grid.size, -(hp - 0.5 * (vmin + vmax)) / delta)
            else:
                v = np.asarray(initial, dtype=float).ravel().copy()
        else:
            v = PotentialField.from_values(coarse_grid, v).interpolate(grid.points()).ravel()
        v, res, it = _newton(op, v, target, max_newton, max_pseudo, history)
        iterations += it
        coarse_grid = grid

    values = v.reshape(g.shape)
    values.setflags(write=False)
    return CellSolution(p, float(delta), g, values, res, iterations, vmin, vmax, tuple(history))


def check_p_continuity(field: PotentialField, p, q, delta: float, **kwargs) -> float:
    """``max |delta v(., p) - delta v(., q)| / |p - q|``; zero when ``p == q``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    step = float(np.linalg.norm(p - q))
    if step == 0:
        return 0.0
    a = solve_cell(field, p, delta, **kwargs)
    b = solve_cell(field, q, delta, **kwargs)
    return float(np.max(np.abs(delta * (a.values - b.values)))) / step
