"""The effective Hamiltonian built from limit shapes.

For ``H(q) = (|q|^2 - 1)^2`` the value ``Hbar(p)`` is read off the shapes
``mbar_{mu,sigma}``. With ``gap(mu, sigma; p) = min_e (mbar_{mu,sigma}(e) - p.e)``,

* ``Hbar^-(p) = sup{mu in [0, kappa] : gap(mu, -1; p) >= 0}``, or ``-inf`` if the set is empty,
* ``Hbar^+(p) = inf{mu >= 0 : gap(mu, +1; p) >= 0}``,
* ``Hbar = Hbar^-`` when finite and ``Hbar^+`` otherwise.

Regions K1..K4 come from walking the admissible path
``(mu*, sigma*) -> (0, -1) -> (0, 1) -> (inf, 1)`` and locating the first
parameter pair whose shape supports the plane ``p.y``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import io
from .metric import ADMISSIBILITY_TOL, ParamPair
from .shape import ShapeFunction, ShapeSampler

TOL_MU = 1e-3
SIGMA_STEP = 1e-2
MAX_BISECTIONS = 40
REGIONS = ("K1", "K2", "K3", "K4")


class BracketError(RuntimeError):
    """The upper bisection bracket for ``Hbar^+`` does not support the plane."""


@dataclass(frozen=True)
class EffConstants:
    vbar: float
    kappa: float
    mu_star: float
    sigma_star: float

    @classmethod
    def from_vbar(cls, vbar: float) -> "EffConstants":
        if vbar < 0:
            raise ValueError("vbar must be nonnegative")
        kappa = 1.0 - vbar
        if kappa >= 0:
            return cls(vbar, kappa, kappa, -1.0)
        return cls(vbar, kappa, 0.0, -1.0 / math.sqrt(vbar))

    @property
    def star(self) -> ParamPair:
        return ParamPair(self.mu_star, self.sigma_star)

    def to_dict(self) -> dict:
        return {"vbar": self.vbar, "kappa": self.kappa, "mu_star": self.mu_star, "sigma_star": self.sigma_star}


class CachedShapeProvider:
    """Memoized ``(mu, sigma) -> ShapeFunction`` on a quantized lattice.

    Requests are rounded to multiples of ``mu_step`` and ``sigma_step``. When
    rounding would leave the admissible set the admissible neighbour is used
    instead, so the provider never turns an admissible request into a -inf
    shape. Each key is computed once under a lock; readers share the result.
    """

    def __init__(
        self,
        source: Callable[[ParamPair], ShapeFunction],
        *,
        vbar: float,
        dimension: int,
        directions,
        mu_step: float = TOL_MU,
        sigma_step: float = SIGMA_STEP,
    ):
        self.source = source
        self.vbar = float(vbar)
        self.dimension = int(dimension)
        self.directions = np.asarray(directions, dtype=float)
        self.mu_step = mu_step
        self.sigma_step = sigma_step
        self.constants = EffConstants.from_vbar(self.vbar)
        self.cache: dict[tuple[float, float], ShapeFunction] = {}
        self._lock = threading.Lock()
        self._key_locks: dict[tuple[float, float], threading.Lock] = {}

    @classmethod
    def from_sampler(cls, sampler: ShapeSampler, **kwargs) -> "CachedShapeProvider":
        return cls(
            sampler.shape, vbar=sampler.vbar, dimension=sampler.dimension, directions=sampler.directions, **kwargs
        )

    def quantize(self, mu: float, sigma: float) -> ParamPair:
        im = round(mu / self.mu_step)
        js = round(sigma / self.sigma_step)
        q = ParamPair(max(im, 0) * self.mu_step, min(max(js * self.sigma_step, -1.0), 1.0))
        if ParamPair(mu, sigma).admissible(self.vbar) and not q.admissible(self.vbar):
            # Rounding crossed the admissibility boundary; step back inside.
            if sigma < 0:
                q = ParamPair(math.floor(mu / self.mu_step) * self.mu_step, q.sigma)
            if not q.admissible(self.vbar):
                q = ParamPair(q.mu, min(math.ceil(sigma / self.sigma_step) * self.sigma_step, 1.0))
            if not q.admissible(self.vbar):
                q = ParamPair(mu, sigma)
        return q

    def __call__(self, mu: float, sigma: float) -> ShapeFunction:
        q = self.quantize(mu, sigma)
        key = (q.mu, q.sigma)
        shape = self.cache.get(key)
        if shape is not None:
            return shape
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            shape = self.cache.get(key)
            if shape is None:
                shape = self.source(q)
                self.cache[key] = shape
        return shape


def _as_momentum(p, dimension: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (dimension,):
        raise ValueError(f"momentum must have {dimension} components")
    return p


def support_gap(shape: ShapeFunction, p) -> float:
    """``min over unit e of mbar(e) - p.e`` for the stored shape.

    In 1D the minimum runs over the two directions. In 2D it is the exact
    minimum of the piecewise-linear-in-angle interpolant minus ``|p| cos``:
    on each interval the only interior minimum sits where
    ``s + |p| sin(theta - phi) = 0`` with ``cos(theta - phi) > 0``.
    """
    if not shape.finite:
        return -np.inf
    p = _as_momentum(p, shape.dimension)
    if shape.dimension == 1:
        return float(np.min(shape.values - shape.directions[:, 0] * p[0]))
    th, val = shape._sorted()
    phi = math.atan2(p[1], p[0])
    r = math.hypot(p[0], p[1])
    best = float(np.min(val - r * np.cos(th - phi)))
    if r == 0:
        return best
    th1 = np.concatenate([th[1:], [th[0] + 2 * np.pi]])
    val1 = np.concatenate([val[1:], [val[0]]])
    slope = (val1 - val) / (th1 - th)
    ok = np.abs(slope) <= r
    if np.any(ok):
        crit = phi + np.arcsin(-slope[ok] / r)
        t = np.mod(crit - th[ok], 2 * np.pi)
        inside = t < (th1 - th)[ok]
        if np.any(inside):
            g = val[ok][inside] + slope[ok][inside] * t[inside] - r * np.cos(th[ok][inside] + t[inside] - phi)
            best = min(best, float(np.min(g)))
    return best


def gap_tolerance(shape: ShapeFunction) -> float:
    """``2 (stderr + interpolation bound)`` for deciding strict support."""
    if not shape.finite:
        return 0.0
    err = float(np.max(shape.stderr)) if shape.stderr.size else 0.0
    interp = 0.0
    if shape.dimension == 2 and len(shape.values) >= 3:
        _, val = shape._sorted()
        interp = float(np.max(np.abs(np.roll(val, -1) - 2 * val + np.roll(val, 1)))) / 8
    return 2 * (err + interp)


def hbar_minus(p, provider: CachedShapeProvider, tol_mu: float = TOL_MU) -> float:
    kappa = provider.constants.kappa
    if kappa < 0:
        return -np.inf
    if support_gap(provider(0.0, -1.0), p) < 0:
        return -np.inf
    top = provider.quantize(kappa, -1.0).mu
    if support_gap(provider(top, -1.0), p) >= 0:
        return kappa
    lo, hi = 0.0, top
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol_mu:
            break
        mid = provider.quantize(0.5 * (lo + hi), -1.0).mu
        if mid <= lo or mid >= hi:
            break
        if support_gap(provider(mid, -1.0), p) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def hbar_plus(p, provider: CachedShapeProvider, tol_mu: float = TOL_MU) -> float:
    if support_gap(provider(0.0, 1.0), p) >= 0:
        return 0.0
    pn = float(np.linalg.norm(np.atleast_1d(p)))
    hi = provider.quantize((pn * pn - 1) ** 2 + provider.vbar + 1, 1.0).mu
    if support_gap(provider(hi, 1.0), p) < 0:
        raise BracketError(f"gap at mu_hi={hi} is negative for p={p}; the shape is underestimated")
    lo = 0.0
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= tol_mu:
            break
        mid = provider.quantize(0.5 * (lo + hi), 1.0).mu
        if mid <= lo or mid >= hi:
            break
        if support_gap(provider(mid, 1.0), p) >= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class HbarPoint:
    p: np.ndarray
    value: float
    region: str
    hminus: float
    hplus: float
    tangency: tuple[float, float]
    flagged: bool
    tol_gap: float


# Coarse strides used by the path walk before bisection refinement.
_WALK_MU_STRIDE = 0.05
_WALK_SIGMA_STRIDE = 0.1


def _walk_path(p, provider: CachedShapeProvider, tol_mu: float, tol_gap: float | None):
    """First pair along the admissible path whose shape supports ``p.y``.

    Returns ``(region, (mu, sigma), tol_gap)``. The path is marched on a coarse
    lattice, then the bracketing stride is bisected down to ``tol_mu`` (or
    the sigma step on the ``mu = 0`` leg).
    """
    c = provider.constants

    def gap(mu, sigma):
        return support_gap(provider(mu, sigma), p)

    # Parametrize the three legs by t and return (mu, sigma).
    legs = []
    if c.mu_star > 0:
        legs.append(("A", lambda t: (c.mu_star - t, -1.0), c.mu_star, tol_mu, _WALK_MU_STRIDE))
        sig0 = -1.0
    else:
        sig0 = c.sigma_star
    legs.append(("B", lambda t: (0.0, sig0 + t), 1.0 - sig0, provider.sigma_step, _WALK_SIGMA_STRIDE))
    pn = float(np.linalg.norm(np.atleast_1d(p)))
    mu_hi = (pn * pn - 1) ** 2 + provider.vbar + 1
    legs.append(("C", lambda t: (t, 1.0), mu_hi, tol_mu, _WALK_MU_STRIDE))

    start = legs[0][1](0.0)
    first_step = legs[0][3]
    first = legs[0][1](first_step)
    tg = gap_tolerance(provider(*start)) if tol_gap is None else tol_gap
    if tol_gap is None:
        tg = max(tg, gap_tolerance(provider(*first)))
    if gap(*first) > tg:
        return "K1", start, tg

    for name, point, length, fine, stride in legs:
        t_prev = 0.0
        ts = np.arange(stride, length, stride).tolist() + [length]
        for t in ts:
            if gap(*point(t)) >= 0:
                lo, hi = t_prev, t
                # The leg start was rejected already, except for leg A whose start is (mu*, sigma*).
                if name == "A" and t_prev == 0.0:
                    lo = 0.0
                for _ in range(MAX_BISECTIONS):
                    if hi - lo <= fine:
                        break
                    mid = 0.5 * (lo + hi)
                    if gap(*point(mid)) >= 0:
                        hi = mid
                    else:
                        lo = mid
                mu, sigma = point(hi)
                return _label(name, mu, tol_mu), (mu, sigma), tg
            t_prev = t
    raise BracketError(f"no supporting pair found along the path for p={p}")


def _label(leg: str, mu: float, tol_mu: float) -> str:
    if leg == "A":
        return "K3" if mu <= tol_mu else "K2"
    if leg == "B":
        return "K3"
    return "K3" if mu <= tol_mu else "K4"


def evaluate(p, provider: CachedShapeProvider, tol_mu: float = TOL_MU, tol_gap: float | None = None) -> HbarPoint:
    """Value, region and diagnostics of ``Hbar`` at one momentum."""
    p = _as_momentum(p, provider.dimension)
    hm = hbar_minus(p, provider, tol_mu)
    hp = hbar_plus(p, provider, tol_mu) if not np.isfinite(hm) else np.nan
    value = hm if np.isfinite(hm) else hp
    region, tangency, tg = _walk_path(p, provider, tol_mu, tol_gap)
    mu_t, sigma_t = tuple(tangency)
    c = provider.constants
    expected = {"K1": c.mu_star, "K2": mu_t, "K3": 0.0, "K4": mu_t}[region]
    flagged = abs(value - expected) > 2 * tol_mu
    return HbarPoint(p, float(value), region, float(hm), float(hp), (mu_t, sigma_t), bool(flagged), tg)


def hbar(p, provider: CachedShapeProvider, tol_mu: float = TOL_MU) -> tuple[float, str]:
    pt = evaluate(p, provider, tol_mu)
    return pt.value, pt.region


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    p_grid: np.ndarray  # (n, d)
    values: np.ndarray
    region: np.ndarray
    constants: EffConstants
    shape_cache: dict = field(repr=False, default_factory=dict)
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    hminus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hplus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tangency: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    tolerances: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.p_grid.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.p_grid, axis=1)

    def sandwich_violation(self) -> float:
        """Largest amount by which a node leaves ``[H0 - vbar, H0]``, ``H0 = (|p|^2-1)^2``."""
        if len(self.values) == 0:
            return 0.0
        h0 = (self.norms**2 - 1) ** 2
        over = self.values - h0
        under = (h0 - self.constants.vbar) - self.values
        return float(max(np.max(over), np.max(under)))

    def interpolator(self) -> Callable:
        """Piecewise-linear ``Hbar`` on the table (1D) or on a tensor p-grid (2D)."""
        if self.dimension == 1:
            order = np.argsort(self.p_grid[:, 0])
            xs, ys = self.p_grid[order, 0], self.values[order]
            lo, hi = xs[0], xs[-1]

            def h1(q):
                q = np.asarray(q, dtype=float)
                if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
                    raise ValueError(f"gradient outside the tabulated range [{lo}, {hi}]")
                return np.interp(q, xs, ys)

            h1.range = (lo, hi)
            return h1
        from scipy.interpolate import RegularGridInterpolator

        ax0, ax1 = np.unique(self.p_grid[:, 0]), np.unique(self.p_grid[:, 1])
        if len(ax0) * len(ax1) != len(self.values):
            raise ValueError("2D interpolation needs a tensor-product p-grid")
        table = np.full((len(ax0), len(ax1)), np.nan)
        table[np.searchsorted(ax0, self.p_grid[:, 0]), np.searchsorted(ax1, self.p_grid[:, 1])] = self.values
        return RegularGridInterpolator((ax0, ax1), table, bounds_error=True)

    def header(self) -> dict:
        return {"constants": self.constants.to_dict(), "tolerances": self.tolerances, "flagged": int(self.flagged.sum())}

    def export(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        names = ["p1", "p2"][: self.dimension] + ["hbar", "region"]
        cols = [*self.p_grid.T, self.values, list(self.region)]
        return io.write_csv(io.sibling(stem, ".csv"), names, cols), io.write_json(io.sibling(stem, ".json"), self.header())


def tabulate(p_grid, provider: CachedShapeProvider, tol_mu: float = TOL_MU, tol_gap: float | None = None) -> EffectiveHamiltonian:
    """Evaluate ``Hbar`` and its region label on every node of ``p_grid``."""
    d = provider.dimension
    pts = np.asarray(p_grid, dtype=float).reshape(-1, d) if np.size(p_grid) else np.zeros((0, d))
    rows = [evaluate(p, provider, tol_mu, tol_gap) for p in pts]
    return EffectiveHamiltonian(
        p_grid=pts,
        values=np.array([r.value for r in rows]),
        region=np.array([r.region for r in rows], dtype=object),
        constants=provider.constants,
        shape_cache=dict(provider.cache),
        flagged=np.array([r.flagged for r in rows], dtype=bool),
        hminus=np.array([r.hminus for r in rows]),
        hplus=np.array([r.hplus for r in rows]),
        tangency=np.array([r.tangency for r in rows]).reshape(-1, 2),
        tolerances={
            "tol_mu": tol_mu,
            "tol_gap": tol_gap if tol_gap is not None else max((r.tol_gap for r in rows), default=0.0),
            "admissibility": ADMISSIBILITY_TOL,
        },
    )
