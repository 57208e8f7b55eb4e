"""Deterministic limit shapes ``mbar_{mu,sigma}`` from large-radius metric solves.

The shape in direction ``e`` is estimated as the realization average of
``m(R e, 0) / R`` at the largest radius of a ladder. The whole ladder is kept
for convergence diagnostics. In 2D the shape between sampled directions is
piecewise linear in the polar angle.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import io
from .field import Constant, EnsembleSpec, ShiftedPeriodic, default_spacing, normalize, sample_potential
from .grid import Grid
from .metric import DEFAULT_MARGIN, MetricStatus, ParamPair, solve_metric
from .rng import realization_seeds, stream

DEFAULT_RADII_FACTORS = (25.0, 50.0, 100.0)
DEFAULT_REALIZATIONS = 8


def default_directions(dimension: int, count: int | None = None) -> np.ndarray:
    if dimension == 1:
        return np.array([[1.0], [-1.0]])
    count = count or 32
    theta = 2 * np.pi * np.arange(count) / count
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


@dataclass(frozen=True, eq=False)
class ShapeFunction:
    """Directional samples of a limit shape.

    ``ladder[r, k]`` is the realization mean of ``m(R_r e_k, 0)/R_r``;
    ``values`` is the last row unless Richardson extrapolation was requested.
    """

    params: ParamPair
    directions: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    radii_used: tuple[float, ...]
    ladder: np.ndarray
    seeds: tuple[int, ...] = ()
    status: MetricStatus = MetricStatus.FINITE
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def finite(self) -> bool:
        return self.status is MetricStatus.FINITE

    @property
    def dimension(self) -> int:
        return self.directions.shape[1]

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.directions[:, 1], self.directions[:, 0])

    def _sorted(self):
        th = np.mod(self.angles, 2 * np.pi)
        order = np.argsort(th)
        return th[order], self.values[order]

    def value_at(self, angles) -> np.ndarray:
        """Shape at unit vectors with the given polar angles (2D)."""
        th, val = self._sorted()
        th_ext = np.concatenate([th, [th[0] + 2 * np.pi]])
        val_ext = np.concatenate([val, [val[0]]])
        a = np.mod(np.asarray(angles, dtype=float) - th[0], 2 * np.pi) + th[0]
        return np.interp(a, th_ext, val_ext)

    def __call__(self, y) -> np.ndarray:
        """Positively homogeneous extension; ``y`` has shape ``(d, ...)``."""
        y = np.asarray(y, dtype=float)
        if not self.finite:
            return np.full(y.shape[1:], -np.inf)
        if self.dimension == 1:
            plus = self.values[np.argmax(self.directions[:, 0])]
            minus = self.values[np.argmin(self.directions[:, 0])]
            return np.where(y[0] >= 0, plus * y[0], -minus * y[0])
        r = np.hypot(y[0], y[1])
        return r * self.value_at(np.arctan2(y[1], y[0]))

    def evenness_defect(self) -> float:
        return float(np.max(np.abs(self(self.directions.T) - self(-self.directions.T))))

    def convexity_defect(self, samples: int = 500, seed: int = 0) -> float:
        """Largest ``mbar(a+b) - mbar(a) - mbar(b)`` over random pairs of vectors."""
        rng = stream(seed, "convexity")
        a = rng.normal(size=(self.dimension, samples))
        b = rng.normal(size=(self.dimension, samples))
        return float(np.max(self(a + b) - self(a) - self(b)))

    def cauchy_steps(self) -> np.ndarray:
        """``max_e |v(R_{i+1}) - v(R_i)|`` along the ladder."""
        return np.max(np.abs(np.diff(self.ladder, axis=0)), axis=1)

    def richardson(self) -> np.ndarray:
        """Two-point extrapolation assuming an error proportional to 1/R."""
        if len(self.radii_used) < 2:
            return self.values.copy()
        r1, r2 = self.radii_used[-2:]
        return (r2 * self.ladder[-1] - r1 * self.ladder[-2]) / (r2 - r1)

    def header(self) -> dict:
        return {
            "params": {"mu": self.params.mu, "sigma": self.params.sigma},
            "radii": list(self.radii_used),
            "seeds": list(self.seeds),
            "status": self.status.value,
        }

    def export(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        names = ["e1", "e2"][: self.dimension] + ["value", "stderr"]
        csv_path = io.write_csv(
            io.sibling(stem, ".csv"), names, [*self.directions.T, self.values, self.stderr]
        )
        return csv_path, io.write_json(io.sibling(stem, ".json"), self.header())


def neg_infinity_shape(params: ParamPair, directions, radii) -> ShapeFunction:
    n = len(directions)
    return ShapeFunction(
        params,
        np.asarray(directions, dtype=float),
        np.full(n, -np.inf),
        np.zeros(n),
        tuple(radii),
        np.full((len(radii), n), -np.inf),
        status=MetricStatus.NEG_INFINITY,
    )


class ShapeSampler:
    """Fixed realizations of an ensemble, reused for every parameter pair.

    Reusing the same realizations makes shapes for different ``(mu, sigma)``
    directly comparable (common random numbers). Monotonicity in the
    parameters then holds sample by sample.
    """

    def __init__(
        self,
        spec: EnsembleSpec,
        *,
        directions=None,
        radii=None,
        realizations: int | None = None,
        seeds=None,
        spacing: float | None = None,
        margin: float = DEFAULT_MARGIN,
        vbar: float | None = None,
    ):
        self.spec = spec
        self.dimension = spec.dimension
        self.directions = (
            default_directions(spec.dimension) if directions is None else np.asarray(directions, float)
        )
        if self.directions.ndim != 2 or self.directions.shape[1] != spec.dimension:
            raise ValueError("directions must be an array of shape (n, d)")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ValueError("directions must be unit vectors")
        ell = spec.correlation_length
        self.radii = tuple(sorted(float(r) for r in (radii or [f * ell for f in DEFAULT_RADII_FACTORS])))
        if seeds is None:
            if realizations is None:
                self_avg = isinstance(spec.kind, (Constant, ShiftedPeriodic))
                realizations = 1 if self_avg else DEFAULT_REALIZATIONS
            seeds = realization_seeds(spec.seed, realizations)
        self.seeds = tuple(int(s) for s in seeds)
        if not self.seeds:
            raise ValueError("at least one realization is required")
        h = spacing or default_spacing(spec)
        half = math.ceil(margin * self.radii[-1] / h) * h
        self.grid = Grid(spec.dimension, h, half)
        self.margin = margin
        self.fields = [normalize(sample_potential(spec.with_seed(s), self.grid)) for s in self.seeds]
        self.vbar = max(f.vbar for f in self.fields) if vbar is None else float(vbar)
        self._probe = np.stack([r * self.directions.T for r in self.radii])  # (n_radii, d, n_dir)

    def shape(self, params: ParamPair, *, extrapolate: bool = False) -> ShapeFunction:
        if not params.admissible(self.vbar):
            return neg_infinity_shape(params, self.directions, self.radii)
        origin = np.zeros(self.dimension)
        samples = np.empty((len(self.fields), len(self.radii), len(self.directions)))
        for i, f in enumerate(self.fields):
            m = solve_metric(f, params, origin, vbar=self.vbar, margin=self.margin)
            for r, R in enumerate(self.radii):
                samples[i, r] = m.at(self._probe[r]) / R
        ladder = samples.mean(axis=0)
        n = len(self.fields)
        stderr = samples[:, -1].std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(self.directions))
        shape = ShapeFunction(
            params, self.directions, ladder[-1].copy(), stderr, self.radii, ladder, self.seeds, samples=samples
        )
        if extrapolate:
            shape = ShapeFunction(
                params, self.directions, shape.richardson(), stderr, self.radii, ladder, self.seeds, samples=samples
            )
        return shape


def estimate_shape(
    spec: EnsembleSpec,
    params: ParamPair,
    directions=None,
    radii=None,
    realizations: int | None = None,
    **kwargs,
) -> ShapeFunction:
    """Estimate ``mbar_{mu,sigma}``; inadmissible pairs give the -inf sentinel."""
    extrapolate = kwargs.pop("extrapolate", False)
    sampler = ShapeSampler(spec, directions=directions, radii=radii, realizations=realizations, **kwargs)
    return sampler.shape(params, extrapolate=extrapolate)


def batch_agreement(a: ShapeFunction, b: ShapeFunction) -> np.ndarray:
    """Per-direction ``|a - b|`` in units of the pooled standard error."""
    pooled = np.sqrt(a.stderr**2 + b.stderr**2)
    diff = np.abs(a.values - b.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pooled > 0, diff / pooled, np.where(diff > 0, np.inf, 0.0))


@dataclass
class MonotonicityReport:
    violations: list = field(default_factory=list)  # (params_a, params_b, max(a - b))
    strict_gaps: list = field(default_factory=list)  # (params_a, params_b, min(b - a))
    fd_ratios: list = field(default_factory=list)  # (params_a, params_b, step, max|b - a|/step)

    @property
    def max_violation(self) -> float:
        return max((v for *_, v in self.violations), default=-np.inf)

    def ordered(self, slack: float = 0.0) -> bool:
        return all(v <= slack for *_, v in self.violations)


def _ordered_pair(a: ParamPair, b: ParamPair) -> bool:
    """True when the parameters guarantee mbar_a <= mbar_b."""
    if a.mu == b.mu and a.sigma <= b.sigma:
        return True
    return a.sigma == b.sigma and a.sigma * a.mu <= b.sigma * b.mu


def check_shape_monotonicity(shapes, *, fd_step_max: float = 0.05) -> MonotonicityReport:
    """Direction-wise ordering, strict gaps and finite-difference continuity.

    Every pair of finite shapes is inspected. Ordered pairs (same ``mu`` and
    ``sigma`` increasing, or same ``sigma`` and ``sigma*mu`` increasing) must
    be ordered in every direction. Among those, pairs whose ``sigma*mu``
    differs report the smallest directional gap. Pairs at parameter distance
    at most ``fd_step_max`` report a difference quotient.
    """
    shapes = [s for s in shapes if s.finite]
    if not shapes:
        return MonotonicityReport()
    dirs = shapes[0].directions
    for s in shapes[1:]:
        if s.directions.shape != dirs.shape or not np.allclose(s.directions, dirs):
            raise ValueError("shapes must share the same direction set")
    report = MonotonicityReport()
    for a, b in combinations(shapes, 2):
        for lo, hi in ((a, b), (b, a)):
            p, q = lo.params, hi.params
            if p == q or not _ordered_pair(p, q):
                continue
            report.violations.append((p, q, float(np.max(lo.values - hi.values))))
            if p.sigma * p.mu < q.sigma * q.mu:
                report.strict_gaps.append((p, q, float(np.min(hi.values - lo.values))))
            break
        step = math.hypot(a.params.mu - b.params.mu, a.params.sigma - b.params.sigma)
        if 0 < step <= fd_step_max:
            ratio = float(np.max(np.abs(a.values - b.values))) / step
            report.fd_ratios.append((a.params, b.params, step, ratio))
    return report


def periodic_cell_average(spec: EnsembleSpec, params: ParamPair, vbar: float | None = None) -> ShapeFunction:
    """Exact 1D shape of a periodic ensemble by adaptive quadrature.

    In 1D the metric is the integral of the local cost, so over whole
    periods ``m(R)/R`` equals the cell average of ``(1 + sigma sqrt(mu + V))^{1/2}``
    in both directions.
    """
    from scipy.integrate import quad

    if spec.dimension != 1 or not isinstance(spec.kind, ShiftedPeriodic):
        raise ValueError("the cell average is exact only for 1D periodic ensembles")
    k = spec.kind
    vbar = 2 * k.amplitude if vbar is None else vbar
    dirs = default_directions(1)
    if not params.admissible(vbar):
        return neg_infinity_shape(params, dirs, (k.period,))
    v = spec.realization().normalized()

    def cost(x):
        inner = 1.0 + params.sigma * math.sqrt(max(params.mu + float(v(np.array([[x]]))[0]), 0.0))
        return math.sqrt(max(inner, 0.0))

    # The profile is smooth, so splitting at the quarter periods is enough for quad.
    cuts = np.linspace(0.0, k.period, 5)
    total = sum(quad(cost, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0] for a, b in zip(cuts[:-1], cuts[1:]))
    value = total / k.period
    vals = np.array([value, value])
    return ShapeFunction(params, dirs, vals, np.zeros(2), (k.period,), vals[None, :].copy())
