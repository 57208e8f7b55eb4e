"""Maximal subsolutions of ``|Du|^2 = 1 + sigma*sqrt(mu + V)``.

For admissible parameters the maximal subsolution vanishing at ``z`` is the
geodesic distance from ``z`` for the local cost ``sqrt(1 + sigma*sqrt(mu+V))``.
In one dimension it is computed exactly by cumulative Simpson quadrature of
that cost. In two dimensions it comes from fast marching followed by a
grid-bias correction (see :func:`solve_metric`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import io
from ._fmm import fast_march
from .field import PotentialField
from .grid import Grid
from .rng import stream

ADMISSIBILITY_TOL = 1e-10
DEGENERATE_FLOOR = 1e-10
SIMPSON_SUBDIVISION = 8
DEFAULT_MARGIN = 1.5


@dataclass(frozen=True)
class ParamPair:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not -1.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [-1, 1], got {self.sigma}")

    def admissible(self, vbar: float) -> bool:
        return self.sigma * math.sqrt(self.mu + vbar) >= -1.0 - ADMISSIBILITY_TOL

    def cone_constants(self, vbar: float) -> tuple[float, float]:
        """Slopes ``(a, b)`` with ``a|y-z| <= m(y, z) <= b|y-z|``."""
        at_inf = max(0.0, 1.0 + self.sigma * math.sqrt(self.mu)) ** 0.5
        at_sup = max(0.0, 1.0 + self.sigma * math.sqrt(self.mu + vbar)) ** 0.5
        return (at_sup, at_inf) if self.sigma <= 0 else (at_inf, at_sup)

    def lipschitz_constant(self, vbar: float) -> float:
        return math.sqrt(1.0 + max(self.sigma, 0.0) * math.sqrt(self.mu + vbar))


def _rhs(v, params: ParamPair):
    return 1.0 + params.sigma * np.sqrt(np.maximum(params.mu + v, 0.0))


def speed_squared(field: PotentialField, params: ParamPair, node) -> float:
    """Right-hand side ``1 + sigma*sqrt(mu + V(node))`` at a grid node.

    Negative only when the pair is inadmissible for this field.
    """
    return float(_rhs(field.values[tuple(np.atleast_1d(node))], params))


def local_cost(v, params: ParamPair) -> tuple[np.ndarray, np.ndarray]:
    """Cost ``sqrt(max(rhs, 0))`` and the mask of degenerate nodes."""
    rhs = _rhs(np.asarray(v, dtype=float), params)
    degenerate = rhs < DEGENERATE_FLOOR
    return np.sqrt(np.maximum(rhs, 0.0)), degenerate


class MetricStatus(str, enum.Enum):
    FINITE = "Finite"
    NEG_INFINITY = "NegInfinity"


@dataclass(frozen=True, eq=False)
class MetricField:
    params: ParamPair
    grid: Grid
    source: tuple[int, ...]
    values: np.ndarray
    trust_radius: float
    status: MetricStatus
    vbar: float
    degenerate: int = 0

    @property
    def finite(self) -> bool:
        return self.status is MetricStatus.FINITE

    @property
    def source_point(self) -> np.ndarray:
        return self.grid.node(self.source)

    def distance_from_source(self) -> np.ndarray:
        return _euclid(self.grid, self.source)

    def at(self, points) -> np.ndarray:
        """Multilinear interpolation of the metric at ``points`` of shape ``(d, ...)``."""
        if not self.finite:
            return np.full(np.shape(points)[1:], -np.inf)
        return PotentialField(self.grid, self.values, 0.0, 0.0).interpolate(points)

    def header(self) -> dict:
        return {
            "params": {"mu": self.params.mu, "sigma": self.params.sigma},
            "source": self.source_point.tolist(),
            "trust_radius": self.trust_radius,
            "status": self.status.value,
            "degenerate_nodes": self.degenerate,
            "grid": self.grid.to_dict(),
        }

    def export(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        pts = self.grid.points().reshape(self.grid.dimension, -1)
        names = ["x", "y"][: self.grid.dimension] + ["value"]
        csv_path = io.write_csv(io.sibling(stem, ".csv"), names, [*pts, self.values.ravel()])
        return csv_path, io.write_json(io.sibling(stem, ".json"), self.header())


def _euclid(grid: Grid, source) -> np.ndarray:
    """Distance to the source node (minimum image on periodic grids)."""
    diffs = []
    for axis, x in enumerate(grid.mesh()):
        d = np.abs(x - grid.axis[source[axis]])
        if grid.periodic:
            d = np.minimum(d, grid.period - d)
        diffs.append(d)
    return np.sqrt(sum(d * d for d in diffs))


@lru_cache(maxsize=64)
def _unit_march(grid: Grid, source: tuple[int, ...]) -> np.ndarray:
    ref = fast_march(np.ones(grid.shape), grid.spacing, source[0], source[1], grid.periodic)
    ref.setflags(write=False)
    return ref


@lru_cache(maxsize=64)
def _bias_factor(grid: Grid, source: tuple[int, ...]) -> np.ndarray:
    ref = _unit_march(grid, source)
    eucl = _euclid(grid, source)
    factor = np.ones(grid.shape)
    np.divide(eucl, ref, out=factor, where=ref > 0)
    factor.setflags(write=False)
    return factor


def _trust_radius(grid: Grid, source, margin: float) -> float:
    if grid.periodic:
        return grid.half_extent / margin
    x = grid.node(source)
    return float(np.min(grid.half_extent - np.abs(x))) / margin


def _simpson_intervals(field: PotentialField, params: ParamPair, start: int, stop: int) -> np.ndarray:
    """Integral of the cost over each grid interval ``[x_k, x_{k+1}]``, k in [start, stop)."""
    g = field.grid
    k = np.arange(start, stop)
    n = SIMPSON_SUBDIVISION
    t = np.linspace(0.0, 1.0, n + 1)
    xs = g.axis[0] + g.spacing * (k[:, None] + t[None, :])
    cost, _ = local_cost(field.interpolate(xs[None]), params)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return cost @ w * (g.spacing / (3.0 * n))


def solve_metric(
    field: PotentialField,
    params: ParamPair,
    source=0.0,
    *,
    vbar: float | None = None,
    margin: float = DEFAULT_MARGIN,
    bias_correction: bool = True,
) -> MetricField:
    """Maximal subsolution ``m(., z)`` on the field's grid.

    ``source`` is the coordinate of ``z`` and must be a grid node.
    Admissibility is judged against ``vbar``. That defaults to the field's
    own oscillation, but callers estimating an ensemble pass the ensemble
    value.

    In 2D the raw fast-marching distance ``T`` is multiplied node-wise by
    ``|y - z| / T_1(y)``, where ``T_1`` is the same scheme run with unit cost.
    The factor depends only on the grid and the source. So the correction
    keeps the scheme's monotonicity in the cost, and it makes constant costs
    exact. Pass ``bias_correction=False`` for the raw scheme.
    """
    if not field.normalized:
        raise ValueError("solve_metric needs a normalized field (min V = 0)")
    g = field.grid
    src = g.index_of(source)
    vbar = field.vbar if vbar is None else vbar
    trust = _trust_radius(g, src, margin)
    if not params.admissible(vbar):
        values = np.full(g.shape, -np.inf)
        values.setflags(write=False)
        return MetricField(params, g, src, values, trust, MetricStatus.NEG_INFINITY, vbar)

    cost, degenerate = local_cost(field.values, params)
    if g.dimension == 1:
        s = src[0]
        n = g.nodes_per_axis
        values = np.zeros(n)
        if s + 1 < n:
            values[s + 1 :] = np.cumsum(_simpson_intervals(field, params, s, n - 1))
        if s > 0:
            values[:s] = np.cumsum(_simpson_intervals(field, params, 0, s)[::-1])[::-1]
    elif bias_correction and cost.min() == cost.max():
        # The corrected scheme returns cost * |y - z| for a constant cost; skip the march.
        values = cost.flat[0] * _euclid(g, src)
    else:
        values = fast_march(np.ascontiguousarray(cost), g.spacing, src[0], src[1], g.periodic)
        if bias_correction:
            values = values * _bias_factor(g, src)
    values.setflags(write=False)
    return MetricField(params, g, src, values, trust, MetricStatus.FINITE, vbar, int(degenerate.sum()))


def pairwise_metric(field: PotentialField, params: ParamPair, indices, **kwargs) -> np.ndarray:
    """Matrix ``M[a, b] = m(node_a; source node_b)`` over the given node indices."""
    g = field.grid
    out = np.empty((len(indices), len(indices)))
    for b, src in enumerate(indices):
        m = solve_metric(field, params, g.node(src), **kwargs)
        for a, idx in enumerate(indices):
            out[a, b] = m.values[tuple(idx)]
    return out


@dataclass(frozen=True)
class SubsolutionReport:
    symmetry_defect: float
    subadditivity_defect: float
    cone_violation: float
    lipschitz_excess: float
    n_pairs: int
    n_triples: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.symmetry_defect, self.subadditivity_defect, self.cone_violation, self.lipschitz_excess) <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "symmetry_defect": self.symmetry_defect,
            "subadditivity_defect": self.subadditivity_defect,
            "cone_violation": self.cone_violation,
            "lipschitz_excess": self.lipschitz_excess,
            "n_pairs": self.n_pairs,
            "n_triples": self.n_triples,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def sample_nodes(m: MetricField, count: int, seed: int = 0) -> list[tuple[int, ...]]:
    """Distinct nodes within a third of the trust radius around the source.

    Every pair of such nodes then lies inside the trust regions of both
    endpoints.
    """
    g = m.grid
    dist = m.distance_from_source()
    candidates = np.argwhere(dist <= m.trust_radius / 3.0)
    candidates = [tuple(int(v) for v in c) for c in candidates if tuple(c) != m.source]
    rng = stream(seed, "metric-sample-nodes")
    pick = rng.choice(len(candidates), size=min(count, len(candidates)), replace=False)
    return [candidates[i] for i in sorted(pick)]


def check_subsolution_properties(
    m: MetricField,
    field: PotentialField,
    params: ParamPair,
    tolerance: float,
    *,
    n_points: int = 20,
    n_triples: int = 200,
    seed: int = 0,
    nodes=None,
) -> SubsolutionReport:
    """Measure the symmetry, subadditivity, cone and Lipschitz defects of ``m``.

    Symmetry and subadditivity use extra solves from ``n_points`` sampled
    nodes plus the source. The pairwise table therefore covers
    ``C(n_points + 1, 2)`` pairs, and ``n_triples`` triples are drawn from it.
    """
    if not m.finite:
        raise ValueError("subsolution checks need a finite metric")
    g = m.grid
    dist = m.distance_from_source()
    inside = dist <= m.trust_radius
    lo, hi = params.cone_constants(m.vbar)
    vals = m.values
    cone = max(
        float(np.max(lo * dist[inside] - vals[inside])),
        float(np.max(vals[inside] - hi * dist[inside])),
        0.0,
    )

    lip = params.lipschitz_constant(m.vbar)
    excess = 0.0
    for axis in range(g.dimension):
        diff = np.abs(np.diff(vals, axis=axis))
        both = inside.take(range(g.nodes_per_axis - 1), axis=axis) & inside.take(
            range(1, g.nodes_per_axis), axis=axis
        )
        if np.any(both):
            excess = max(excess, float(np.max(diff[both] - lip * g.spacing)))

    if nodes is None:
        nodes = sample_nodes(m, n_points, seed)
    nodes = [m.source] + [tuple(n) for n in nodes]
    table = pairwise_metric(field, params, nodes, vbar=m.vbar)
    k = len(nodes)
    sym = float(np.max(np.abs(table - table.T))) if k > 1 else 0.0
    rng = stream(seed, "metric-triples")
    triples = rng.integers(0, k, size=(n_triples, 3)) if k > 2 else np.zeros((0, 3), int)
    sub = 0.0
    for y, x, z in triples:
        sub = max(sub, float(table[y, z] - table[y, x] - table[x, z]))
    return SubsolutionReport(
        symmetry_defect=sym,
        subadditivity_defect=max(sub, 0.0),
        cone_violation=cone,
        lipschitz_excess=max(excess, 0.0),
        n_pairs=k * (k - 1) // 2,
        n_triples=len(triples),
        tolerance=tolerance,
    )
