"""The verification battery: stages run in dependency order, checks are recorded.

Stages are ``potential -> metric -> shape -> effham -> cell -> evolve``. Each
writes its artifacts under ``<out>/<stage>/`` and appends :class:`Check`
rows to the :class:`RunRecord`. A stage that raises is recorded as a
numerical failure; later stages that need its products are skipped.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import io
from ..cell import CellSolverError, cell_domain, check_p_continuity, solve_cell, write_ladder
from ..effham import BracketError, CachedShapeProvider, EffConstants, evaluate, hbar_minus, hbar_plus, tabulate
from ..evolve import data_dissipation, evolution_grid, plane_dissipation, solve_homogenized, solve_oscillatory
from ..field import Constant, ShiftedPeriodic, estimate_bounds, normalize, sample_potential
from ..grid import Grid
from ..metric import MetricStatus, ParamPair, check_subsolution_properties, sample_nodes, solve_metric
from ..rng import realization_seeds
from ..shape import (
    ShapeSampler,
    batch_agreement,
    check_shape_monotonicity,
    default_directions,
    periodic_cell_average,
)
from .config import ExperimentConfig

log = logging.getLogger("hjhomog")

STAGES = ("potential", "metric", "shape", "effham", "cell", "evolve")

# Every invariant the suite asserts, keyed by a descriptive anchor.
ANCHORS = {
    "field.bound": "realizations satisfy sup|V| <= K0",
    "field.normalization": "normalized field has min 0 and vbar <= 2 K0",
    "field.determinism": "identical spec and grid give identical values",
    "field.widening": "box extrema widen monotonically with the radius",
    "metric.cone": "growth bounds of the maximal subsolution, slack 10h",
    "metric.symmetry": "symmetry defect constant stable under h -> h/2",
    "metric.subadditivity": "subadditivity defect constant stable under h -> h/2",
    "metric.lipschitz": "neighbour differences within the cone Lipschitz constant",
    "metric.neg_infinity": "inadmissible pairs return the -inf sentinel",
    "shape.cone": "limit shape within the cone constants",
    "shape.monotonicity": "direction-wise ordering in sigma and in sigma*mu",
    "shape.strict_gap": "strict gap between mu-separated sigma=-1 shapes",
    "shape.evenness": "mbar(e) = mbar(-e)",
    "shape.convexity": "mbar(a+b) <= mbar(a) + mbar(b)",
    "shape.convergence": "last Cauchy step of the radius ladder",
    "shape.oracle": "1D periodic shapes against the quadrature cell average",
    "shape.ergodicity": "disjoint seed batches agree within 3 pooled standard errors",
    "effham.constants": "sigma*(mu*+vbar)^(1/2) = -1",
    "effham.sandwich": "(|p|^2-1)^2 - vbar <= Hbar <= (|p|^2-1)^2",
    "effham.hilltop": "Hbar constant and equal to mu* on K1",
    "effham.valley": "Hbar = 0 on K3",
    "effham.partition": "one label per node; K4 lies beyond K3 along each ray",
    "effham.coercivity": "Hbar(2e) > Hbar(1.2e)",
    "effham.evenness": "Hbar(p) = Hbar(-p)",
    "effham.consistency": "path walk agrees with the bisections",
    "effham.oracle": "Hbar against an independent reference",
    "cell.bounds": "comparison bounds of the discounted solution",
    "cell.lipschitz": "discrete gradient bounded uniformly in delta",
    "cell.proxy_decay": "|-delta v(0) - Hbar| nonincreasing along the delta ladder",
    "cell.proxy_final": "|-delta v(0) - Hbar| small at the smallest delta",
    "cell.continuity": "p-Lipschitz constant of delta v grows by at most a factor 2 under refinement",
    "cell.lower_bound": "liminf -delta v(0) >= 0 and >= Hbar on K4",
    "cell.upper_bound": "limsup -delta v(0) <= mu* inside the unit ball",
    "evolve.proxy_decay": "sup error to p.x - t Hbar(p) nonincreasing in epsilon",
    "evolve.homogenized_linear": "homogenized scheme propagates planes exactly",
    "evolve.constants_commute": "adding a constant to g shifts u by that constant",
    "evolve.monotone": "ordered initial data stay ordered",
}


@dataclass
class Check:
    anchor: str
    stage: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class RunRecord:
    config_hash: str
    config: dict
    checks: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def add(self, anchor, stage, measured, tolerance, passed, detail="") -> Check:
        if anchor not in ANCHORS:
            raise KeyError(f"unregistered anchor {anchor!r}")
        c = Check(anchor, stage, float(measured), float(tolerance), bool(passed), detail)
        self.checks.append(c)
        log.info("%-26s %s  measured=%.3e tol=%.3e %s", anchor, "PASS" if passed else "FAIL", c.measured, c.tolerance, detail)
        return c

    def skip(self, anchor, reason):
        self.skipped[anchor] = reason

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failed and not self.errors

    def covered(self) -> set:
        return {c.anchor for c in self.checks} | set(self.skipped)

    def missing_anchors(self, stages=STAGES) -> list:
        stage_of = {"potential": "field."}
        prefixes = tuple(stage_of.get(s, s + ".") for s in stages)
        return sorted(a for a in ANCHORS if a.startswith(prefixes) and a not in self.covered())

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 3
        return 0 if not self.failed else 1

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "config": self.config,
            "checks": [asdict(c) for c in self.checks],
            "outputs": self.outputs,
            "timings": self.timings,
            "errors": self.errors,
            "skipped": self.skipped,
            "passed": self.passed,
        }

    def write(self, path) -> Path:
        return io.write_json(path, self.to_dict())


def _nonincreasing(seq, slack) -> tuple[float, bool]:
    rises = [b - a for a, b in zip(seq[:-1], seq[1:])]
    worst = max(rises, default=-np.inf)
    return worst, worst <= slack


def _tag(params: ParamPair) -> str:
    # no dots: Path.with_suffix would cut the name at the decimal point
    return f"mu{params.mu:g}_sigma{params.sigma:g}".replace("-", "m").replace(".", "p")


class _Run:
    """Shared state of one suite invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path | None, record: RunRecord, export: bool):
        self.cfg = cfg
        self.out = out
        self.record = record
        self.export = export
        self.spec = cfg.spec
        self.products = {}

    def path(self, stage, name) -> Path | None:
        if self.out is None:
            return None
        return self.out / stage / name

    def emitted(self, stage, *paths):
        if paths and paths[0] is not None:
            self.record.outputs.setdefault(stage, []).extend(str(p) for p in paths)

    # -- potential -----------------------------------------------------------
    def stage_potential(self):
        cfg, spec = self.cfg, self.spec
        grid = Grid(spec.dimension, cfg.grids.metric_spacing, cfg.grids.metric_extent)
        raw = sample_potential(spec, grid)
        field_ = normalize(raw)
        self.products["field"] = field_
        rec = self.record
        k0 = spec.bound
        excess = float(np.max(np.abs(raw.values))) - k0
        rec.add("field.bound", "potential", excess, 1e-12, excess <= 1e-12, "max|V| - K0")
        norm_err = abs(float(field_.values.min()))
        rec.add(
            "field.normalization",
            "potential",
            max(norm_err, field_.vbar - 2 * k0),
            1e-12,
            norm_err == 0.0 and field_.vbar <= 2 * k0 + 1e-12,
            f"vbar={field_.vbar:.6g}",
        )
        again = sample_potential(spec, grid)
        same = bool(np.array_equal(again.values, raw.values))
        rec.add("field.determinism", "potential", 0.0 if same else 1.0, 0.0, same)
        radii = [r for r in (0.5, 1.0, 2.0, 4.0) if r <= cfg.grids.metric_extent] or [cfg.grids.metric_extent]
        est = estimate_bounds(spec, radii, samples=2)
        worst = max(
            float(np.max(np.diff(est.vlow, axis=1), initial=-np.inf)),
            float(np.max(-np.diff(est.vbar, axis=1), initial=-np.inf)),
        )
        rec.add("field.widening", "potential", worst, 0.0, worst <= 0.0, "largest shrink of a box extremum")
        if self.export:
            self.emitted("potential", *field_.export(self.path("potential", "field")))
            low, up = zip(*est.per_radius())
            self.emitted(
                "potential",
                io.write_csv(
                    self.path("potential", "bounds.csv"),
                    ["radius", "vlow_min", "vbar_max"],
                    [np.asarray(est.radii), low, up],
                ),
            )

    # -- metric --------------------------------------------------------------
    def _defect_constants(self, field_, params, nodes_xy):
        h = field_.grid.spacing
        fine_grid = field_.grid.refined(2)
        fine = normalize(sample_potential(self.spec, fine_grid))
        out = []
        for f in (field_, fine):
            g = f.grid
            nodes = [g.index_of(x) for x in nodes_xy]
            m = solve_metric(f, params, np.zeros(g.dimension), vbar=field_.vbar)
            rep = check_subsolution_properties(m, f, params, 10 * g.spacing, nodes=nodes[1:])
            out.append(rep)
        return out, h

    def stage_metric(self):
        field_ = self.products["field"]
        cfg = self.cfg
        g = field_.grid
        h = g.spacing
        rec = self.record
        pairs = [ParamPair(mu, s) for mu, s in cfg.ladders.pairs]
        n_nodes = max(3, int(math.ceil((1 + math.sqrt(1 + 8 * cfg.ladders.metric_pairs)) / 2)))
        cone, lip = [], []
        sym_ratio, sub_ratio = [], []
        for params in pairs:
            if not params.admissible(field_.vbar):
                continue
            m = solve_metric(field_, params, np.zeros(g.dimension))
            nodes_idx = sample_nodes(m, n_nodes - 1, seed=cfg.ensemble.seed)
            rep = check_subsolution_properties(m, field_, params, 10 * h, nodes=nodes_idx)
            cone.append(rep.cone_violation)
            lip.append(rep.lipschitz_excess)
            if self.export:
                self.emitted("metric", *m.export(self.path("metric", "m_" + _tag(params))))
            if params.sigma in (-1.0, 1.0) and params.mu == 0.0:
                xy = [g.node(i) for i in [m.source] + list(nodes_idx)]
                (coarse, fine), _ = self._defect_constants(field_, params, xy)
                for coarse_d, fine_d, bucket in (
                    (coarse.symmetry_defect, fine.symmetry_defect, sym_ratio),
                    (coarse.subadditivity_defect, fine.subadditivity_defect, sub_ratio),
                ):
                    c_coarse, c_fine = coarse_d / h, fine_d / (h / 2)
                    bucket.append((c_coarse, c_fine))
        worst_cone = max(cone, default=0.0)
        rec.add("metric.cone", "metric", worst_cone, 10 * h, worst_cone <= 10 * h)
        worst_lip = max(lip, default=0.0)
        # 1D quadrature is exact up to rounding; fast marching gets the cone slack 10h on each slope.
        tol_lip = 1e-9 if g.dimension == 1 else 10 * h * h
        rec.add("metric.lipschitz", "metric", worst_lip, tol_lip, worst_lip <= tol_lip)
        for anchor, bucket in (("metric.symmetry", sym_ratio), ("metric.subadditivity", sub_ratio)):
            if not bucket:
                rec.skip(anchor, "no (0, +-1) pair in the ladder")
                continue
            # C(h/2) <= 2 C(h); a vanishing defect at both resolutions is stable too.
            worst = max(cf - 2 * cc for cc, cf in bucket)
            detail = "; ".join(f"C(h)={cc:.3g} C(h/2)={cf:.3g}" for cc, cf in bucket)
            rec.add(anchor, "metric", worst, 1e-12, worst <= 1e-12, detail)
        bad = ParamPair(max(0.0, 1.21 - field_.vbar), -1.0)
        m = solve_metric(field_, bad, np.zeros(g.dimension))
        ok = m.status is MetricStatus.NEG_INFINITY and bool(np.all(np.isneginf(m.values)))
        rec.add("metric.neg_infinity", "metric", 0.0 if ok else 1.0, 0.0, ok, f"pair {bad}")

    # -- shape ---------------------------------------------------------------
    def sampler(self, seeds=None) -> ShapeSampler:
        cfg = self.cfg
        lad = cfg.ladders
        return ShapeSampler(
            self.spec,
            directions=default_directions(self.spec.dimension, lad.directions),
            radii=lad.radii,
            realizations=lad.realizations,
            seeds=seeds,
            spacing=cfg.grids.shape_spacing,
        )

    def stage_shape(self):
        cfg, rec = self.cfg, self.record
        sampler = self.sampler()
        self.products["sampler"] = sampler
        pairs = [ParamPair(mu, s) for mu, s in cfg.ladders.pairs]
        shapes = [sampler.shape(p) for p in pairs]
        self.products["shapes"] = shapes
        finite = [s for s in shapes if s.finite]
        h = sampler.grid.spacing
        slack = 10 * h / sampler.radii[-1]
        cone = 0.0
        for s in finite:
            lo, hi = s.params.cone_constants(sampler.vbar)
            cone = max(cone, float(np.max(lo - s.values)), float(np.max(s.values - hi)))
        rec.add("shape.cone", "shape", cone, slack, cone <= slack)
        mono = check_shape_monotonicity(finite)
        tol = cfg.tolerances.tol_order
        rec.add("shape.monotonicity", "shape", mono.max_violation, tol, mono.ordered(tol))
        strict = [g for a, b, g in mono.strict_gaps if a.sigma == -1.0 and b.sigma == -1.0]
        if strict:
            gap = min(strict)
            rec.add("shape.strict_gap", "shape", gap, 0.0, gap > 0.0, "smallest sigma=-1 gap")
        else:
            rec.skip("shape.strict_gap", "no mu-separated sigma=-1 pairs")
        tol_h = cfg.tolerances.tol_H
        # Estimates at e and -e are identically distributed; allow three pooled standard errors.
        even = max((_evenness_excess(s) for s in finite), default=0.0)
        rec.add("shape.evenness", "shape", even, tol_h, even <= tol_h, "max |mbar(e) - mbar(-e)| - 3 se")
        conv = max((s.convexity_defect() for s in finite), default=0.0)
        rec.add("shape.convexity", "shape", conv, tol_h, conv <= tol_h)
        steps = [float(s.cauchy_steps()[-1]) for s in finite if len(s.radii_used) > 1]
        if steps:
            rec.add("shape.convergence", "shape", max(steps), tol_h, max(steps) <= tol_h)
        else:
            rec.skip("shape.convergence", "single radius")
        if self.spec.dimension == 1 and isinstance(self.spec.kind, ShiftedPeriodic):
            diffs = [abs(float(s.values[0]) - float(periodic_cell_average(self.spec, s.params).values[0])) for s in finite]
            rec.add("shape.oracle", "shape", max(diffs), 1e-3, max(diffs) <= 1e-3, "quadrature cell average")
        elif isinstance(self.spec.kind, Constant):
            diffs = [float(np.max(np.abs(s.values - s.params.cone_constants(0.0)[0]))) for s in finite]
            # Multilinear interpolation of the exact cone at off-grid probes.
            tol_c = 1e-9 if self.spec.dimension == 1 else 1e-9 + (h / sampler.radii[-1]) ** 2
            rec.add("shape.oracle", "shape", max(diffs), tol_c, max(diffs) <= tol_c, "constant cost")
        else:
            rec.skip("shape.oracle", "no closed form for this ensemble")
        if len(sampler.seeds) > 1:
            n = cfg.ladders.batch_realizations or len(sampler.seeds)
            seeds = realization_seeds(self.spec.seed, 2 * n, offset=len(sampler.seeds))
            a = self.sampler(seeds[:n]).shape(ParamPair(0.0, 1.0))
            b = self.sampler(seeds[n:]).shape(ParamPair(0.0, 1.0))
            z = float(np.max(batch_agreement(a, b)))
            rec.add("shape.ergodicity", "shape", z, 3.0, z <= 3.0, "max z-score of mbar_{0,1}")
        else:
            rec.skip("shape.ergodicity", "single realization (self-averaging ensemble)")
        if self.export:
            for s in shapes:
                self.emitted("shape", *s.export(self.path("shape", "mbar_" + _tag(s.params))))

    # -- effham --------------------------------------------------------------
    def stage_effham(self):
        cfg, rec = self.cfg, self.record
        tol = cfg.tolerances
        sampler = self.products["sampler"]
        provider = CachedShapeProvider.from_sampler(sampler, mu_step=tol.tol_mu)
        self.products["provider"] = provider
        table = tabulate(cfg.p_nodes(), provider, tol.tol_mu, tol.tol_gap)
        self.products["table"] = table
        c = table.constants
        defect = abs(c.sigma_star * math.sqrt(c.mu_star + c.vbar) + 1.0)
        rec.add("effham.constants", "effham", defect, 1e-10, defect <= 1e-10)
        sw = table.sandwich_violation()
        rec.add("effham.sandwich", "effham", sw, tol.tol_H, sw <= tol.tol_H)
        k1 = table.values[table.region == "K1"]
        if k1.size:
            spread = float(k1.max() - k1.min())
            off = float(np.max(np.abs(k1 - c.mu_star)))
            rec.add(
                "effham.hilltop", "effham", max(spread, off), tol.tol_flat, max(spread, off) <= tol.tol_flat,
                f"{k1.size} K1 nodes, spread {spread:.3g}",
            )
        else:
            rec.skip("effham.hilltop", "no K1 nodes on the p-grid")
        k3 = table.values[table.region == "K3"]
        if k3.size:
            worst = float(np.max(np.abs(k3)))
            rec.add("effham.valley", "effham", worst, tol.tol_flat, worst <= tol.tol_flat, f"{k3.size} K3 nodes")
        else:
            rec.skip("effham.valley", "no K3 nodes on the p-grid")
        rec.add(*self._partition(table), detail="K4 nodes beyond the outermost K3 node on each ray")
        dirs = default_directions(self.spec.dimension, 8)
        rises = [evaluate(2 * e, provider, tol.tol_mu).value - evaluate(1.2 * e, provider, tol.tol_mu).value for e in dirs]
        rec.add("effham.coercivity", "effham", min(rises), 0.0, min(rises) > 0.0, "min Hbar(2e) - Hbar(1.2e)")
        even = self._evenness(table)
        if even is None:
            rec.skip("effham.evenness", "p-grid is not symmetric")
        else:
            rec.add("effham.evenness", "effham", even, tol.tol_H, even <= tol.tol_H)
        nflag = int(table.flagged.sum())
        rec.add("effham.consistency", "effham", nflag, 0, nflag == 0, "flagged nodes")
        oracle = self._oracle(table)
        if oracle is None:
            rec.skip("effham.oracle", "no independent reference for this ensemble")
        else:
            err = float(np.max(np.abs(oracle - table.values))) if len(oracle) else 0.0
            rec.add("effham.oracle", "effham", err, tol.tol_flat, err <= tol.tol_flat)
        if self.export:
            self.emitted("effham", *table.export(self.path("effham", "hbar")))
            if oracle is not None:
                d = table.dimension
                self.emitted(
                    "effham",
                    io.write_csv(
                        self.path("effham", "hbar_oracle.csv"),
                        ["p1", "p2"][:d] + ["hbar", "oracle"],
                        [*table.p_grid.T, table.values, oracle],
                    ),
                )

    def _partition(self, table):
        labels_ok = all(r in ("K1", "K2", "K3", "K4") for r in table.region)
        if table.dimension == 1:
            rays = np.sign(table.p_grid[:, 0])
        else:
            rays = np.round(np.arctan2(table.p_grid[:, 1], table.p_grid[:, 0]), 9)
        norms = table.norms
        worst = -np.inf
        for ray in np.unique(rays[norms > 0]):
            on = (rays == ray) & (norms > 0)
            k3 = norms[on & (table.region == "K3")]
            k4 = norms[on & (table.region == "K4")]
            if k3.size and k4.size:
                worst = max(worst, float(k3.max() - k4.min()))
        ok = labels_ok and worst < 0
        return "effham.partition", "effham", worst if np.isfinite(worst) else 0.0, 0.0, ok

    def _evenness(self, table):
        pts = table.p_grid
        worst = None
        for i, p in enumerate(pts):
            j = np.flatnonzero(np.all(np.abs(pts + p) < 1e-9, axis=1))
            if j.size:
                diff = abs(table.values[i] - table.values[j[0]])
                worst = diff if worst is None else max(worst, diff)
        return worst

    def _oracle(self, table):
        if isinstance(self.spec.kind, Constant):
            return (table.norms**2 - 1) ** 2
        if self.spec.dimension == 1 and isinstance(self.spec.kind, ShiftedPeriodic):
            vbar = self.products["sampler"].vbar
            quad_provider = CachedShapeProvider(
                lambda q: periodic_cell_average(self.spec, q, vbar),
                vbar=vbar,
                dimension=1,
                directions=default_directions(1),
                mu_step=self.cfg.tolerances.tol_mu,
            )
            return np.array([evaluate(p, quad_provider, self.cfg.tolerances.tol_mu).value for p in table.p_grid])
        return None

    def reference_hbar(self, p) -> float:
        """``Hbar(p)`` from finer bisections on the same realizations."""
        cache = self.products.setdefault("hbar_ref", {})
        key = tuple(np.atleast_1d(p).tolist())
        if key not in cache:
            fine = self.products.get("fine_provider")
            if fine is None:
                fine = CachedShapeProvider.from_sampler(self.products["sampler"], mu_step=1e-7)
                self.products["fine_provider"] = fine
            hm = hbar_minus(np.atleast_1d(p), fine, 1e-7)
            cache[key] = hm if np.isfinite(hm) else hbar_plus(np.atleast_1d(p), fine, 1e-7)
        return cache[key]

    # -- cell ----------------------------------------------------------------
    def stage_cell(self):
        cfg, rec = self.cfg, self.record
        tol = cfg.tolerances
        d = self.spec.dimension
        deltas = cfg.ladders.delta
        fields = {}
        for delta in deltas:
            grid = cell_domain(self.spec, delta, cfg.grids.cell_spacing)
            fields[delta] = normalize(sample_potential(self.spec, grid))
        sols = []
        bound_v, lips, lip_bounds = 0.0, [], []
        provider = self.products["provider"]
        c = provider.constants
        worst_rise, worst_final = -np.inf, 0.0
        lower, upper = -np.inf, -np.inf
        details = []
        for p1 in cfg.ladders.cell_p:
            p = np.zeros(d)
            p[0] = p1
            ref = self.reference_hbar(p)
            region = evaluate(p, provider, tol.tol_mu).region
            errs = []
            for delta in deltas:
                s = solve_cell(fields[delta], p, delta, tol=tol.tol_cell)
                sols.append(s)
                bound_v = max(bound_v, s.bound_violation())
                lips.append(s.lipschitz())
                lip_bounds.append(s.lipschitz_bound(fields[delta].vbar))
                errs.append(abs(s.minus_delta_v0 - ref))
            rise, _ = _nonincreasing(errs, tol.tol_floor)
            worst_rise = max(worst_rise, rise)
            worst_final = max(worst_final, errs[-1])
            details.append(f"p={p1:g}: " + ", ".join(f"{e:.2e}" for e in errs))
            last = sols[-1].minus_delta_v0
            lower = max(lower, -last)
            if region == "K4":
                lower = max(lower, ref - last)
            if float(np.linalg.norm(p)) < 1:
                upper = max(upper, last - c.mu_star)
        # a solve with residual r meets the discrete comparison bounds up to r / delta
        bound_tol = max([1e-9] + [s.residual / s.delta for s in sols])
        rec.add("cell.bounds", "cell", bound_v, bound_tol, bound_v <= bound_tol)
        lip_excess = max(a - b for a, b in zip(lips, lip_bounds))
        rec.add("cell.lipschitz", "cell", lip_excess, 0.0, lip_excess <= 0.0, f"max |Dv| = {max(lips):.3g}")
        rec.add("cell.proxy_decay", "cell", worst_rise, tol.tol_floor, worst_rise <= tol.tol_floor, "; ".join(details))
        rec.add("cell.proxy_final", "cell", worst_final, tol.tol_hom, worst_final <= tol.tol_hom)
        rec.add("cell.lower_bound", "cell", lower, tol.tol_hom, lower <= tol.tol_hom)
        if np.isfinite(upper):
            rec.add("cell.upper_bound", "cell", upper, tol.tol_hom, upper <= tol.tol_hom)
        else:
            rec.skip("cell.upper_bound", "no |p| < 1 in the cell ladder")
        if len(deltas) >= 2:
            p = np.zeros(d)
            p[0] = cfg.ladders.cell_p[0]
            q = p.copy()
            q[0] += 0.1
            ratios = [check_p_continuity(fields[dl], p, q, dl, tol=tol.tol_cell) for dl in deltas[:2]]
            # Growth of the bound under refinement; a decay (flat Hbar) is fine.
            growth = ratios[1] / max(ratios[0], 1e-300)
            rec.add("cell.continuity", "cell", growth, 2.0, growth <= 2.0, f"ratios {ratios[0]:.4g}, {ratios[1]:.4g}")
        else:
            rec.skip("cell.continuity", "delta ladder has one entry")
        if self.export:
            self.emitted("cell", write_ladder(self.path("cell", "ladder.csv"), sols))

    # -- evolve --------------------------------------------------------------
    def stage_evolve(self):
        cfg, rec = self.cfg, self.record
        tol = cfg.tolerances
        d = self.spec.dimension
        k = cfg.ladders.horizon
        v = self.spec.realization().normalized()
        vbar = self.products["sampler"].vbar
        worst_rise = -np.inf
        details = []
        rows = []
        for p1 in cfg.ladders.evolve_p:
            p = np.zeros(d)
            p[0] = p1
            hb = self.reference_hbar(p)
            alpha = plane_dissipation(p, vbar)
            errs = []
            for eps in cfg.ladders.epsilon:
                grid = evolution_grid(eps, k, k, alpha, nodes_per_eps=cfg.grids.evolve_nodes_per_eps, dimension=d)
                res = solve_oscillatory(
                    v,
                    eps,
                    lambda x, p=p: np.tensordot(p, x, axes=1),
                    k,
                    grid,
                    reference=lambda x, t, p=p, hb=hb: np.tensordot(p, x, axes=1) - t * hb,
                    k=k,
                    name=f"plane_p{p1:g}",
                )
                errs.append(res.error_vs_reference)
                rows.append((p1, eps, res.error_vs_reference, res.steps))
            rise, _ = _nonincreasing(errs, tol.tol_floor)
            worst_rise = max(worst_rise, rise)
            details.append(f"p={p1:g}: " + ", ".join(f"{e:.2e}" for e in errs))
        rec.add("evolve.proxy_decay", "evolve", worst_rise, tol.tol_floor, worst_rise <= tol.tol_floor, "; ".join(details))

        eps = cfg.ladders.epsilon[0]
        p = np.zeros(d)
        p[0] = cfg.ladders.evolve_p[-1]
        alpha = plane_dissipation(p, vbar)
        grid = evolution_grid(eps, 0.25, 0.25, alpha, nodes_per_eps=cfg.grids.evolve_nodes_per_eps, dimension=d)
        g1 = lambda x: np.tensordot(p, x, axes=1)  # noqa: E731
        g2 = lambda x: g1(x) + 0.75  # noqa: E731
        g3 = lambda x: g1(x) + 0.3 * np.exp(-np.sum(np.asarray(x) ** 2, axis=0))  # noqa: E731
        # One dissipation bound for all three runs, so they share a time step.
        vx = v(grid.points() / eps)
        vb = float(vx.max() - min(vx.min(), 0.0))
        shared = max(data_dissipation(grid, g, vb) for g in (g1, g2, g3))
        a = solve_oscillatory(v, eps, g1, 0.25, grid, alpha=shared)
        b = solve_oscillatory(v, eps, g2, 0.25, grid, alpha=shared)
        shift = float(np.max(np.abs(b.slices[-1] - a.slices[-1] - 0.75)))
        rec.add("evolve.constants_commute", "evolve", shift, 1e-9, shift <= 1e-9)
        c = solve_oscillatory(v, eps, g3, 0.25, grid, alpha=shared)
        # Compared on B_k only: the ghost closure follows each run's own data.
        inner = np.max(np.abs(grid.points()), axis=0) <= 0.25 + 1e-12
        order = float(np.max((a.slices[-1] - c.slices[-1])[inner]))
        rec.add("evolve.monotone", "evolve", order, 1e-12, order <= 1e-12, "max (u_a - u_c) on |x| <= k")

        table = self.products.get("table")
        try:
            interp_ok = table is not None and (d == 1 or table.interpolator() is not None)
        except ValueError:
            interp_ok = False
        if interp_ok:
            hb_tab = float(np.asarray(table.interpolator()(p[0] if d == 1 else p[None, :])).ravel()[0])
            hom = solve_homogenized(
                table,
                g1,
                0.25,
                grid,
                reference=lambda x, t: np.tensordot(p, x, axes=1) - t * hb_tab,
                k=0.25,
            )
            rec.add(
                "evolve.homogenized_linear", "evolve", hom.error_vs_reference, 1e-9, hom.error_vs_reference <= 1e-9
            )
        else:
            rec.skip("evolve.homogenized_linear", "table is not on a tensor grid")
        if self.export:
            self.emitted(
                "evolve",
                io.write_csv(
                    self.path("evolve", "plane_errors.csv"),
                    ["p", "epsilon", "sup_error", "steps"],
                    [[r[j] for r in rows] for j in range(4)],
                ),
            )


def _evenness_excess(shape) -> float:
    vals = shape(shape.directions.T)
    flip = shape(-shape.directions.T)
    n = len(shape.stderr)
    if shape.dimension == 2 and n % 2 == 0:
        # equally spaced directions: -e_k is e_{k + n/2}
        se = np.hypot(shape.stderr, np.roll(shape.stderr, n // 2))
    else:
        se = np.hypot(shape.stderr, shape.stderr.max())
    return float(np.max(np.abs(vals - flip) - 3 * se))


_DEPENDS = {
    "potential": (),
    "metric": ("potential",),
    "shape": (),
    "effham": ("shape",),
    "cell": ("shape", "effham"),
    "evolve": ("shape", "effham"),
}

_NUMERICAL = (CellSolverError, BracketError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError, ValueError, RuntimeError)


def _closure(stages) -> list:
    need = set()

    def visit(s):
        for dep in _DEPENDS[s]:
            visit(dep)
        need.add(s)

    for s in stages:
        visit(s)
    return [s for s in STAGES if s in need]


def run_verification_suite(
    cfg: ExperimentConfig,
    stages=STAGES,
    out: Path | str | None = None,
    *,
    export: bool = True,
) -> RunRecord:
    """Run ``stages`` (plus their dependencies) and return the record.

    Checks are recorded for every stage that runs. Artifacts go under
    ``out/<stage>/`` when ``out`` is given; the record itself is written by
    the caller.
    """
    record = RunRecord(cfg.digest(), cfg.to_dict())
    run = _Run(cfg, Path(out) if out is not None else None, record, export and out is not None)
    if not cfg.ladders.evolve_p and "evolve" in stages:
        stages = [s for s in stages if s != "evolve"]
        for a in ANCHORS:
            if a.startswith("evolve."):
                record.skip(a, "no evolve_p ladder configured")
    failed = set()
    for stage in _closure(stages):
        if any(dep in failed for dep in _DEPENDS[stage]):
            record.errors.setdefault(stage, "skipped: a dependency failed")
            failed.add(stage)
            continue
        t0 = time.perf_counter()
        try:
            getattr(run, f"stage_{stage}")()
        except _NUMERICAL as exc:
            log.error("stage %s failed: %s", stage, exc)
            record.errors[stage] = f"{type(exc).__name__}: {exc}"
            failed.add(stage)
        record.timings[stage] = time.perf_counter() - t0
    return record
