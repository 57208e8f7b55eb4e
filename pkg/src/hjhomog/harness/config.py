"""Experiment configuration: INI sections whose values are JSON literals.

Example::

    [ensemble]
    kind = "shifted_periodic"
    params = {"profile": "cosine", "period": 1.0, "amplitude": 0.2}
    dimension = 1
    bound = 0.4
    seed = 7

Every key has a default, so a file only lists what it changes. Unknown
sections or keys, bad JSON and values failing validation raise
:class:`ConfigError`.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..field import EnsembleSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleSection:
    kind: str = "constant"
    params: dict = field(default_factory=dict)
    dimension: int = 1
    bound: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class GridSection:
    metric_spacing: float = 0.125
    metric_extent: float = 4.0
    shape_spacing: float | None = None
    cell_spacing: float | None = None
    evolve_nodes_per_eps: int = 16


@dataclass(frozen=True)
class LadderSection:
    pairs: list = field(default_factory=lambda: [[0.0, -1.0], [0.0, 1.0], [0.25, -1.0], [0.25, 1.0], [0.25, 0.0]])
    radii: list | None = None
    directions: int = 32
    realizations: int | None = None
    batch_realizations: int | None = None  # per batch in the ergodicity check; None: same as realizations
    p_grid: dict = field(default_factory=lambda: {"kind": "line", "max": 2.0, "step": 0.1})
    delta: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    cell_p: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5])
    epsilon: list = field(default_factory=lambda: [0.125, 0.0625, 0.03125])
    evolve_p: list = field(default_factory=lambda: [0.0, 0.5, 1.5])
    horizon: float = 1.0
    metric_pairs: int = 200


@dataclass(frozen=True)
class ToleranceSection:
    tol_mu: float = 1e-3
    tol_gap: float | None = None  # None: derived from each shape's error estimate
    tol_H: float = 0.05
    tol_flat: float = 0.02
    tol_cell: float | None = None  # None: scale-aware default inside the cell solver
    tol_hom: float = 0.05
    tol_floor: float = 1e-5
    tol_order: float = 1e-12


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    name: str = "run"


_SECTIONS = {
    "ensemble": EnsembleSection,
    "grids": GridSection,
    "ladders": LadderSection,
    "tolerances": ToleranceSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    grids: GridSection = field(default_factory=GridSection)
    ladders: LadderSection = field(default_factory=LadderSection)
    tolerances: ToleranceSection = field(default_factory=ToleranceSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        validate(self)

    @property
    def spec(self) -> EnsembleSpec:
        e = self.ensemble
        return EnsembleSpec.from_dict(
            {"kind": e.kind, "params": e.params, "dimension": e.dimension, "bound": e.bound, "seed": e.seed}
        )

    @property
    def dimension(self) -> int:
        return self.ensemble.dimension

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, ensemble=replace(self.ensemble, seed=int(seed)))

    def with_output(self, directory) -> "ExperimentConfig":
        return replace(self, output=replace(self.output, directory=str(directory)))

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name, section in self.to_dict().items():
            parser[name] = {k: json.dumps(v, sort_keys=True) for k, v in section.items()}
        lines = []
        for name in parser.sections():
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in parser[name].items()]
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def p_nodes(self) -> np.ndarray:
        return p_nodes(self.ladders.p_grid, self.dimension)


def p_nodes(spec: dict, dimension: int) -> np.ndarray:
    """Momentum nodes from a grid description.

    ``line``: ``-max..max`` by ``step`` along the first axis (1D), or the
    tensor grid of that line in 2D. ``polar``: the listed radii times
    ``angles`` equally spaced directions plus the origin. ``list``: explicit
    ``points``.
    """
    kind = spec.get("kind", "line")
    if kind == "line":
        n = int(round(spec["max"] / spec["step"]))
        axis = np.arange(-n, n + 1) * spec["step"]
        if dimension == 1:
            return axis[:, None]
        a, b = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=1)
    if kind == "polar":
        if dimension != 2:
            raise ConfigError("polar p-grids are two-dimensional")
        th = 2 * np.pi * np.arange(spec["angles"]) / spec["angles"]
        pts = [np.zeros(2)] + [r * np.array([np.cos(t), np.sin(t)]) for r in spec["radii"] if r > 0 for t in th]
        return np.array(pts)
    if kind == "list":
        pts = np.asarray(spec["points"], dtype=float)
        return pts.reshape(-1, dimension)
    raise ConfigError(f"unknown p-grid kind {kind!r}")


def _check_sorted(name, values, reverse=False, allow_empty=False):
    if not values and allow_empty:
        return
    if not values:
        raise ConfigError(f"ladder {name!r} is empty")
    ordered = sorted(values, reverse=reverse)
    if list(values) != ordered or len(set(values)) != len(values):
        raise ConfigError(f"ladder {name!r} must be strictly {'decreasing' if reverse else 'increasing'}")


def validate(cfg: ExperimentConfig) -> None:
    try:
        spec = cfg.spec
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ensemble: {exc}") from None
    for k, v in asdict(cfg.tolerances).items():
        if v is not None and not v > 0:
            raise ConfigError(f"tolerance {k} must be positive")
    lad = cfg.ladders
    _check_sorted("delta", lad.delta, reverse=True)
    _check_sorted("epsilon", lad.epsilon, reverse=True)
    _check_sorted("cell_p", lad.cell_p)
    _check_sorted("evolve_p", lad.evolve_p, allow_empty=True)
    if lad.radii is not None:
        _check_sorted("radii", lad.radii)
    if not lad.pairs:
        raise ConfigError("ladder 'pairs' is empty")
    for pair in lad.pairs:
        if len(pair) != 2:
            raise ConfigError(f"parameter pair {pair!r} must have two entries")
    for key in ("realizations", "batch_realizations"):
        n = getattr(lad, key)
        if n is not None and n < 1:
            raise ConfigError(f"{key} must be at least 1")
    if lad.directions < 1 or lad.metric_pairs < 1 or lad.horizon <= 0:
        raise ConfigError("directions, metric_pairs and horizon must be positive")
    g = cfg.grids
    for k in ("metric_spacing", "metric_extent", "shape_spacing", "cell_spacing"):
        v = getattr(g, k)
        if v is not None and not v > 0:
            raise ConfigError(f"grid {k} must be positive")
    if g.evolve_nodes_per_eps < 8:
        raise ConfigError("evolve_nodes_per_eps must be at least 8")
    p_nodes(lad.p_grid, spec.dimension)


def from_dict(data: dict) -> ExperimentConfig:
    sections = {}
    for name, payload in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        cls = _SECTIONS[name]
        known = {f.name for f in fields(cls)}
        extra = set(payload) - known
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
        try:
            sections[name] = cls(**payload)
        except TypeError as exc:
            raise ConfigError(f"bad section [{name}]: {exc}") from None
    return ExperimentConfig(**sections)


def from_ini(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    data = {}
    for name in parser.sections():
        data[name] = {}
        for key, raw in parser[name].items():
            try:
                data[name][key] = json.loads(raw)
            except json.JSONDecodeError:
                raise ConfigError(f"[{name}] {key}: value {raw!r} is not a JSON literal") from None
    return from_dict(data)


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return from_ini(path.read_text())


def dump(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.to_ini())
    return path


def reference(name: str) -> ExperimentConfig:
    """Built-in configurations: ``v0`` (1D), ``v0-2d``, ``periodic1d`` and ``bumps2d``."""
    if name == "v0":
        return ExperimentConfig(
            ensemble=EnsembleSection("constant", {"level": 0.0}, 1, 1.0, 0),
            ladders=LadderSection(radii=[4.0], epsilon=[0.25, 0.125], evolve_p=[0.0, 0.5, 1.5]),
            output=OutputSection(name="v0"),
        )
    if name == "v0-2d":
        return ExperimentConfig(
            ensemble=EnsembleSection("constant", {"level": 0.0}, 2, 1.0, 0),
            grids=GridSection(metric_spacing=0.125, metric_extent=2.0, shape_spacing=1 / 64),
            ladders=LadderSection(
                radii=[4.0],
                p_grid={"kind": "polar", "radii": [0.0, 0.5, 1.0, 1.5, 2.0], "angles": 8},
                delta=[0.5, 0.25],
                cell_p=[0.0, 0.5],
                epsilon=[0.5, 0.25],
                evolve_p=[0.5],
                metric_pairs=50,
            ),
            output=OutputSection(name="v0-2d"),
        )
    if name == "periodic1d":
        return ExperimentConfig(
            ensemble=EnsembleSection(
                "shifted_periodic", {"profile": "cosine", "period": 1.0, "amplitude": 0.2}, 1, 0.4, 7
            ),
            output=OutputSection(name="periodic1d"),
        )
    if name == "bumps2d":
        return ExperimentConfig(
            ensemble=EnsembleSection(
                "poisson_bumps", {"intensity": 0.15, "radius": 1.0, "height": 0.4}, 2, 0.4, 11
            ),
            grids=GridSection(metric_spacing=0.125, metric_extent=3.0, shape_spacing=0.125),
            ladders=LadderSection(
                radii=[4.0, 8.0, 12.0],
                realizations=8,
                batch_realizations=16,
                p_grid={"kind": "polar", "radii": [0.0, 0.4, 0.8, 1.0, 1.2, 1.6, 2.0], "angles": 8},
                delta=[0.5, 0.25],
                cell_p=[0.0, 1.5],
                epsilon=[0.5, 0.25],
                evolve_p=[1.0, 1.5],
                horizon=0.25,
                metric_pairs=100,
            ),
            output=OutputSection(name="bumps2d"),
        )
    raise ConfigError(f"unknown reference config {name!r}")


REFERENCE_NAMES = ("v0", "v0-2d", "periodic1d", "bumps2d")
