"""Uniform tensor grids on the box [-R, R]^d."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Nodes ``x_i = -R + i*h`` along each axis.

    A periodic grid identifies ``+R`` with ``-R`` and therefore drops the last
    node, so it has ``2R/h`` nodes per axis instead of ``2R/h + 1``.
    """

    dimension: int
    spacing: float
    half_extent: float
    periodic: bool = False

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dimension}; expected 1 or 2")
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if not self.half_extent > 0:
            raise ValueError(f"half-extent must be positive, got {self.half_extent}")
        cells = 2.0 * self.half_extent / self.spacing
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError(
                f"spacing {self.spacing} does not divide 2R = {2 * self.half_extent}"
            )

    @property
    def cells(self) -> int:
        return int(round(2.0 * self.half_extent / self.spacing))

    @property
    def nodes_per_axis(self) -> int:
        return self.cells if self.periodic else self.cells + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.nodes_per_axis**self.dimension

    @property
    def period(self) -> float:
        return 2.0 * self.half_extent

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_extent + self.spacing * np.arange(self.nodes_per_axis)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dimension), indexing="ij"))

    def points(self) -> np.ndarray:
        """Node coordinates as an array of shape ``(d, *shape)``."""
        return np.stack(self.mesh())

    def index_of(self, point) -> tuple[int, ...]:
        """Index of the node at ``point``; the point must lie on a node."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dimension,):
            raise ValueError(f"expected a {self.dimension}-vector, got shape {point.shape}")
        raw = (point + self.half_extent) / self.spacing
        idx = np.rint(raw).astype(int)
        if np.any(np.abs(raw - idx) > 1e-6):
            raise ValueError(f"point {point.tolist()} is not a grid node")
        if self.periodic:
            idx = idx % self.nodes_per_axis
        elif np.any(idx < 0) or np.any(idx >= self.nodes_per_axis):
            raise ValueError(f"point {point.tolist()} lies outside the grid")
        return tuple(int(i) for i in idx)

    def node(self, index) -> np.ndarray:
        return -self.half_extent + self.spacing * np.asarray(index, dtype=float)

    @property
    def origin(self) -> tuple[int, ...]:
        return self.index_of(np.zeros(self.dimension))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dimension, self.spacing / factor, self.half_extent, self.periodic)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "spacing": self.spacing,
            "half_extent": self.half_extent,
            "periodic": self.periodic,
            "nodes_per_axis": self.nodes_per_axis,
        }
