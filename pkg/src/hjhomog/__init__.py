"""Stochastic homogenization of u_t + (|Du|^2 - 1)^2 - V(x/eps) = 0, numerically.

Random potentials (:mod:`field`), maximal subsolutions of the square-root
sub-equations (:mod:`metric`), their limit shapes (:mod:`shape`), the
effective Hamiltonian with its K1-K4 regions (:mod:`effham`), the
discounted cell problem (:mod:`cell`) and the time-dependent comparison
(:mod:`evolve`).
"""

from .cell import CellSolution, check_p_continuity, solve_cell
from .effham import CachedShapeProvider, EffConstants, EffectiveHamiltonian, hbar, hbar_minus, hbar_plus, support_gap, tabulate
from .evolve import EvolutionResult, compare, solve_homogenized, solve_oscillatory
from .field import (
    Constant,
    EnsembleSpec,
    PoissonBumps,
    PotentialField,
    ShiftedPeriodic,
    estimate_bounds,
    normalize,
    sample_potential,
)
from .grid import Grid
from .metric import MetricField, MetricStatus, ParamPair, solve_metric
from .shape import ShapeFunction, ShapeSampler, estimate_shape

__version__ = "0.1.0"

__all__ = [
    "CachedShapeProvider",
    "CellSolution",
    "Constant",
    "EffConstants",
    "EffectiveHamiltonian",
    "EnsembleSpec",
    "EvolutionResult",
    "Grid",
    "MetricField",
    "MetricStatus",
    "ParamPair",
    "PoissonBumps",
    "PotentialField",
    "ShapeFunction",
    "ShapeSampler",
    "ShiftedPeriodic",
    "check_p_continuity",
    "compare",
    "estimate_bounds",
    "estimate_shape",
    "hbar",
    "hbar_minus",
    "hbar_plus",
    "normalize",
    "sample_potential",
    "solve_cell",
    "solve_homogenized",
    "solve_metric",
    "solve_oscillatory",
    "support_gap",
    "tabulate",
]
