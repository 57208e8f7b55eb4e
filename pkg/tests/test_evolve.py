import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjhomog.effham import EffConstants, EffectiveHamiltonian
from hjhomog.cell import dissipation_bound
from hjhomog.evolve import (
    compare,
    data_dissipation,
    evolution_grid,
    godunov_flux,
    plane_dissipation,
    solve_homogenized,
    solve_oscillatory,
    table_slope_bound,
)
from hjhomog.grid import Grid
from oracles import cosine_potential, hopf_cone


def zero(points):
    return np.zeros(points.shape[1:])


def cosine(points):
    return np.vectorize(cosine_potential())(points[0])


def cone(slope):
    return lambda x: slope * np.sqrt(np.sum(x**2, axis=0))


def plane(p):
    p = np.asarray(p, dtype=float)
    return lambda x: np.tensordot(p, x, axes=1)


def bump(x):
    r2 = np.sum(x**2, axis=0)
    return 0.3 * np.maximum(0.0, 1 - 4 * r2) ** 2


def _hopf_reference(slope):
    def ref(pts, t):
        return hopf_cone(np.sqrt(np.sum(pts**2, axis=0)), t, slope)

    return ref


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_godunov_consistent_and_monotone(a, b):
    qa, qb = np.array([[a]]), np.array([[b]])
    assert godunov_flux(qa, qa)[0] == pytest.approx((a * a - 1) ** 2)
    # nonincreasing in q+ and nondecreasing in q-
    step = np.array([[1e-3]])
    assert godunov_flux(qb + step, qa)[0] <= godunov_flux(qb, qa)[0] + 1e-12
    assert godunov_flux(qb, qa + step)[0] >= godunov_flux(qb, qa)[0] - 1e-12


@pytest.mark.parametrize("d,p", [(1, [0.4]), (1, [1.3]), (2, [0.3, -0.8])])
def test_plane_data_exact(d, p):
    alpha = plane_dissipation(p, 0.0)
    grid = evolution_grid(0.25, 0.5, 0.5, alpha, dimension=d)
    ref = lambda x, t: plane(p)(x) - t * (np.dot(p, p) - 1) ** 2  # noqa: E731
    res = solve_oscillatory(zero, 0.25, plane(p), 0.5, grid, reference=ref, k=0.5)
    assert res.error_vs_reference < 1e-11


def test_hopf_1d_converges():
    """Slope 1.2 opens a fan at the kink: the maximizer sweeps [1, 1.2]."""
    errs = []
    for n in (16, 32, 64):
        grid = evolution_grid(1.0, 0.5, 0.5, data_dissipation(Grid(1, 1 / n, 2.0), cone(1.2), 0.0), nodes_per_eps=n)
        res = solve_oscillatory(zero, 1.0, cone(1.2), 0.5, grid, reference=_hopf_reference(1.2), k=0.5)
        errs.append(res.error_vs_reference)
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 5e-3


def test_hopf_2d_converges():
    errs = []
    for n in (8, 16):
        alpha = data_dissipation(Grid(2, 1 / n, 2.0), cone(1.2), 0.0)
        grid = evolution_grid(1.0, 0.25, 0.25, alpha, nodes_per_eps=n, dimension=2)
        res = solve_oscillatory(zero, 1.0, cone(1.2), 0.25, grid, reference=_hopf_reference(1.2), k=0.25)
        errs.append(res.error_vs_reference)
    assert errs[1] < 0.8 * errs[0]


def test_concave_kink_raises_level():
    probe = Grid(1, 1 / 32, 2.0)
    convex = data_dissipation(probe, cone(1.2), 0.0)
    concave = data_dissipation(probe, lambda x: -cone(1.2)(x), 0.0)
    # H(1.2) = 0.1936 for the cone, H(0) = 1 across the ridge
    assert convex == pytest.approx(dissipation_bound(1.2))
    assert concave == pytest.approx(dissipation_bound(math.sqrt(2.0)))


@given(st.floats(-5.0, 5.0))
def test_constants_commute(c):
    grid = evolution_grid(0.25, 0.5, 0.25, 2.0)
    g = cone(0.5)
    a = solve_oscillatory(cosine, 0.25, g, 0.25, grid, times=[0.125])
    b = solve_oscillatory(cosine, 0.25, lambda x: g(x) + c, 0.25, grid, times=[0.125])
    assert np.max(np.abs(b.slices - a.slices - c)) < 1e-10 * (1 + abs(c))


@pytest.mark.parametrize("d,dissipation", [(1, "godunov"), (1, "global"), (2, "global")])
def test_comparison_principle(d, dissipation):
    g1 = cone(0.5)
    g2 = lambda x: g1(x) + bump(x)  # noqa: E731
    probe = Grid(d, 1 / 32, 2.0)
    alpha = max(data_dissipation(probe, g1, 0.4), data_dissipation(probe, g2, 0.4))
    grid = evolution_grid(0.25, 0.5, 0.25, alpha, nodes_per_eps=8, dimension=d)
    pot = cosine if d == 1 else (lambda x: cosine(x[:1]) * 0.5 + cosine(x[1:]) * 0.5)
    kw = dict(times=[0.1, 0.2], alpha=alpha, dissipation=dissipation)
    a = solve_oscillatory(pot, 0.25, g1, 0.25, grid, **kw)
    b = solve_oscillatory(pot, 0.25, g2, 0.25, grid, **kw)
    assert np.all(b.slices >= a.slices - 1e-12)


def test_input_errors():
    grid = evolution_grid(0.25, 0.5, 0.25, 2.0)
    g = cone(0.5)
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.25, g, 0.25, grid, cfl=0.6)
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.25, g, 0.25, grid, alpha=1e-3)
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.1, g, 0.25, grid)
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.25, g, -1.0, grid)
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.25, g, 0.25, grid, times=[0.5])
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.25, g, 0.25, grid, dissipation="roe")
    with pytest.raises(ValueError):
        solve_oscillatory(zero, 0.25, plane([0, 0]), 0.1, Grid(2, 1 / 32, 1.0), dissipation="godunov")


def test_compare_and_slices(tmp_path):
    grid = evolution_grid(0.25, 0.5, 0.25, 2.0)
    a = solve_oscillatory(cosine, 0.25, cone(0.5), 0.25, grid, times=[0.125])
    assert compare(a, a, 0.25) == 0.0
    assert a.times == pytest.approx((0.0, 0.125, 0.25))
    assert np.array_equal(a.slice_at(0.0), cone(0.5)(grid.points()))
    with pytest.raises(KeyError):
        a.slice_at(0.1)
    b = solve_oscillatory(cosine, 0.25, cone(0.5), 0.25, grid)
    with pytest.raises(ValueError):
        compare(a, b, 0.25)
    c = solve_oscillatory(cosine, 0.25, cone(0.5), 0.25, evolution_grid(0.25, 0.5, 0.25, 3.0), times=[0.125])
    with pytest.raises(ValueError):
        compare(a, c, 0.25)
    paths = a.export(tmp_path / "run")
    assert len(paths) == 4 and paths[-1].suffix == ".json"


def _exact_table(lo=-2.0, hi=2.0, n=161):
    p = np.linspace(lo, hi, n)
    vals = (p * p - 1) ** 2
    return EffectiveHamiltonian(p[:, None], vals, np.array(["K4"] * n), EffConstants.from_vbar(0.0))


def test_homogenized_plane_and_range():
    table = _exact_table()
    p = 1.25  # a table node, so the interpolant is exact there
    grid = evolution_grid(0.25, 0.5, 0.5, 10.0)
    ref = lambda x, t: p * x[0] - t * (p * p - 1) ** 2  # noqa: E731
    res = solve_homogenized(table, plane([p]), 0.5, grid, reference=ref, k=0.5)
    assert res.epsilon == 0.0 and res.error_vs_reference < 1e-11
    with pytest.raises(ValueError):
        solve_homogenized(table, plane([2.5]), 0.1, grid)
    with pytest.raises(ValueError):
        solve_homogenized(table, plane([0.0, 0.0]), 0.1, Grid(2, 1 / 32, 1.0))


def test_homogenized_hopf():
    table = _exact_table()
    errs = []
    for n in (16, 32, 64):
        grid = evolution_grid(1.0, 0.5, 0.5, 3.0, nodes_per_eps=n)
        res = solve_homogenized(table, cone(1.2), 0.5, grid, reference=_hopf_reference(1.2), k=0.5)
        errs.append(res.error_vs_reference)
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 0.05
    # only cells with Hbar <= H(1.2) set the dissipation
    assert res.alpha == pytest.approx(table_slope_bound(table, (1.2**2 - 1) ** 2))
    ridge = solve_homogenized(table, lambda x: -cone(1.2)(x), 0.1, grid)
    assert ridge.alpha == pytest.approx(table_slope_bound(table, 1.0)) and ridge.alpha > res.alpha


def test_oscillatory_approaches_homogenized_periodic():
    """Plane data: u_eps(x, t) -> p x - t Hbar(p); Hbar(1.5) from quadrature is 1.36659."""
    p, T = 1.5, 0.5
    errs = []
    for eps in (1 / 4, 1 / 8, 1 / 16):
        grid = evolution_grid(eps, 0.5, T, plane_dissipation([p], 0.4), nodes_per_eps=16)
        ref = lambda x, t: p * x[0] - t * 1.3665924004679053  # noqa: E731
        errs.append(solve_oscillatory(cosine, eps, plane([p]), T, grid, reference=ref, k=0.5).error_vs_reference)
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 0.03
