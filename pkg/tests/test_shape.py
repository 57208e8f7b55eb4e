import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjhomog.field import EnsembleSpec, PoissonBumps
from hjhomog.metric import MetricStatus, ParamPair
from hjhomog.shape import (
    ShapeFunction,
    ShapeSampler,
    batch_agreement,
    check_shape_monotonicity,
    default_directions,
    estimate_shape,
    periodic_cell_average,
)
from test_oracles import CELL

LADDER = [ParamPair(*t) for t in [(0.0, -1.0), (0.0, 0.0), (0.0, 1.0), (0.25, -1.0), (0.25, 0.0), (0.25, 1.0), (0.5, -1.0), (0.5, 1.0)]]


@pytest.fixture(scope="module")
def periodic_sampler(periodic1d):
    return ShapeSampler(periodic1d, radii=[25.0, 50.0, 100.0])


@pytest.fixture(scope="module")
def bumps_sampler():
    spec = EnsembleSpec(PoissonBumps(0.3, 0.5, 0.4), 1, 0.4, 5)
    return ShapeSampler(spec, radii=[20.0, 40.0], realizations=6, vbar=0.4)


def test_default_directions():
    assert default_directions(1).tolist() == [[1.0], [-1.0]]
    d = default_directions(2, 8)
    assert d.shape == (8, 2) and np.allclose(np.linalg.norm(d, axis=1), 1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_constant_potential_shape_is_cone(d, zero1d, zero2d):
    spec = zero1d if d == 1 else zero2d
    for params in (ParamPair(0.0, 1.0), ParamPair(0.25, -1.0), ParamPair(0.5, 0.5)):
        s = estimate_shape(spec, params, radii=[4.0], spacing=1 / 16)
        # 2D probes sit between nodes; bilinear interpolation of the exact cone errs by O((h/R)^2)
        tol = 1e-12 if d == 1 else (1 / 16 / 4.0) ** 2
        assert np.allclose(s.values, math.sqrt(1 + params.sigma * math.sqrt(params.mu)), atol=tol)


@pytest.mark.parametrize("pair", sorted(CELL))
def test_periodic_shape_matches_cell_average(pair, periodic_sampler, periodic1d):
    s = periodic_sampler.shape(ParamPair(*pair))
    # (0.6, -1) touches the admissibility boundary: the cost has a square-root cusp at the top of V
    tol = 1e-3 if pair == (0.6, -1.0) else 1e-4
    assert np.allclose(s.values, CELL[pair], atol=tol)
    assert periodic_cell_average(periodic1d, ParamPair(*pair)).values[0] == pytest.approx(CELL[pair], abs=1e-12)


def test_cell_average_rejects_other_ensembles(zero1d):
    with pytest.raises(ValueError):
        periodic_cell_average(zero1d, ParamPair(0.0, 1.0))


def test_inadmissible_shape(periodic_sampler, periodic1d):
    s = periodic_sampler.shape(ParamPair(0.7, -1.0))
    assert s.status is MetricStatus.NEG_INFINITY and not s.finite
    assert np.all(s(np.ones((1, 3))) == -np.inf)
    assert not periodic_cell_average(periodic1d, ParamPair(0.7, -1.0)).finite


def test_monotone_ladder_exact(bumps_sampler):
    shapes = [bumps_sampler.shape(p) for p in LADDER]
    rep = check_shape_monotonicity(shapes)
    assert rep.violations and rep.ordered(0.0)
    gaps = {(a, b): g for a, b, g in rep.strict_gaps}
    assert gaps[(ParamPair(0.25, -1.0), ParamPair(0.0, -1.0))] > 0


@given(st.sampled_from(LADDER), st.sampled_from(LADDER))
def test_pairwise_order_property(bumps_sampler, a, b):
    """Common realizations make the ordering hold sample by sample."""
    sa, sb = bumps_sampler.shape(a), bumps_sampler.shape(b)
    if a.mu == b.mu and a.sigma <= b.sigma:
        assert np.all(sa.samples <= sb.samples + 1e-12)
    if a.sigma == b.sigma and a.sigma * a.mu <= b.sigma * b.mu:
        assert np.all(sa.values <= sb.values + 1e-12)


def test_stderr_and_agreement(bumps_sampler):
    s = bumps_sampler.shape(ParamPair(0.0, 1.0))
    assert s.samples.shape == (6, 2, 2) and np.all(s.stderr > 0)
    assert np.all(batch_agreement(s, s) == 0.0)
    exact = ShapeFunction(s.params, s.directions, s.values + 1, np.zeros(2), s.radii_used, s.ladder)
    zero = ShapeFunction(s.params, s.directions, s.values, np.zeros(2), s.radii_used, s.ladder)
    assert np.all(np.isinf(batch_agreement(exact, zero)))


def _synthetic(values, radii=(10.0, 20.0), ladder=None):
    dirs = default_directions(2, len(values))
    values = np.asarray(values, dtype=float)
    ladder = np.stack([values, values]) if ladder is None else ladder
    return ShapeFunction(ParamPair(0.0, 1.0), dirs, values, np.zeros(len(values)), radii, ladder)


@given(st.floats(0.0, 10.0), st.floats(-np.pi, np.pi))
def test_positive_homogeneity(t, theta):
    s = _synthetic(1.0 + 0.2 * np.cos(2 * 2 * np.pi * np.arange(16) / 16))
    y = np.array([[np.cos(theta)], [np.sin(theta)]])
    assert s(t * y)[0] == pytest.approx(t * s(y)[0], rel=1e-12, abs=1e-12)


def test_interpolation_between_directions():
    s = _synthetic([1.0, 2.0, 1.0, 2.0])
    assert s.value_at(np.pi / 4) == pytest.approx(1.5)
    assert s.value_at(-np.pi / 4) == pytest.approx(1.5)  # wraps around
    assert s.evenness_defect() == 0.0


def test_richardson_removes_one_over_r():
    ladder = np.array([[1.0 + 1 / 10] * 4, [1.0 + 1 / 20] * 4])
    s = _synthetic(ladder[-1], ladder=ladder)
    assert np.allclose(s.richardson(), 1.0)
    assert np.allclose(s.cauchy_steps(), 0.05)


def test_periodic_evenness_and_convergence(periodic_sampler):
    s = periodic_sampler.shape(ParamPair(0.25, 1.0))
    assert s.evenness_defect() < 1e-10  # whole periods in both directions
    assert s.cauchy_steps()[-1] < 1e-10


def test_sampler_validation(periodic1d):
    with pytest.raises(ValueError):
        ShapeSampler(periodic1d, directions=[[2.0]])
    with pytest.raises(ValueError):
        ShapeSampler(periodic1d, directions=[1.0, -1.0])
    with pytest.raises(ValueError):
        ShapeSampler(periodic1d, seeds=[])


def test_direction_mismatch(bumps_sampler):
    a = bumps_sampler.shape(ParamPair(0.0, 1.0))
    b = _synthetic([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        check_shape_monotonicity([a, b])


def test_export(tmp_path, periodic_sampler):
    csv_path, json_path = periodic_sampler.shape(ParamPair(0.0, 1.0)).export(tmp_path / "s")
    assert csv_path.read_text().splitlines()[0] == "e1,value,stderr"
    assert '"radii"' in json_path.read_text()
