import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjhomog.field import EnsembleSpec, PoissonBumps, ShiftedPeriodic, normalize, sample_potential
from hjhomog.grid import Grid
from hjhomog.metric import (
    MetricStatus,
    ParamPair,
    check_subsolution_properties,
    local_cost,
    pairwise_metric,
    sample_nodes,
    solve_metric,
    speed_squared,
)
from oracles import metric_1d

pairs = st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5]), st.sampled_from([-1.0, -0.5, 0.0, 0.5, 1.0])).map(
    lambda t: ParamPair(*t)
)


def _zero(d, h=0.25, R=4.0):
    g = Grid(d, h, R)
    return normalize(sample_potential(EnsembleSpec(dimension=d), g))


def test_param_pair_validation():
    with pytest.raises(ValueError):
        ParamPair(-0.1, 0.0)
    with pytest.raises(ValueError):
        ParamPair(0.0, 1.5)
    assert ParamPair(0.6, -1.0).admissible(0.4)
    assert not ParamPair(0.61, -1.0).admissible(0.4)


def test_cone_constants_closed_form():
    lo, hi = ParamPair(0.25, -1.0).cone_constants(0.4)
    assert lo == pytest.approx(math.sqrt(1 - math.sqrt(0.65)))
    assert hi == pytest.approx(math.sqrt(0.5))
    lo, hi = ParamPair(0.0, 1.0).cone_constants(0.4)
    assert (lo, hi) == pytest.approx((1.0, math.sqrt(1 + math.sqrt(0.4))))


@pytest.mark.parametrize("d", [1, 2])
def test_constant_cost_exact(d):
    f = _zero(d)
    m = solve_metric(f, ParamPair(0.25, 1.0), np.zeros(d))
    c = math.sqrt(1.5)
    assert m.finite
    assert np.max(np.abs(m.values - c * m.distance_from_source())) < 1e-12


def test_raw_fast_marching_is_biased_but_close():
    f = _zero(2)
    raw = solve_metric(f, ParamPair(0.0, 1.0), [0.0, 0.0], bias_correction=False)
    err = np.max(np.abs(raw.values - raw.distance_from_source()))
    assert 0 < err < 0.1 * 4.0


def test_metric_1d_matches_quadrature(periodic1d):
    g = Grid(1, 1 / 128, 12.0)
    f = normalize(sample_potential(periodic1d, g))
    shift = periodic1d.realization().shift[0]
    for params in (ParamPair(0.0, 1.0), ParamPair(0.25, -1.0), ParamPair(0.1, 0.5)):
        m = solve_metric(f, params, 0.0)
        for R in (3.0, -7.5, 10.0):
            # integral of the cost over [min(0, R), max(0, R)]
            exact = metric_1d(abs(R), params.mu, params.sigma, shift=shift + min(R, 0.0))
            assert m.at(np.array([[R]]))[0] == pytest.approx(exact, rel=1e-4)


def test_neg_infinity_sentinel(periodic1d):
    f = normalize(sample_potential(periodic1d, Grid(1, 0.125, 2.0)))
    m = solve_metric(f, ParamPair(0.7, -1.0), 0.0)
    assert m.status is MetricStatus.NEG_INFINITY and np.all(m.values == -np.inf)
    assert np.all(m.at(np.array([[0.5, 1.0]])) == -np.inf)
    # judged against the ensemble oscillation when given
    assert solve_metric(f, ParamPair(0.5, -1.0), 0.0, vbar=0.6).status is MetricStatus.NEG_INFINITY


def test_preconditions(periodic1d):
    raw = sample_potential(periodic1d, Grid(1, 0.125, 2.0))
    with pytest.raises(ValueError):
        solve_metric(raw, ParamPair(0.0, 1.0))
    with pytest.raises(ValueError):
        solve_metric(normalize(raw), ParamPair(0.0, 1.0), 0.0625)


def test_degenerate_nodes_counted():
    g = Grid(1, 0.25, 2.0)
    f = normalize(sample_potential(EnsembleSpec(ShiftedPeriodic("cosine", 1.0, 0.2), 1, 0.4, 3), g))
    m = solve_metric(f, ParamPair(0.6, -1.0), 0.0, vbar=0.4)
    # nodes at the top of the profile have zero speed; they count but stay passable
    cost, deg = local_cost(f.values, ParamPair(0.6, -1.0))
    assert m.degenerate == int(deg.sum())
    assert np.all(np.isfinite(m.values))
    assert speed_squared(f, ParamPair(0.0, 1.0), (0,)) >= 1.0


@given(st.integers(0, 1000), pairs)
def test_cone_and_lipschitz_1d(seed, params):
    spec = EnsembleSpec(PoissonBumps(0.4, 0.5, 0.4), 1, 0.4, seed)
    f = normalize(sample_potential(spec, Grid(1, 1 / 16, 8.0)))
    m = solve_metric(f, params, 0.0, vbar=0.4)
    lo, hi = params.cone_constants(0.4)
    r = m.distance_from_source()
    assert np.all(m.values >= lo * r - 1e-12) and np.all(m.values <= hi * r + 1e-12)
    assert np.max(np.abs(np.diff(m.values))) <= params.lipschitz_constant(0.4) * f.grid.spacing + 1e-12


@given(st.integers(0, 1000), pairs, pairs)
def test_monotone_in_parameters_2d(seed, a, b):
    """Ordered parameters give ordered costs, hence ordered metrics node by node."""
    spec = EnsembleSpec(PoissonBumps(0.3, 1.0, 0.4), 2, 0.4, seed)
    f = normalize(sample_potential(spec, Grid(2, 0.25, 3.0)))
    ca, _ = local_cost(f.values, a)
    cb, _ = local_cost(f.values, b)
    if not (np.all(ca <= cb) and a.admissible(0.4) and b.admissible(0.4)):
        return
    ma = solve_metric(f, a, [0.0, 0.0], vbar=0.4)
    mb = solve_metric(f, b, [0.0, 0.0], vbar=0.4)
    assert np.all(ma.values <= mb.values + 1e-12)


def test_symmetry_subadditivity_1d_exact(periodic1d):
    f = normalize(sample_potential(periodic1d, Grid(1, 1 / 32, 6.0)))
    params = ParamPair(0.1, 1.0)
    m = solve_metric(f, params, 0.0)
    rep = check_subsolution_properties(m, f, params, 1e-10, n_points=8, n_triples=100)
    assert rep.passed, rep.as_dict()
    assert rep.n_pairs == 36 and rep.n_triples == 100


def test_2d_defects_shrink_with_h(bumps2d):
    params = ParamPair(0.0, 1.0)
    defects = []
    for h in (0.25, 0.125):
        f = normalize(sample_potential(bumps2d, Grid(2, h, 3.0)))
        m = solve_metric(f, params, [0.0, 0.0], vbar=0.4)
        nodes = [f.grid.index_of(p) for p in ([0.5, 0.0], [-0.5, 0.5], [0.0, -0.75], [0.5, 0.5])]
        rep = check_subsolution_properties(m, f, params, 1.0, nodes=nodes, n_triples=50)
        defects.append(rep.symmetry_defect)
    assert defects[1] <= defects[0] + 1e-12


def test_sample_nodes_within_third_of_trust(bumps2d):
    f = normalize(sample_potential(bumps2d, Grid(2, 0.25, 3.0)))
    m = solve_metric(f, ParamPair(0.0, 1.0), [0.0, 0.0])
    nodes = sample_nodes(m, 10, seed=1)
    r = m.distance_from_source()
    assert len(set(nodes)) == 10 and all(r[n] <= m.trust_radius / 3 for n in nodes)
    assert nodes == sample_nodes(m, 10, seed=1)
    table = pairwise_metric(f, ParamPair(0.0, 1.0), nodes[:3])
    assert np.all(np.diag(table) == 0.0)


def test_export(tmp_path, periodic1d):
    f = normalize(sample_potential(periodic1d, Grid(1, 0.25, 2.0)))
    csv_path, json_path = solve_metric(f, ParamPair(0.0, 1.0), 0.0).export(tmp_path / "m")
    assert csv_path.exists() and '"status": "Finite"' in json_path.read_text()
