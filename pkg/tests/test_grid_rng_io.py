import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjhomog import io
from hjhomog.grid import Grid
from hjhomog.rng import derive_seed, realization_seeds, stream


def test_grid_counts():
    g = Grid(1, 0.25, 1.0)
    assert g.cells == 8 and g.nodes_per_axis == 9 and g.shape == (9,)
    assert np.allclose(g.axis[[0, -1]], [-1.0, 1.0])
    p = Grid(2, 0.25, 1.0, periodic=True)
    assert p.shape == (8, 8) and p.size == 64 and p.period == 2.0


@pytest.mark.parametrize(
    "args", [(3, 0.1, 1.0), (1, 0.0, 1.0), (1, 0.1, -1.0), (1, 0.3, 1.0)]
)
def test_grid_rejects(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_index_of():
    g = Grid(2, 0.5, 2.0)
    assert g.origin == (4, 4)
    assert g.index_of([1.0, -2.0]) == (6, 0)
    with pytest.raises(ValueError):
        g.index_of([0.25, 0.0])
    with pytest.raises(ValueError):
        g.index_of([2.5, 0.0])
    with pytest.raises(ValueError):
        g.index_of([0.0])
    assert Grid(1, 0.5, 2.0, periodic=True).index_of([2.0]) == (0,)


@given(st.integers(1, 2), st.integers(1, 40), st.integers(1, 5))
def test_node_roundtrip(d, n, m):
    h = 1.0 / m
    g = Grid(d, h, n * h)
    idx = tuple(np.full(d, n // 2))
    assert g.index_of(g.node(idx)) == idx
    assert g.refined().spacing == h / 2 and g.refined().half_extent == g.half_extent


def test_streams_independent_and_reproducible():
    a = stream(5, "shift").uniform(size=4)
    b = stream(5, "shift").uniform(size=4)
    c = stream(5, "bumps", 0, 0).uniform(size=4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert stream(5, "bumps", -1).uniform() != stream(5, "bumps", 1).uniform()


@given(st.integers(0, 2**40), st.integers(1, 6))
def test_realization_seeds_disjoint(seed, n):
    first = realization_seeds(seed, n)
    second = realization_seeds(seed, n, offset=n)
    assert len(set(first) | set(second)) == 2 * n
    assert first == realization_seeds(seed, n)
    assert derive_seed(seed, "x") == derive_seed(seed, "x")


@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=True, width=64), min_size=1, max_size=20))
def test_csv_float_roundtrip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "v.csv"
    io.write_csv(path, ["v"], [np.array(values)])
    names, rows = io.read_csv(path)
    assert names == ["v"]
    back = [float(r[0]) for r in rows]
    assert all(x == y for x, y in zip(back, values))


def test_csv_rejects_ragged(tmp_path):
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "x.csv", ["a", "b"], [[1, 2], [1]])


def test_json_handles_numpy_and_inf(tmp_path):
    path = io.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "n": np.int64(3), "inf": -math.inf, "arr": np.arange(2)})
    text = path.read_text()
    assert '"-inf"' in text and '"n": 3' in text and "[\n    0,\n    1\n  ]" in text
