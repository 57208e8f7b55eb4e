from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjhomog.harness.config import (
    REFERENCE_NAMES,
    ConfigError,
    ExperimentConfig,
    dump,
    from_ini,
    load,
    p_nodes,
    reference,
)


@pytest.mark.parametrize("name", REFERENCE_NAMES)
def test_reference_round_trip(name, tmp_path):
    cfg = reference(name)
    back = load(dump(cfg, tmp_path / f"{name}.cfg"))
    assert back == cfg and back.digest() == cfg.digest()


decreasing = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4, unique=True).map(lambda v: sorted(v, reverse=True))


@given(
    seed=st.integers(0, 2**31),
    delta=decreasing,
    eps=decreasing,
    tol_h=st.floats(1e-6, 1.0),
    realizations=st.one_of(st.none(), st.integers(1, 50)),
    name=st.text("abcxyz_-", min_size=1, max_size=8),
)
def test_ini_round_trip(seed, delta, eps, tol_h, realizations, name):
    base = reference("periodic1d").with_seed(seed)
    cfg = replace(
        base,
        ladders=replace(base.ladders, delta=delta, epsilon=eps, realizations=realizations),
        tolerances=replace(base.tolerances, tol_H=tol_h),
        output=replace(base.output, name=name),
    )
    back = from_ini(cfg.to_ini())
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_defaults_fill_missing_keys():
    cfg = from_ini('[ensemble]\nkind = "constant"\nparams = {"level": 0.0}\n')
    assert cfg == ExperimentConfig(ensemble=replace(ExperimentConfig().ensemble, params={"level": 0.0}))
    assert cfg.spec.dimension == 1


@pytest.mark.parametrize(
    "text",
    [
        "[ensemble\nkind = 1",
        "[nonsense]\nx = 1",
        "[ensemble]\ncolour = 1",
        "[ensemble]\nkind = constant",
        '[ensemble]\nkind = "lattice"',
        "[ladders]\ndelta = [0.1, 0.2]",
        "[ladders]\nepsilon = []",
        "[ladders]\ncell_p = [0.5, 0.5]",
        "[ladders]\nrealizations = 0",
        "[ladders]\npairs = [[0.0]]",
        "[ladders]\nhorizon = 0",
        "[tolerances]\ntol_H = -0.1",
        "[grids]\nevolve_nodes_per_eps = 4",
        "[grids]\nmetric_spacing = 0",
        '[ladders]\np_grid = {"kind": "polar", "radii": [1.0], "angles": 4}',
        '[ladders]\np_grid = {"kind": "spiral"}',
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        from_ini(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "absent.cfg")
    with pytest.raises(ConfigError):
        reference("nope")


def test_p_nodes():
    line = p_nodes({"kind": "line", "max": 1.0, "step": 0.5}, 1)
    assert np.allclose(line[:, 0], [-1, -0.5, 0, 0.5, 1])
    assert p_nodes({"kind": "line", "max": 1.0, "step": 0.5}, 2).shape == (25, 2)
    polar = p_nodes({"kind": "polar", "radii": [0.0, 1.0], "angles": 4}, 2)
    assert polar.shape == (5, 2) and np.allclose(np.linalg.norm(polar[1:], axis=1), 1.0)
    assert p_nodes({"kind": "list", "points": [[0, 1], [1, 0]]}, 2).shape == (2, 2)


def test_with_helpers():
    cfg = reference("v0")
    assert cfg.with_seed(5).ensemble.seed == 5
    assert cfg.with_output("/tmp/x").output.directory == "/tmp/x"
    assert cfg.with_seed(5).digest() != cfg.digest()
