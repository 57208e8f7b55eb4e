"""The reference routines reproduce values frozen from an mpmath cross-check."""

import math

import numpy as np
import pytest

from oracles import adaptive_simpson, cell_average, hbar_1d, hopf_abs, hopf_cone, metric_1d

# mpmath quad at 30 digits, cell averages of sqrt(1 + sigma sqrt(mu + 0.2 (1 - cos 2 pi x)))
CELL = {
    (0.0, -1.0): 0.76290224348979824,
    (0.0, 1.0): 1.1813414600952176,
    (0.25, -1.0): 0.57367177117555294,
    (0.25, 1.0): 1.288550758940272,
    (0.6, -1.0): 0.29588120757607883,
}

# roots of the cell averages (mpmath findroot)
HBAR = {0.0: 0.6, 0.3: 0.59749009018214458, 0.5: 0.35791479385445087, 0.8: 0.0, 1.0: 0.0,
        1.2: 0.025979693490525894, 1.5: 1.3665924004679053, 2.0: 8.8007639066315458}


def test_simpson_polynomial_exact():
    assert adaptive_simpson(lambda x: x**3 - 2 * x, 0.0, 2.0) == pytest.approx(0.0, abs=1e-14)
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("pair", sorted(CELL))
def test_cell_average_frozen(pair):
    assert cell_average(*pair) == pytest.approx(CELL[pair], abs=1e-13)


def test_cell_average_inadmissible():
    assert cell_average(1.0, -1.0) == -math.inf


@pytest.mark.parametrize("p", sorted(HBAR))
def test_hbar_oracle_frozen(p):
    assert hbar_1d(p) == pytest.approx(HBAR[p], abs=1e-12)
    assert hbar_1d(-p) == pytest.approx(HBAR[p], abs=1e-12)


def test_metric_whole_periods_is_cell_average():
    assert metric_1d(10.0, 0.0, 1.0, shift=0.37) / 10 == pytest.approx(CELL[(0.0, 1.0)], abs=1e-12)


def test_hopf_closed_forms():
    # at x = 0 the best slope is the one closest to the well: -t (slope^2 - 1)^2
    assert hopf_abs(np.array([0.0]), 0.5, slope=0.5)[0] == pytest.approx(-0.5 * 0.5625, abs=1e-12)
    # t = 0 recovers the data
    x = np.linspace(-1, 1, 5)
    assert np.allclose(hopf_abs(x, 0.0, slope=0.5), 0.5 * np.abs(x))


@pytest.mark.parametrize("t", [0.0, 0.1, 0.5])
def test_hopf_cone_matches_brute_force(t):
    x = np.linspace(-1.5, 1.5, 31)
    assert np.allclose(hopf_cone(x, t, 1.2), hopf_abs(x, t, 1.2), atol=1e-10)
