import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irselect.measures import (Discrete, MeasureError, PowerLaw, Tabulated, classify,
                               coupling_admissible, discretize, moment, segment_moment)


def test_moment_examples():
    ohm = PowerLaw(1.0, 0.5, 1.0)
    assert moment(ohm, -1) == pytest.approx(1.0, abs=1e-15)
    assert moment(ohm, -2) == math.inf
    assert moment(Discrete.from_pairs([(2.0, 3.0)]), -2) == pytest.approx(0.75, abs=1e-15)


def test_moment_rejects_bad_power():
    with pytest.raises(MeasureError):
        moment(PowerLaw(1.0, 0.5, 1.0), 2)


def test_powerlaw_closed_form():
    s = PowerLaw(0.3, 0.8, 2.0)
    for p in (-2, -1, 0, 1):
        e = 2 * 0.8 + p + 1
        assert moment(s, p) == pytest.approx(0.3 * 2.0**e / e, rel=1e-14)


def test_powerlaw_log_segment():
    # 2mu + p + 1 = 0 with a positive floor is a logarithm
    s = PowerLaw(2.0, 0.5, 1.0, floor=1e-3)
    assert moment(s, -2) == pytest.approx(2.0 * math.log(1e3), rel=1e-14)


def test_classify_examples():
    assert classify(PowerLaw(0.05, 0.5, 1.0)).cls == "Divergent"
    reg = classify(PowerLaw(1.0, 1.0, 1.0))
    assert reg.cls == "Regular" and reg.m_minus_2 == pytest.approx(1.0)
    d = classify(Discrete.from_pairs([(1, 0.1), (2, 0.2)]))
    assert d.cls == "Regular" and d.regime == "pure-point"


@given(st.floats(0.01, 2.0))
def test_classify_powerlaw_threshold(mu):
    verdict = classify(PowerLaw(1.0, mu, 1.0)).cls
    assert (verdict == "Divergent") == (mu <= 0.5)


def test_coupling_admissible_examples():
    assert coupling_admissible(PowerLaw(0.25, 0.5, 1.0)) == (True, pytest.approx(1.0))
    ok, val = coupling_admissible(PowerLaw(0.3, 0.5, 1.0))
    assert not ok and val == pytest.approx(1.2)
    ok, val = coupling_admissible(Discrete.from_pairs([(1.0, 0.2)]))
    assert ok and val == pytest.approx(0.8)


def test_constructors_validate():
    with pytest.raises(MeasureError):
        PowerLaw(1.0, 0.0, 1.0)
    with pytest.raises(MeasureError):
        PowerLaw(1.0, 0.5, math.inf)
    with pytest.raises(MeasureError):
        Discrete.from_pairs([(2.0, 1.0), (1.0, 1.0)])
    with pytest.raises(MeasureError):
        Discrete.from_pairs([(1.0, -0.1)])
    with pytest.raises(MeasureError):
        Tabulated([0.1, 0.05], [1.0, 1.0])


def _table(mu, lo=1e-3, hi=1.0, n=200):
    lam = np.geomspace(lo, hi, n)
    return Tabulated(lam, lam ** (2 * mu))


def test_tabulated_classification():
    div = classify(_table(0.5))
    assert div.cls == "Divergent" and div.m_minus_2 == math.inf
    assert div.exponent == pytest.approx(1.0, abs=1e-9)
    assert classify(_table(1.0)).cls == "Regular"
    assert classify(_table(0.505)).cls == "Divergent"  # inside the tolerance band


def test_tabulated_too_few_points():
    lam = np.array([1e-3, 2e-3, 0.5, 1.0])
    with pytest.raises(MeasureError):
        classify(Tabulated(lam, lam))


def test_tabulated_moments_exact_for_linear_density():
    tab = Tabulated([0.5, 1.0, 2.0], [1.0, 2.0, 0.0])
    # piecewise-linear moments integrate exactly
    from scipy.integrate import quad
    for p in (-2, -1, 0, 1):
        ref = quad(lambda x: np.interp(x, tab.lam, tab.dens) * x**p, 0.5, 2.0, points=[1.0])[0]
        assert moment(tab, p) == pytest.approx(ref, rel=1e-12)


def test_tabulated_from_file(tmp_path):
    f = tmp_path / "dens.txt"
    f.write_text("# lambda density\n0.1 0.0\n0.5 1.0\n1.0 0.5\n")
    tab = Tabulated.from_file(f)
    assert tab.support == (0.1, 1.0)
    assert moment(tab, 0) == pytest.approx(0.5 * 0.4 * 1.0 + 0.5 * 0.5 * 1.5)


def test_discretize_single_cell():
    s = PowerLaw(0.05, 0.5, 1.0)
    d = discretize(s, 1, 1e-3)
    assert d.n_modes == 1
    assert d.weights[0] == pytest.approx(0.05 * (1.0 - 1e-6) / 2, rel=1e-14)


@given(st.integers(1, 300), st.floats(1e-6, 0.5), st.floats(0.05, 1.5))
def test_discretize_preserves_mass(n, eps, mu):
    s = PowerLaw(0.7, mu, 1.0)
    d = discretize(s, n, eps)
    assert np.all(d.weights >= 0)
    assert d.weights.sum() == pytest.approx(segment_moment(s, 0, eps, 1.0), rel=1e-10, abs=1e-14)
    assert d.weights.sum() == pytest.approx(moment(s.restrict(eps), 0), rel=1e-10, abs=1e-14)


def test_discretize_rejects_bad_floor():
    with pytest.raises(MeasureError):
        discretize(PowerLaw(1.0, 0.5, 1.0), 4, 1.0)


def test_discretize_tabulated_mass():
    tab = _table(0.7)
    d = discretize(tab, 64, 1e-2)
    assert d.weights.sum() == pytest.approx(segment_moment(tab, 0, 1e-2, 1.0), rel=1e-10)


@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0, 1)), min_size=1, max_size=6, unique_by=lambda x: x[0]),
       st.lists(st.tuples(st.floats(10.5, 20), st.floats(0, 1)), min_size=1, max_size=6, unique_by=lambda x: x[0]),
       st.sampled_from([-2, -1, 0, 1]))
def test_moment_additive_on_disjoint_union(a, b, p):
    da, db = Discrete.from_pairs(sorted(a)), Discrete.from_pairs(sorted(b))
    assert moment(da.union(db), p) == pytest.approx(moment(da, p) + moment(db, p), rel=1e-12)


def test_measures_are_immutable():
    d = Discrete.from_pairs([(1.0, 0.5)])
    with pytest.raises(ValueError):
        d.weights[0] = 2.0
