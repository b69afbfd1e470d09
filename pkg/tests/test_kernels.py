import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from irselect import kernels as kn
from irselect import quadrature as qd
from irselect.measures import Discrete, MeasureError, PowerLaw, discretize
from irselect.states import Coherent, Superposed, Thermal, Vacuum

from reference import ohmic_zeta, riemann_zeta, single_mode_zeta

OHMIC = PowerLaw(0.05, 0.5, 1.0)
SUB = PowerLaw(0.05, 0.25, 1.0)

# Midpoint sums with 2^20 cells on [1e-8, 1] (reference.riemann_zeta), frozen.
RIEMANN_OHMIC = {0.5: 0.003092628157410037, 3.0: 0.0778099083780936, 10.0: 0.14626285954511006,
                 50.0: 0.22474335283508, 100.0: 0.25937673381116927}
# Same sum for the phase integrand (λt - sin λt)/λ^2.
RIEMANN_OHMIC_PHASE = {0.5: 0.0003446290978465886, 3.0: 0.05756737360002069, 10.0: 0.4170826202890414,
                       50.0: 2.422419146375795, 100.0: 4.921888726655712}
# Subohmic closed form c t^a [K - (X^-a/a - ∫_X^∞ s^(-1-a) cos s ds)], X = Λt, via QUADPACK QAWF.
SUBOHMIC_REF = {(0.25, 1e3): 3.863285995962208, (0.25, 1e6): 125.23141376654779,
                (0.25, 1e9): 3963.2272976059567, (0.4, 1e3): 0.8519673653201479,
                (0.4, 1e6): 4.137175574569614, (0.4, 1e9): 17.215660477410953}


# -- zeta --------------------------------------------------------------------------

def test_zeta_at_zero():
    for s in (OHMIC, SUB, Discrete.from_pairs([(1.0, 0.3)])):
        assert kn.zeta(s, 0.0) == 0.0


def test_zeta_single_mode_example():
    assert kn.zeta(Discrete.from_pairs([(1.0, 0.25)]), math.pi) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("t", sorted(RIEMANN_OHMIC))
def test_zeta_matches_frozen_riemann(t):
    assert kn.zeta(OHMIC, t) == pytest.approx(RIEMANN_OHMIC[t], abs=1e-8)


def test_zeta_matches_live_riemann():
    assert kn.zeta(OHMIC, 7.0) == pytest.approx(riemann_zeta(0.05, 0.5, 7.0), abs=1e-8)


@pytest.mark.parametrize("t", [1e-3, 0.1, 1.0, 10.0, 1e3, 1e5, 1e7, 1e9])
def test_zeta_ohmic_closed_form(t):
    assert kn.zeta(OHMIC, t) == pytest.approx(ohmic_zeta(0.05, 1.0, t), rel=1e-10)


@pytest.mark.parametrize("mu,t", sorted(SUBOHMIC_REF))
def test_zeta_subohmic_reference(mu, t):
    assert kn.zeta(PowerLaw(0.05, mu, 1.0), t) == pytest.approx(SUBOHMIC_REF[(mu, t)], rel=1e-8)


def test_zeta_discretize_refinement():
    eps = 1e-6
    fine = discretize(OHMIC, 4096, eps)
    restricted = OHMIC.restrict(eps)
    for t in (1.0, 10.0, 50.0, 100.0):
        assert abs(kn.zeta(fine, t) - kn.zeta(restricted, t)) < 1e-6


def test_zeta_discretize_converges_with_refinement():
    eps, t = 1e-4, 30.0
    target = kn.zeta(OHMIC.restrict(eps), t)
    errs = [abs(kn.zeta(discretize(OHMIC, n, eps), t) - target) for n in (64, 256, 1024, 4096)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_zeta_floor_measure_integrates_without_ir_law():
    s = PowerLaw(0.05, 0.25, 1.0, floor=1e-3)
    ref = quad(lambda x: 0.05 * x**0.5 * 2 * math.sin(x * 5 / 2) ** 2 / x**2, 1e-3, 1.0, limit=200)[0]
    assert kn.zeta(s, 5.0) == pytest.approx(ref, rel=1e-10)


@given(st.floats(0.01, 1e4), st.floats(0.1, 10.0))
def test_zeta_linear_in_mass(t, s):
    assert kn.zeta(OHMIC.scaled(s), t) == pytest.approx(s * kn.zeta(OHMIC, t), rel=1e-9)


@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(0, 1)), min_size=1, max_size=8, unique_by=lambda x: x[0]),
       st.floats(0, 1e3))
def test_zeta_discrete_nonnegative_and_exact(pairs, t):
    d = Discrete.from_pairs(sorted(pairs))
    z = kn.zeta(d, t)
    assert z >= 0
    assert z == pytest.approx(sum(single_mode_zeta(o, w, t) for o, w in sorted(pairs)), rel=1e-12, abs=1e-15)


def test_zeta_zero_mass_is_zero():
    assert kn.zeta(Discrete.from_pairs([(1.0, 0.0), (2.0, 0.0)]), 3.0) == 0.0


def test_zeta_rejects_negative_time():
    with pytest.raises(ValueError):
        kn.zeta(OHMIC, -1.0)


# -- quadrature routes ---------------------------------------------------------------------

def test_split_route_agrees_with_panel_route(monkeypatch):
    t = 3e4  # about 10^4 half-periods: both routes are affordable
    density = OHMIC.density
    panel = qd.integrate_kernel(density, kn.ZETA_KERNEL, t, 0.0, 1.0, (), (0.05, 1.0))
    monkeypatch.setattr(qd, "SPLIT_PANELS", 1000)
    split = qd.integrate_kernel(density, kn.ZETA_KERNEL, t, 0.0, 1.0, (), (0.05, 1.0))
    assert panel.route == "panel" and split.route == "split"
    assert split.value == pytest.approx(panel.value, rel=1e-10)


def test_quadrature_budget_error():
    with pytest.raises(qd.QuadratureError) as info:
        qd.integrate_kernel(OHMIC.density, kn.ZETA_KERNEL, 100.0, 0.0, 1.0, (), (0.05, 1.0), max_panels=4)
    assert "error estimate" in str(info.value)


# -- thermal exponent ----------------------------------------------------------------------

def test_zeta_kms_single_mode_example():
    z = kn.zeta_kms(Discrete.from_pairs([(1.0, 0.25)]), 2.0, math.pi)
    assert z == pytest.approx(0.5 / math.tanh(1.0), rel=1e-14)
    assert z == pytest.approx(0.656518, abs=1e-6)


def test_zeta_kms_riemann_with_sliver():
    t, beta, lo = 20.0, 2.0, 1e-8
    # [0, lo] contributes c t^2 lo / beta to leading order
    ref = riemann_zeta(0.05, 0.5, t, lo=lo, beta=beta) + 0.05 * t * t * lo / beta
    assert kn.zeta_kms(OHMIC, beta, t) == pytest.approx(ref, abs=1e-8)


def test_zeta_kms_zero_temperature_limit():
    for t in np.geomspace(0.01, 100, 15):
        z = kn.zeta(OHMIC, t)
        assert abs(kn.zeta_kms(OHMIC, 1e6, t) - z) <= 1e-6 * z
    assert kn.zeta_kms(OHMIC, math.inf, 3.0) == kn.zeta(OHMIC, 3.0)


@pytest.mark.parametrize("sigma", [OHMIC, SUB, Discrete.from_pairs([(0.3, 0.1), (1.7, 0.4)])])
def test_zeta_kms_dominates_and_decreases_in_beta(sigma):
    for t in np.geomspace(0.01, 1e3, 12):
        vals = [kn.zeta_kms(sigma, b, t) for b in (0.5, 2.0, 10.0, math.inf)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_zeta_kms_rejects_bad_beta():
    with pytest.raises(ValueError):
        kn.zeta_kms(OHMIC, 0.0, 1.0)


# -- modulus and phase -------------------------------------------------------------------------

def test_chi0_examples():
    assert kn.chi0(0.0, 3.0) == 1.0
    assert kn.chi0(5.0, 0.0) == 1.0
    assert kn.chi0(2.0, 1.0) == pytest.approx(0.018316, abs=1e-6)
    assert kn.chi0(-2.0, 1.0) == kn.chi0(2.0, 1.0)


def test_phase_examples():
    one = Discrete.from_pairs([(1.0, 1.0)])
    assert kn.phase_theta(one, 1.0, math.pi) == pytest.approx(-math.pi, abs=1e-14)
    assert kn.phase_theta(one, 0.7, 0.0, f=[0.3 + 0.1j]) == 0.0
    assert kn.phase_theta(OHMIC, 1.3, 0.0) == 0.0


@pytest.mark.parametrize("t", sorted(RIEMANN_OHMIC_PHASE))
def test_lamb_integral_matches_frozen_riemann(t):
    assert kn.lamb_integral(OHMIC, t) == pytest.approx(RIEMANN_OHMIC_PHASE[t], abs=1e-8)


@given(st.floats(0.1, 10), st.floats(0, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 100))
def test_phase_difference_single_mode(omega, w, a, b, t):
    d = Discrete.from_pairs([(omega, w)])
    eta = (a * a - b * b) * w * (omega * t - math.sin(omega * t)) / omega**2
    diff = kn.phase_theta(d, a, t) - kn.phase_theta(d, b, t)
    assert diff == pytest.approx(-eta, rel=1e-9, abs=1e-11)


def test_phase_with_displacement_closed_form():
    d = Discrete.from_pairs([(1.0, 0.25), (2.0, 0.5)])
    f = np.array([0.2 + 0.1j, -0.3j])
    t, a = 1.7, 0.8
    h = np.sqrt([0.25, 0.5])
    om = np.array([1.0, 2.0])
    v = (1 - np.exp(1j * om * t)) * h / om
    lin = np.vdot(2 * f, v).imag
    quad_term = np.sum([0.25, 0.5] * (om * t - np.sin(om * t)) / om**2)
    assert kn.phase_theta(d, a, t, f) == pytest.approx(-a * lin - a * a * quad_term, rel=1e-13)


def test_phase_displacement_errors():
    with pytest.raises(MeasureError):
        kn.phase_theta(OHMIC, 1.0, 1.0, f=[0.1])
    with pytest.raises(Exception):
        kn.phase_theta(Discrete.from_pairs([(1.0, 0.2)]), 1.0, 1.0, f=[0.1, 0.2])


def test_phase_profile_starts_at_zero():
    p = kn.phase_profile(Discrete.from_pairs([(1.0, 0.2)]), 0.5, np.linspace(0, 5, 11))
    assert p.theta[0] == 0.0


# -- superpositions ---------------------------------------------------------------------------

TWO = Discrete.from_pairs([(1.0, 0.1), (2.3, 0.2)])


def test_chi_superposed_equal_sectors_is_one():
    for t in (0.0, 1.0, 7.5):
        assert kn.chi_superposed(TWO, [(1.0, np.zeros(2))], 0.4, 0.4, t) == pytest.approx(1.0, abs=1e-15)


def test_chi_superposed_vacuum_modulus():
    for t in (0.3, 2.0, 9.0):
        val = kn.chi_superposed(TWO, [(1.0, np.zeros(2))], 1.0, -0.5, t)
        assert abs(val) == pytest.approx(math.exp(-2.25 * kn.zeta(TWO, t)), rel=1e-13)


def test_chi_superposed_single_coherent_matches_chi_analytic():
    f = np.array([0.3, 0.2j])
    for t in (0.5, 4.0):
        a = kn.chi_superposed(TWO, [(2.0, f)], 1.0, -1.0, t)
        b = kn.chi_analytic(TWO, Coherent(f), 1.0, -1.0, t)
        assert a == pytest.approx(b, abs=1e-13)


def test_chi_superposed_reports_norm():
    comps = Superposed([1.0, 1.0j], [[0.1, 0.0], [0.0, 0.2]])
    _, norm = kn.chi_superposed(TWO, comps, 1.0, 0.0, 1.0, return_norm=True)
    assert norm == pytest.approx(comps.norm2())


def test_chi_superposed_errors():
    with pytest.raises(Exception):
        kn.chi_superposed(TWO, [], 1.0, 0.0, 1.0)
    with pytest.raises(Exception):
        kn.chi_superposed(TWO, [(1.0, np.zeros(3))], 1.0, 0.0, 1.0)
    with pytest.raises(MeasureError):
        kn.chi_superposed(OHMIC, [(1.0, np.zeros(2))], 1.0, 0.0, 1.0)


@given(st.lists(st.tuples(st.complex_numbers(max_magnitude=2, allow_nan=False),
                          st.complex_numbers(max_magnitude=0.6, allow_nan=False),
                          st.complex_numbers(max_magnitude=0.6, allow_nan=False)), min_size=1, max_size=4),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 20))
def test_chi_superposed_bounded(comps, a, b, t):
    coeffs = [c for c, _, _ in comps]
    if sum(abs(c) for c in coeffs) < 1e-3:
        coeffs[0] = 1.0
    sup = Superposed(coeffs, [[x, y] for _, x, y in comps])
    try:
        sup.norm2()
    except Exception:
        return
    if sup.norm2() < 1e-6:
        return
    assert abs(kn.chi_superposed(TWO, sup, a, b, t)) <= 1 + 1e-9
    assert kn.chi_superposed(TWO, sup, a, b, 0.0) == pytest.approx(1.0, abs=1e-9)


# -- profiles, fits, recurrences ----------------------------------------------------------------

def test_profile_csv_format():
    p = kn.decoherence_profile(Discrete.from_pairs([(1.0, 0.25)]), [0.0, math.pi], measure_ref="single")
    lines = p.to_csv().splitlines()
    assert lines[0] == "t,zeta,beta"
    assert lines[2] == "3.1415926535897931e+00,5.0000000000000000e-01,inf"


def test_profile_invariants():
    with pytest.raises(ValueError):
        kn.DecoherenceProfile([0.0, 1.0], [0.1, 0.2])
    with pytest.raises(ValueError):
        kn.DecoherenceProfile([1.0, 0.5], [0.1, 0.2])
    with pytest.raises(ValueError):
        kn.DecoherenceProfile([0.0, 1.0], [0.0, -0.2])


def test_ohmic_log_fit():
    prof = kn.decoherence_profile(OHMIC, np.geomspace(1e2, 1e4, 81))
    rec = kn.asymptotic_fit(prof, "log")
    assert rec.coefficient == pytest.approx(0.05, rel=0.05)
    assert rec.r2 >= 0.999 and rec.monotone_tail


def test_subohmic_power_fit_and_prefactor():
    prof = kn.decoherence_profile(SUB, np.geomspace(1.0, 1e10, 201))
    rec = kn.asymptotic_fit(prof, "power")
    assert rec.window == (pytest.approx(1e8), pytest.approx(1e10))
    assert rec.exponent == pytest.approx(0.5, rel=0.03)
    # ζ ~ c t^(1-2μ) ∫_0^∞ s^(2μ-2)(1 - cos s) ds; integral by direct quadrature
    head = quad(lambda s: s**-1.5 * (1 - math.cos(s)), 0, 1)[0]
    tail = quad(lambda s: s**-1.5, 1, np.inf)[0] - quad(lambda s: s**-1.5, 1, np.inf, weight="cos", wvar=1)[0]
    assert rec.coefficient == pytest.approx(0.05 * (head + tail), rel=0.01)


def test_fit_errors():
    prof = kn.decoherence_profile(OHMIC, np.geomspace(10, 100, 5))
    with pytest.raises(kn.ProfileError):
        kn.asymptotic_fit(prof, "log")
    with pytest.raises(ValueError):
        kn.asymptotic_fit(prof, "cubic")


def test_fit_flags_nonmonotone_tail():
    d = Discrete.from_pairs([(1.0, 0.2)])
    prof = kn.decoherence_profile(d, np.geomspace(1.0, 100.0, 50))
    assert not kn.asymptotic_fit(prof, "log").monotone_tail


def test_recurrence_commensurate_two_modes():
    d = Discrete.from_pairs([(1.0, 0.3), (2.0, 0.2)])
    prof = kn.decoherence_profile(d, np.linspace(0, 20, 2001))
    revs = kn.recurrence_scan(prof, 1e-3, evaluate=lambda t: kn.zeta(d, t))
    assert [r.time for r in revs] == pytest.approx([2 * math.pi, 4 * math.pi, 6 * math.pi], abs=1e-6)
    assert all(r.zeta <= 1e-12 for r in revs)
    assert kn.zeta(d, 2 * math.pi) <= 1e-12


def test_recurrence_single_mode_parabolic():
    d = Discrete.from_pairs([(1.5, 0.4)])
    prof = kn.decoherence_profile(d, np.linspace(0, 13, 1301))
    revs = kn.recurrence_scan(prof, 1e-3)
    expected = [2 * math.pi * k / 1.5 for k in (1, 2, 3)]
    assert [r.time for r in revs] == pytest.approx(expected, abs=1e-5)


def test_recurrence_ohmic_none():
    z10 = kn.zeta(OHMIC, 10.0)
    prof = kn.decoherence_profile(OHMIC, np.geomspace(10.0, 1e4, 400)[1:])
    assert kn.recurrence_scan(prof, 0.1 * z10) == []


def test_commensurate_periodicity():
    d = Discrete.from_pairs([(0.5, 0.3), (1.5, 0.1), (2.0, 0.6)])
    period = 2 * math.pi / 0.5
    for t in (0.3, 1.1, 2.9):
        assert kn.zeta(d, t + period) == pytest.approx(kn.zeta(d, t), abs=1e-12)


# -- point-measure bound ------------------------------------------------------------------------

def test_point_bound_single_mode_cases():
    d = Discrete.from_pairs([(2.0, 0.3)])
    t = 1.0  # below π/ω
    assert kn.point_measure_lower_bound(d, t) == pytest.approx(2 / math.pi**2 * 0.3)
    assert kn.point_measure_lower_bound(d, 2.0) == 0.0


def test_point_bound_tight_at_half_period():
    # sin(x) >= 2x/π is tight at x = π/2, so the bound meets ζ at t = π/ω
    d = Discrete.from_pairs([(1.0, 1.0)])
    assert kn.point_measure_lower_bound(d, math.pi) == pytest.approx(kn.zeta(d, math.pi), rel=1e-14)


def test_point_bound_below_zeta_random():
    rng = np.random.default_rng(2024)
    times = np.geomspace(1e-2, 1e2, 25)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        om = np.sort(rng.uniform(0.05, 10.0, n))
        d = Discrete(om, rng.uniform(0, 1, n))
        for t in times:
            assert kn.point_measure_lower_bound(d, t) <= kn.zeta(d, t) * (1 + 1e-12) + 1e-300


# -- commuting model ------------------------------------------------------------------------------

def test_az_point_mass():
    m = kn.AZMeasure.atoms([0.0], [1.0])
    for t in (0.0, 1.0, -7.0):
        assert kn.az_chi(m, t) == 1.0


def test_az_uniform():
    m = kn.AZMeasure.density([0.0, 1.0], [1.0, 1.0])
    for t in (0.5, 3.0, -2.0):
        assert kn.az_chi(m, t) == pytest.approx((np.exp(1j * t) - 1) / (1j * t), abs=1e-14)


def test_az_gaussian_table():
    x = np.linspace(-8, 8, 4001)
    p = np.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    p = p / np.trapezoid(p, x)
    m = kn.AZMeasure.density(x, p)
    for t in np.linspace(-3, 3, 13):
        assert abs(kn.az_chi(m, t) - math.exp(-t * t / 2)) < 1e-6


def test_az_requires_normalization():
    with pytest.raises(MeasureError):
        kn.az_chi(kn.AZMeasure.atoms([0.0, 1.0], [0.5, 0.6]), 1.0)
