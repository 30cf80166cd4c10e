import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import logsumexp

from mfhs.errors import BracketError
from mfhs.measures import FAMILIES, FibonacciMoran, FourLetter, NonRegularMoran, SwitchedBernoulli, YuanSwitching
from mfhs.measures import level_log_measures
from mfhs.spectra import (
    SpectrumCurve,
    analytic_curves,
    b_B_switched,
    b_B_fourletter,
    beta_bounds_nonregular,
    beta_fibonacci,
    beta_k,
    beta_k_bisection,
    beta_k_fibonacci,
    default_q_grid,
    entropy_H,
    switched_case,
    log_partition_factored,
    log_power_sum,
    mixed_entropy_h,
    read_curves_csv,
    tau_derivative,
    tau_switched,
    switched_kink_intervals,
    switched_window,
    write_curves_csv,
    yuan_betas,
)

FIB = FibonacciMoran()
Q_SET = (-2.0, -1.0, 0.0, 0.5, 1.0, 2.0)
ALL = [cls() for cls in FAMILIES.values()]
finite_q = st.floats(-20, 20, allow_nan=False)


def test_log_power_sum_is_stable_for_large_q():
    assert log_power_sum(2000.0, (0.3, 0.7)) == pytest.approx(2000 * math.log(0.7))
    assert log_power_sum(-2000.0, (0.3, 0.7)) == pytest.approx(-2000 * math.log(0.3))


@pytest.mark.parametrize("k", [1, 2, 5, 12, 100])
def test_beta_k_vanishes_at_one(k):
    assert beta_k_fibonacci(1.0, k, FIB) == 0.0


def test_beta_k_at_zero_depth_one():
    assert beta_k_fibonacci(0.0, 1, FIB) == pytest.approx(-math.log(2) / math.log(FIB.r_a))


@pytest.mark.parametrize("q", Q_SET)
@pytest.mark.parametrize("k", [3, 7, 12])
def test_beta_k_against_brute_force(q, k):
    # independent oracle: enumerate D_k and solve sum mu^q |J|^beta = 1
    log_s = logsumexp(q * level_log_measures(FIB, k))
    expected = -log_s / FIB.log_diameter(k)
    assert beta_k_fibonacci(q, k, FIB) == pytest.approx(expected, abs=1e-12)
    assert beta_k_bisection(FIB, q, k, oracle=True) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("q", [-2.0, 0.0, 0.5, 2.0])
def test_beta_k_converges_to_beta(q):
    assert abs(beta_k_fibonacci(q, 10_000, FIB) - beta_fibonacci(q, FIB)) <= 1e-3


def test_beta_at_one_is_zero():
    assert beta_fibonacci(1.0, FIB) == 0.0


def test_bisection_bracket_error():
    with pytest.raises(BracketError):
        beta_k_bisection(SwitchedBernoulli(), 1e6, 3)


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
@given(q=st.floats(-8, 8), k=st.integers(1, 10))
def test_factored_partition_matches_enumeration(spec, q, k):
    brute = float(logsumexp(q * level_log_measures(spec, k)))
    assert log_partition_factored(spec, k, q) == pytest.approx(brute, abs=1e-10)
    assert beta_k(spec, q, k) == pytest.approx(-brute / spec.log_diameter(k), abs=1e-10)


def test_nonregular_bounds_zero_at_one_and_gap():
    m = NonRegularMoran()
    lo, up = beta_bounds_nonregular(1.0, m)
    assert lo == 0.0 and up == 0.0
    q = np.array([-3, -1, 0, 0.5, 2, 4.0])
    lo, up = beta_bounds_nonregular(q, m)
    assert np.all(up > lo)


def test_nonregular_beta_k_at_flip_between_bounds():
    m = NonRegularMoran()
    lo, up = beta_bounds_nonregular(2.0, m)
    assert lo <= beta_k(m, 2.0, 11) <= up


def test_tau_arithmetic():
    assert tau_switched(2.0, "lower", SwitchedBernoulli()) == pytest.approx(math.log2(0.68))
    assert math.log2(0.68) == pytest.approx(-0.5564, abs=1e-4)


def test_switched_case_table():
    m = SwitchedBernoulli(p=0.2, p_hat=0.4)
    for q in (0.0, 1.0):
        b, B = b_B_switched(q, m)
        assert b == pytest.approx(B, abs=1e-15)
    b, B = b_B_switched(0.5, m)
    assert b == tau_switched(0.5, "lower", m) and B == tau_switched(0.5, "upper", m)
    b, B = b_B_switched(2.0, m)
    assert b == tau_switched(2.0, "upper", m) and B == tau_switched(2.0, "lower", m)
    assert switched_case(0.5).startswith("b = tau_lower")
    assert switched_case(-1.0).startswith("b = tau_upper")


@given(q=finite_q)
def test_tau_derivative_matches_finite_difference(q):
    h = 1e-6
    for p in (0.2, 0.4):
        fd = (log_power_sum(q + h, (p, 1 - p)) - log_power_sum(q - h, (p, 1 - p))) / (2 * h * math.log(2))
        assert tau_derivative(q, p) == pytest.approx(fd, abs=1e-6)


def test_fourletter_values():
    b, B = b_B_fourletter(2.0, FourLetter())
    assert b == pytest.approx(-1.0, abs=1e-14)
    assert B == pytest.approx(math.log(0.30) / math.log(4), abs=1e-14)
    assert B == pytest.approx(-0.8684, abs=1e-4)


def test_fourletter_uniform_is_line():
    u = (0.25,) * 4
    q = default_q_grid()
    b, B = b_B_fourletter(q, FourLetter(a=u, b=u))
    np.testing.assert_allclose(b, 1 - q, atol=1e-12)
    np.testing.assert_allclose(B, 1 - q, atol=1e-12)


def test_yuan_ordering_flips_at_one():
    y = YuanSwitching(A=5.0, B=3.0, p=0.3, p_tilde=0.3)
    b1, b2 = yuan_betas(np.array([-2.0, 0.0, 0.5]), y)
    assert np.all(b1 < b2)
    b1, b2 = yuan_betas(np.array([2.0, 4.0]), y)
    assert np.all(b1 > b2)


def test_entropy_values():
    assert entropy_H(0.2) == pytest.approx(0.7219, abs=1e-4)
    assert entropy_H(0.5) == 1.0
    with pytest.raises(ValueError):
        entropy_H(0.0)


def test_mixed_entropy_half():
    # h(1/2, p) = -1/2 log2(p (1 - p)); for p = 0.2 this is log2(2.5) ~ 1.3219
    assert mixed_entropy_h(0.5, 0.2) == pytest.approx(-0.5 * math.log2(0.2 * 0.8), abs=1e-14)
    assert mixed_entropy_h(0.5, 0.2) == pytest.approx(1.3219, abs=1e-4)
    assert mixed_entropy_h(0.2, 0.2) == pytest.approx(entropy_H(0.2))


def test_window_and_exclusions():
    m = SwitchedBernoulli()
    lo, hi = switched_window(m)
    assert lo == pytest.approx(-math.log2(0.6)) and hi == pytest.approx(-math.log2(0.4))
    ex = switched_kink_intervals(m)
    assert ex[0] == pytest.approx((mixed_entropy_h(0.5, 0.4), mixed_entropy_h(0.5, 0.2)))
    assert ex[1] == pytest.approx((entropy_H(0.2), entropy_H(0.4)))


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
def test_all_curves_vanish_at_one(spec):
    for label, fn in analytic_curves(spec).items():
        assert abs(float(fn(1.0))) <= 1e-12, label


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
@given(q=finite_q)
def test_ordering_property(spec, q):
    c = analytic_curves(spec)
    b, B, D = float(c["b"](q)), float(c["B"](q)), float(c["Delta"](q))
    assert b <= B + 1e-12 and B <= D + 1e-12


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
@given(q1=finite_q, q2=finite_q)
def test_curves_decrease(spec, q1, q2):
    lo, hi = sorted((q1, q2))
    for label, fn in analytic_curves(spec).items():
        assert float(fn(hi)) <= float(fn(lo)) + 1e-12, label


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
@given(q=finite_q)
def test_sign_pattern(spec, q):
    for label, fn in analytic_curves(spec).items():
        v = float(fn(q))
        if q < 1:
            assert v >= -1e-12, label
        else:
            assert v <= 1e-12, label


def test_curve_csv_round_trip(tmp_path):
    q = default_q_grid(-1, 1, 0.25)
    curves = [SpectrumCurve.from_function(k, fn, q) for k, fn in analytic_curves(FIB).items()]
    path = tmp_path / "c.csv"
    write_curves_csv(path, curves, footer="# meta")
    back = read_curves_csv(path)
    for c in curves:
        np.testing.assert_array_equal(back[c.label].values, c.values)
    assert path.read_text().splitlines()[-1] == "# meta"


def test_spectrum_curve_rejects_bad_grid():
    with pytest.raises(ValueError):
        SpectrumCurve(np.array([0.0, 0.0]), np.array([1.0, 1.0]), "x")
