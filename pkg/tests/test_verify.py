import math

import numpy as np
import pytest

from mfhs.estimators import level_set_spectrum
from mfhs.measures import FibonacciMoran, FourLetter, NonRegularMoran, SwitchedBernoulli, YuanSwitching
from mfhs.spectra import SpectrumCurve, analytic_curves, default_q_grid, entropy_H, switched_window
from mfhs.verify import (
    CheckResult,
    HarnessSettings,
    VerificationReport,
    check_formalism,
    check_ordering,
    check_sampled_exponents,
    check_shape,
    check_upper_bound,
    limit_fractions,
    reference_families,
    run_checks,
    typical_exponent,
)

Q = default_q_grid()


def test_check_result_semantics():
    ok = CheckResult("x", "a", -0.5e-12, 1e-12, "")
    bad = CheckResult("y", "a", -1.0, 0.0, "")
    info = CheckResult("z", "a", -1.0, 0.0, "", informative=True)
    skip = CheckResult("w", "a", 0.0, 0.0, "", skipped="why")
    assert ok.passed and not ok.hard_failure
    assert bad.hard_failure and not info.hard_failure and not skip.hard_failure
    rep = VerificationReport("s", 0, "g", [ok, bad, info, skip])
    assert not rep.ok
    assert rep.summary == {"total": 4, "passed": 1, "failed": 1, "informative": 1, "skipped": 1}
    assert "FAIL y" in rep.to_text() and "SKIP w" in rep.to_text()
    assert rep.to_csv().splitlines()[0].startswith("spec,claim_id")


@pytest.mark.parametrize("spec", [FibonacciMoran(), NonRegularMoran(), SwitchedBernoulli(), FourLetter(),
                                  YuanSwitching()], ids=lambda s: s.family)
def test_ordering_and_shape_pass(spec):
    checks = check_ordering(spec, Q) + check_shape(spec, Q)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_ordering_margin_zero_at_one():
    for spec in reference_families():
        c = {k: SpectrumCurve(np.array([1.0]), np.array([float(fn(1.0))]), k, fn)
             for k, fn in analytic_curves(spec).items()}
        res = check_ordering(spec, curves=c)
        assert all(r.margin == 0.0 and r.passed for r in res)


def test_switched_strict_gap_off_zero_and_one():
    c = analytic_curves(SwitchedBernoulli())
    q = Q[(np.abs(Q) > 1e-9) & (np.abs(Q - 1) > 1e-9)]
    assert np.all(c["B"](q) - c["b"](q) > 0)


def test_b_convexity_not_asserted():
    labels = {c.claim_id for c in check_shape(SwitchedBernoulli(), Q)}
    assert "shape.convex.b" not in labels
    assert "shape.convex.B" in labels and "shape.convex.Delta" in labels


def test_shape_detects_broken_curve():
    c = {k: SpectrumCurve.from_function(k, fn, Q) for k, fn in analytic_curves(SwitchedBernoulli()).items()}
    vals = c["B"].values.copy()
    vals[40] += 1.0
    c["B"] = SpectrumCurve(Q, vals, "B", c["B"].evaluator)
    res = {r.claim_id: r for r in check_shape(SwitchedBernoulli(), Q, c)}
    assert res["shape.decreasing.B"].hard_failure and res["shape.convex.B"].hard_failure


def test_upper_bound_at_window_midpoint():
    spec = SwitchedBernoulli()
    lo, hi = switched_window(spec)
    res = check_upper_bound(spec, [0.5 * (lo + hi)], Q)
    assert len(res) == 1 and res[0].passed


def test_upper_bound_skips_outside_window():
    res = check_upper_bound(SwitchedBernoulli(), [5.0], Q)
    assert res[0].skipped


def test_fibonacci_formalism_at_two():
    res = check_formalism(FibonacciMoran(), [2.0], Q)
    assert len(res) == 2 and all(r.passed and not r.informative for r in res)


def test_switched_upper_estimate_at_q1_tangency():
    spec = SwitchedBernoulli()
    a = entropy_H(spec.p_hat)
    est = level_set_spectrum(spec, a, max_depth=5039)
    assert abs(est.upper - a) < 0.1


def test_nonregular_formalism_skips_kink():
    res = check_formalism(NonRegularMoran(), [1.0], Q)
    assert all(r.skipped for r in res)


def test_sampled_exponents_pass():
    res = check_sampled_exponents(FibonacciMoran(), 20000, 200, seed=1)
    assert all(r.passed for r in res)


def test_limit_fractions_and_typical_exponent():
    assert limit_fractions(NonRegularMoran()) == pytest.approx((1 / 3, 2 / 3))
    assert limit_fractions(SwitchedBernoulli()) == (0.0, 1.0)
    # only regime p_hat: typical exponent is the entropy of p_hat
    assert typical_exponent(SwitchedBernoulli(), 0.0) == pytest.approx(entropy_H(0.4))


def test_skip_levelset_omits_checks():
    rep = run_checks(SwitchedBernoulli(), 0, Q, settings=HarnessSettings(skip=frozenset({"levelset"})))
    ids = [c.claim_id for c in rep.checks]
    assert not any(i.startswith(("upper_bound", "formalism")) for i in ids)
    assert any(i.startswith("ordering") for i in ids)


@pytest.mark.parametrize("spec", reference_families(), ids=lambda s: s.family)
def test_default_harness_passes(spec):
    rep = run_checks(spec, 0, Q)
    assert rep.ok, rep.to_text()
    assert rep.to_text() == run_checks(spec, 0, Q).to_text()
