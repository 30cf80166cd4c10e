import bisect
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import logsumexp

from mfhs.errors import CapExceededError, InsufficientDepthsError
from mfhs.estimators import (
    GEOMETRY_BUDGET,
    LogHistogram,
    ScaleSeries,
    bin_width,
    box_dimensions,
    brute_force_log_partition,
    coarse_level_set,
    composition_histogram,
    covering_count,
    default_depths,
    level_histogram,
    level_set_spectrum,
    max_geometry_depth,
    moment_scaling,
    packing_centres,
    packing_count,
    partition_sum,
    regime_count_table,
    resolvable,
)
from mfhs.measures import FAMILIES, FibonacciMoran, FourLetter, NonRegularMoran, SwitchedBernoulli, level_log_measures
from mfhs.spectra import analytic_curves, beta_bounds_nonregular
from mfhs.symbolic import MoranSpec, level_intervals

ALL = [cls() for cls in FAMILIES.values()]
UNIFORM4 = (0.25,) * 4


# ------------------------------------------------------------ partition sums


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
@pytest.mark.parametrize("n", [1, 4, 9])
def test_partition_factored_vs_oracle(spec, n):
    for q in (-2.0, 0.5, 1.0, 2.0):
        fac = partition_sum(spec, n, q)
        assert fac == pytest.approx(partition_sum(spec, n, q, oracle=True), abs=1e-10)
        assert fac == pytest.approx(float(logsumexp(q * level_log_measures(spec, n))), abs=1e-10)


def test_chunked_brute_force_matches_direct():
    spec = NonRegularMoran()
    qs = [-1.0, 0.0, 2.0]
    direct = [float(logsumexp(q * level_log_measures(spec, 10))) for q in qs]
    np.testing.assert_allclose(brute_force_log_partition(spec, 10, qs, chunk=100), direct, atol=1e-10)


def test_partition_sum_at_one_is_zero():
    for spec in ALL:
        assert partition_sum(spec, 500, 1.0) == 0.0


def test_regime_count_table():
    spec = SwitchedBernoulli()
    cum = regime_count_table(spec, 30)
    assert cum[0] == 0
    assert all(cum[n] == spec.regime_counts(n)[0] for n in range(31))


# ------------------------------------------------------------ moment scaling


def test_moment_scaling_zero_at_one():
    est = moment_scaling(SwitchedBernoulli(), 1.0, range(1, 721))
    assert np.all(est.series.log_quantity == 0.0)
    assert est.liminf_est == 0.0 and est.limsup_est == 0.0


def test_moment_scaling_brackets_nonregular():
    m = NonRegularMoran()
    lo, up = beta_bounds_nonregular(0.5, m)
    est = moment_scaling(m, 0.5, range(1, 24576), warmup=64)
    assert est.liminf_est <= est.limsup_est
    assert abs(est.liminf_est - lo) < 0.05 and abs(est.limsup_est - up) < 0.05


def test_moment_scaling_needs_depths():
    with pytest.raises(InsufficientDepthsError):
        moment_scaling(SwitchedBernoulli(), 0.5, range(1, 30))
    with pytest.raises(ValueError):
        moment_scaling(SwitchedBernoulli(), 0.5, [3, 2])


def test_scale_series_validation(tmp_path):
    with pytest.raises(ValueError):
        ScaleSeries([1, 2], [-1.0, -0.5], [0.0, 0.0], "x")
    s = ScaleSeries([1, 2], [-1.0, -2.0], [0.5, 1.0], "x")
    assert s.ratio_at(2) == 0.5
    s.write_csv(tmp_path / "s.csv", footer="# f")
    assert (tmp_path / "s.csv").read_text().splitlines() == ["n,log_scale,log_quantity", "1,-1.0,0.5", "2,-2.0,1.0", "# f"]


# ------------------------------------------------------------ covering / packing


def _oracle_runs(spec, r):
    moran = spec if isinstance(spec, MoranSpec) else spec.moran()
    length, n = 1.0, 0
    while length > r:
        n += 1
        length *= moran.ratio(n)
    lefts, ln = level_intervals(moran, n)
    runs = []
    for a in sorted(lefts):
        if runs and a <= runs[-1][1] + 1e-9 * ln:
            runs[-1][1] = a + ln
        else:
            runs.append([a, a + ln])
    return runs


def _oracle_cover(spec, r):
    """Greedy optimal cover of a finite union of intervals by radius-r balls centred in it."""
    runs = _oracle_runs(spec, r)
    starts = [a for a, _ in runs]
    count, x = 0, runs[0][0]
    while True:
        j = bisect.bisect_right(starts, x + r) - 1
        c = min(runs[j][1], x + r)
        count += 1
        reach = c + r
        k = bisect.bisect_right(starts, reach) - 1
        if reach < runs[k][1]:
            x = np.nextafter(reach, np.inf)
        elif k + 1 < len(runs):
            x = runs[k + 1][0]
        else:
            return count


def _oracle_pack(spec, r):
    runs = _oracle_runs(spec, r)
    count, last = 0, -math.inf
    for a, b in runs:
        x = max(a, np.nextafter(last + 2 * r, np.inf))
        while x <= b:
            count += 1
            last = x
            x = np.nextafter(x + 2 * r, np.inf)
    return count


@pytest.mark.parametrize("spec", [FibonacciMoran(), NonRegularMoran(), MoranSpec.constant(2, 0.3)],
                         ids=["fib", "nonreg", "binary"])
@pytest.mark.parametrize("r", [0.2, 0.05, 0.013, 0.004, 0.0011])
def test_covering_and_packing_match_oracle(spec, r):
    assert covering_count(spec, r) == _oracle_cover(spec, r)
    assert packing_count(spec, r) == _oracle_pack(spec, r)
    assert packing_centres(spec, r).size == packing_count(spec, r)


@given(r=st.floats(1e-4, 0.5))
def test_packing_vs_covering_inequalities(r):
    spec = NonRegularMoran()
    M, N = packing_count(spec, r), covering_count(spec, r)
    assert M <= N
    assert covering_count(spec, min(1.0, 2 * r)) <= M


def test_packing_centres_are_separated():
    c = packing_centres(FibonacciMoran(), 0.003)
    assert np.all(np.diff(c) > 2 * 0.003)


def test_ultrametric_counts():
    m = FourLetter()
    assert covering_count(m, 4.0**-5) == 4**5 == packing_count(m, 4.0**-5)


def test_geometry_cap():
    with pytest.raises(CapExceededError):
        covering_count(NonRegularMoran(), 1e-9, cap=1000)


def test_uniform_binary_box_dimension():
    est = box_dimensions(MoranSpec.constant(2, 0.25), max_depth=16)
    assert abs(est.liminf_est - 0.5) < 0.03 and abs(est.limsup_est - 0.5) < 0.03


def test_full_interval_box_dimension():
    est = box_dimensions(SwitchedBernoulli(), max_depth=300)
    assert 0.98 < est.liminf_est <= est.limsup_est <= 1.0 + 1e-12
    pk = box_dimensions(SwitchedBernoulli(), max_depth=300, kind="packing")
    assert 0.98 < pk.liminf_est <= 1.0 + 1e-12


def test_nonregular_box_dims_bracketed_by_q0_moments():
    m = NonRegularMoran()
    depth = max_geometry_depth(m)
    est = box_dimensions(m, max_depth=depth)
    mom = moment_scaling(m, 0.0, range(1, depth + 1), subsequence=est.subsequence_used)
    assert est.liminf_est == pytest.approx(mom.liminf_est, abs=0.05)
    assert est.limsup_est == pytest.approx(mom.limsup_est, abs=0.05)


def test_max_geometry_depth_respects_cap():
    m = FibonacciMoran()
    d = max_geometry_depth(m)
    size = 1
    for k in range(1, d + 1):
        size *= m.branching(k)
    assert size <= GEOMETRY_BUDGET < size * m.branching(d + 1)


# ------------------------------------------------------------ level sets


@given(m=st.integers(0, 40), h=st.sampled_from([0.01, 0.05, 0.3]))
def test_composition_histogram_counts_all_words(m, h):
    for lw in ((-1.2, -0.4), (-2.0, -1.0, -0.5), tuple(np.log([0.1, 0.2, 0.3, 0.4]))):
        hist = composition_histogram(tuple(float(x) for x in lw), m, h)
        assert hist.total() == pytest.approx(m * math.log(len(lw)), abs=1e-9)


@pytest.mark.parametrize("weights", [(0.3, 0.7), (0.2, 0.3, 0.5), (0.1, 0.2, 0.3, 0.4)])
def test_composition_histogram_against_enumeration(weights):
    lw = tuple(float(x) for x in np.log(weights))
    m, h = 7, 0.05
    L = np.zeros(1)
    for _ in range(m):
        L = (L[:, None] + np.array(lw)[None, :]).ravel()
    hist = composition_histogram(lw, m, h)
    reps, counts = hist.reps, np.exp(hist.logc)
    # binning moves each word by at most a couple of bin widths
    for t in np.linspace(L.min() - 0.1, L.max() + 0.1, 60):
        binned = counts[reps <= t].sum()
        assert np.sum(L <= t - 2 * h) - 1e-6 <= binned <= np.sum(L <= t + 2 * h) + 1e-6


def test_log_histogram_convolution():
    a = LogHistogram(0, 0.5, 1.0, np.log([1.0, 2.0]))
    b = LogHistogram(3, 0.5, 1.0, np.log([1.0, 1.0, 1.0]))
    c = a.convolve(b)
    assert c.start == 3 and c.shift == 1.0
    np.testing.assert_allclose(np.exp(c.logc), [1, 3, 3, 2])


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.family)
@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.3])
def test_coarse_level_set_brackets_brute_force(spec, alpha):
    n, eps = 9, 0.1
    lm = level_log_measures(spec, n)
    D = -spec.log_diameter(n)
    exps = -lm / D
    h = bin_width(spec, n, eps) / D

    def count(e):
        return int(np.sum(np.abs(exps - alpha) <= e))

    c = coarse_level_set(spec, alpha, eps, n)
    got = 0 if c.log_count == -math.inf else math.exp(c.log_count)
    assert count(eps - 2 * h) - 1e-6 <= got <= count(eps + 2 * h) + 1e-6


def test_level_histogram_total_mass():
    spec = FibonacciMoran()
    hist = level_histogram(spec, 200, 0.01)
    assert hist.total() == pytest.approx(math.log(2) * 124 + math.log(3) * 76, rel=1e-12)
    assert spec.regime_counts(200) == (124, 76)


def test_count_zero_outside_support():
    spec = SwitchedBernoulli()
    c = coarse_level_set(spec, 3.5, 0.05, 200)
    assert c.count == 0 and c.exponent == -math.inf


def test_uniform_level_set_spectrum():
    m = FourLetter(a=UNIFORM4, b=UNIFORM4)
    est = level_set_spectrum(m, 1.0, max_depth=719)
    assert est.lower == pytest.approx(1.0) and est.upper == pytest.approx(1.0)
    off = level_set_spectrum(m, 1.3, max_depth=719)
    assert off.lower == -math.inf and off.upper == -math.inf


def test_fibonacci_level_set_matches_transform():
    from mfhs.legendre import legendre_at
    from mfhs.spectra import SpectrumCurve, default_q_grid
    spec = FibonacciMoran()
    beta = SpectrumCurve.from_function("beta", analytic_curves(spec)["beta"], default_q_grid())
    a = 0.9
    est = level_set_spectrum(spec, a, max_depth=10000)
    target = legendre_at(beta, a)
    assert abs(est.lower - target) < 0.1 and abs(est.upper - target) < 0.1


def test_default_depths_and_resolvability():
    spec = SwitchedBernoulli()
    assert default_depths(spec, 5039) == [5, 23, 119, 719, 5039]
    assert not resolvable(spec, 5, 0.02)
    assert resolvable(spec, 5039, 0.02)
    assert len(default_depths(FibonacciMoran(), 10000)) <= 12


def test_level_set_rejects_empty_schedules():
    with pytest.raises(ValueError):
        level_set_spectrum(SwitchedBernoulli(), 1.0, eps_schedule=())
    with pytest.raises(InsufficientDepthsError):
        level_set_spectrum(SwitchedBernoulli(), 1.0, eps_schedule=(0.01,), depth_schedule=(3,))
