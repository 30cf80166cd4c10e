"""Finite-scale estimators: partition sums, covering/packing counts, coarse spectra."""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import CapExceededError, InsufficientDepthsError
from .measures import ENUM_CAP, MeasureSpec, iter_level_chunks, level_log_measures, level_size
from .symbolic import MoranSpec

ORACLE_MAX_DEPTH = 16
EPS_SCHEDULE = (0.2, 0.1, 0.05, 0.02)
STABILITY_TOL = 0.02
# Coarse histograms are binned at min(eps, EPS_FLOOR)/10 in exponent units, so
# every eps >= EPS_FLOOR reads windows off one shared histogram.
EPS_FLOOR = 0.02
GEOMETRY_CAP = 2**24
# default enumeration budget when choosing how deep dims runs go
GEOMETRY_BUDGET = 2**21


# ------------------------------------------------------------ partition sums


def _fast_power_sum(mu: np.ndarray, q: float) -> float:
    if q == 0:
        return float(mu.size)
    if q == 1:
        return float(mu.sum())
    if q == 2:
        return float(np.dot(mu, mu))
    if q == 0.5:
        return float(np.sqrt(mu).sum())
    if q == -1:
        return float((1.0 / mu).sum())
    if q == -2:
        inv = 1.0 / mu
        return float(np.dot(inv, inv))
    return float(np.power(mu, q).sum())


def brute_force_log_partition(spec: MeasureSpec, n: int, qs: Sequence[float], chunk: int = 2**22) -> np.ndarray:
    """log sum over every enumerated cylinder of mu^q, for several q in one pass."""
    qs = list(qs)
    if level_size(spec, n) <= ENUM_CAP:
        logm = level_log_measures(spec, n)
        return np.array([0.0 if q == 1 else float(logsumexp(q * logm)) for q in qs])
    # Beyond the cap: stream blocks in linear scale. Fine while mu^q stays in
    # double range, which holds for every family up to the oracle depth.
    sums = np.zeros(len(qs))
    for block in iter_level_chunks(spec, n, chunk):
        mu = np.exp(block)
        for i, q in enumerate(qs):
            sums[i] += _fast_power_sum(mu, q)
    return np.array([0.0 if q == 1 else math.log(s) for q, s in zip(qs, sums)])


def partition_sum(spec: MeasureSpec, n: int, q: float, oracle: bool = False) -> float:
    """log sum_{sigma in D_n} mu(J_sigma)^q."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    if oracle and n <= ORACLE_MAX_DEPTH:
        return float(brute_force_log_partition(spec, n, [q])[0])
    if q == 1:
        return 0.0
    n0, n1 = spec.regime_counts(n)
    r0, r1 = spec.regimes
    out = 0.0
    if n0:
        out += n0 * r0.log_moment(q)
    if n1:
        out += n1 * r1.log_moment(q)
    return out


def regime_count_table(spec: MeasureSpec, max_depth: int) -> np.ndarray:
    """Cumulative count of regime-0 levels for depths 0..max_depth."""
    out = _regime_count_table(spec, max_depth)
    return out.copy()


@lru_cache(maxsize=64)
def _regime_count_table(spec: MeasureSpec, max_depth: int) -> np.ndarray:
    regs = np.fromiter((spec.regime_of(j) == 0 for j in range(1, max_depth + 1)), dtype=np.int64, count=max_depth)
    out = np.zeros(max_depth + 1, dtype=np.int64)
    np.cumsum(regs, out=out[1:])
    return out


# ------------------------------------------------------------ series types


@dataclass
class ScaleSeries:
    depths: np.ndarray
    log_scale: np.ndarray
    log_quantity: np.ndarray
    quantity_label: str

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.int64)
        self.log_scale = np.asarray(self.log_scale, dtype=float)
        self.log_quantity = np.asarray(self.log_quantity, dtype=float)
        if not (self.depths.size == self.log_scale.size == self.log_quantity.size):
            raise ValueError("series columns differ in length")
        if np.any(np.diff(self.log_scale) >= 0):
            raise ValueError("log_scale must strictly decrease")
        if self.depths.size and np.any(np.diff(self.depths) != 1):
            raise ValueError("depths must form a contiguous range")

    @property
    def ratios(self) -> np.ndarray:
        return self.log_quantity / -self.log_scale

    def ratio_at(self, n: int) -> float:
        return float(self.ratios[n - self.depths[0]])

    def rows(self):
        return [(int(n), repr(float(s)), repr(float(v)))
                for n, s, v in zip(self.depths, self.log_scale, self.log_quantity)]

    def write_csv(self, path: Path, footer: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "log_scale", "log_quantity"])
            w.writerows(self.rows())
            if footer:
                fh.write(footer + "\n")


@dataclass
class DimEstimate:
    series: ScaleSeries
    liminf_est: float
    limsup_est: float
    subsequence_used: tuple[int, ...]

    def __post_init__(self):
        if self.liminf_est > self.limsup_est:
            raise ValueError("liminf estimate exceeds limsup estimate")

    def summary_row(self) -> tuple:
        return (self.series.quantity_label, repr(self.liminf_est), repr(self.limsup_est),
                " ".join(str(d) for d in self.subsequence_used))


def _extract(series: ScaleSeries, candidates: Sequence[int], warmup: int) -> DimEstimate:
    lo_d, hi_d = int(series.depths[0]), int(series.depths[-1])
    used = tuple(sorted({int(d) for d in candidates if d >= warmup and lo_d <= d <= hi_d}))
    if len(used) < 4:
        raise InsufficientDepthsError(
            f"only {len(used)} subsequence depths >= {warmup} within [{lo_d}, {hi_d}]; need 4")
    vals = np.array([series.ratio_at(d) for d in used])
    return DimEstimate(series, float(vals.min()), float(vals.max()), used)


def moment_scaling(spec: MeasureSpec, q: float, depths: Sequence[int], warmup: int = 4,
                   subsequence: Sequence[int] | None = None) -> DimEstimate:
    """Exponent ratios log S_n(q) / (-log r_n) with liminf/limsup along phase flips."""
    depths = list(depths)
    if not depths:
        raise InsufficientDepthsError("no depths given")
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must increase")
    lo, hi = depths[0], depths[-1]
    ns = np.arange(lo, hi + 1)
    cum = regime_count_table(spec, hi)
    n0 = cum[ns]
    n1 = ns - n0
    r0, r1 = spec.regimes
    log_scale = n0 * math.log(r0.ratio) + n1 * math.log(r1.ratio)
    if q == 1:
        logq = np.zeros(ns.size)
    else:
        logq = n0 * r0.log_moment(q) + n1 * r1.log_moment(q)
    series = ScaleSeries(ns, log_scale, logq, f"moment q={q!r}")
    if subsequence is None:
        subsequence = spec.flip_depths(hi + 1)
    return _extract(series, subsequence, warmup)


# ------------------------------------------------------------ covering / packing


def _moran_of(spec) -> MoranSpec:
    return spec if isinstance(spec, MoranSpec) else spec.moran()


def _resolution_depth(moran: MoranSpec, r: float) -> int:
    length, n = 1.0, 0
    while length > r:
        n += 1
        length *= moran.ratio(n)
    return n


def _tiles_parent(moran: MoranSpec, k: int) -> bool:
    return moran.branching(k) * moran.ratio(k) >= 1.0 - 1e-12


def _runs(spec, r: float, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Maximal closed intervals of the depth-n(r) cylinder union.

    Once every remaining level tiles its parent the union stops changing, so
    enumeration ends there.
    """
    moran = _moran_of(spec)
    n = _resolution_depth(moran, r)
    tiling = [_tiles_parent(moran, k) for k in range(1, n + 1)]
    lefts, length = np.zeros(1), 1.0
    for k in range(1, n + 1):
        nk, c = moran.branching(k), moran.ratio(k)
        if all(tiling[k - 1:]):
            break
        if lefts.size * nk > cap:
            raise CapExceededError(f"scale r={r} needs depth {n} with more than {cap} cylinders")
        step = (c + (1.0 - nk * c) / (nk - 1)) * length
        lefts = (lefts[:, None] + step * np.arange(nk)[None, :]).ravel()
        length *= c
    rights = lefts + length
    tol = 1e-9 * length
    breaks = np.flatnonzero(lefts[1:] > rights[:-1] + tol)
    starts = np.r_[0, breaks + 1]
    ends = np.r_[breaks, lefts.size - 1]
    return lefts[starts], rights[ends]


def _ultrametric_depth(r: float) -> int:
    m = 0
    while 4.0**-m > r:
        m += 1
    return m


def covering_count(spec, r: float, cap: int = GEOMETRY_CAP) -> int:
    """Minimal number of closed radius-r balls centred in the set that cover it."""
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    if getattr(spec, "ultrametric", False):
        return 4 ** _ultrametric_depth(r)
    a, b = _runs(spec, r, cap)
    count, i, x = 0, 0, a[0]
    nruns = a.size
    two_r = 2 * r
    while True:
        if x + r <= b[i]:
            k = int((b[i] - x - r) // two_r) + 1
            count += k
            end = x + two_r * k
        else:
            # centre at the rightmost set point not beyond x + r
            j = bisect.bisect_right(a, x + r, lo=i) - 1
            c = min(b[j], x + r)
            count += 1
            end = c + r
        j = bisect.bisect_right(a, end, lo=i) - 1
        if end < b[j]:
            i, x = j, float(np.nextafter(end, np.inf))
        elif j + 1 < nruns:
            i, x = j + 1, a[j + 1]
        else:
            return count


def packing_centres(spec, r: float, cap: int = GEOMETRY_CAP) -> np.ndarray:
    """Greedy left-to-right centres with pairwise distance > 2r (disjoint closed balls)."""
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    a, b = _runs(spec, r, cap)
    two_r = 2 * r
    out: list[np.ndarray] = []
    i, c = 0, a[0]
    while True:
        # centres c, c + 2r(+), ... inside run i
        k = max(0, math.ceil((b[i] - c) / two_r) - 1)
        block = c + two_r * np.arange(k + 1)
        block[1:] = np.nextafter(block[1:], np.inf)
        out.append(block)
        nxt = float(np.nextafter(block[-1] + two_r, np.inf))
        j = bisect.bisect_right(a, nxt, lo=i) - 1
        if nxt <= b[j]:
            i, c = j, nxt
        elif j + 1 < a.size:
            i, c = j + 1, a[j + 1]
        else:
            return np.concatenate(out)


def packing_count(spec, r: float, cap: int = GEOMETRY_CAP) -> int:
    """Size of the greedy packing, counted without materialising the centres."""
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    if getattr(spec, "ultrametric", False):
        return 4 ** _ultrametric_depth(r)
    a, b = _runs(spec, r, cap)
    two_r = 2 * r
    count, i, c = 0, 0, a[0]
    while True:
        k = max(0, math.ceil((b[i] - c) / two_r) - 1)
        count += k + 1
        last = c + two_r * k
        if k:
            last = float(np.nextafter(last, np.inf))
        nxt = float(np.nextafter(last + two_r, np.inf))
        j = bisect.bisect_right(a, nxt, lo=i) - 1
        if nxt <= b[j]:
            i, c = j, nxt
        elif j + 1 < a.size:
            i, c = j + 1, a[j + 1]
        else:
            return count


def max_geometry_depth(spec, cap: int = GEOMETRY_BUDGET, limit: int = 200) -> int:
    """Deepest level whose interval union stays within the enumeration cap."""
    if getattr(spec, "ultrametric", False):
        return min(limit, 30)
    moran = _moran_of(spec)
    size, n = 1, 0
    while n < limit:
        k = n + 1
        if not _tiles_parent(moran, k):
            if size * moran.branching(k) > cap:
                break
            size *= moran.branching(k)
        n = k
    return n


def box_dimensions(spec, r_schedule: Sequence[float] | None = None, max_depth: int = 18,
                   warmup: int = 4, subsequence: Sequence[int] | None = None,
                   kind: str = "covering") -> DimEstimate:
    """log N_r / (-log r) along r = cylinder diameter at consecutive depths.

    ``kind="packing"`` uses the packing count M_r instead of N_r.
    """
    counter = {"covering": covering_count, "packing": packing_count}[kind]
    moran = _moran_of(spec)
    if r_schedule is None:
        r_schedule, length = [], 1.0
        for n in range(1, max_depth + 1):
            length *= moran.ratio(n)
            r_schedule.append(length)
    rs = [float(r) for r in r_schedule]
    if any(r2 >= r1 for r1, r2 in zip(rs, rs[1:])):
        raise ValueError("r schedule must decrease")
    depths = [_resolution_depth(moran, r * (1 + 1e-12)) for r in rs]
    log_n = [math.log(counter(spec, r)) for r in rs]
    series = ScaleSeries(np.arange(depths[0], depths[0] + len(rs)), np.log(rs), log_n, kind)
    if subsequence is None:
        flips = spec.flip_depths(depths[-1] + 1) if isinstance(spec, MeasureSpec) else []
        subsequence = [d for d in flips if d >= warmup]
        if len(subsequence) < 4:
            # no usable phase structure: fall back to the second half of the range
            subsequence = [int(d) for d in series.depths[series.depths.size // 2:]]
    return _extract(series, subsequence, warmup)


# ------------------------------------------------------------ coarse level sets


@dataclass(frozen=True)
class LogHistogram:
    """Counts of words by total log-weight L, binned on the lattice (start + i + shift) * h."""

    start: int
    shift: float
    h: float
    logc: np.ndarray = field(compare=False)

    @property
    def reps(self) -> np.ndarray:
        return (self.start + np.arange(self.logc.size) + self.shift) * self.h

    def convolve(self, other: "LogHistogram") -> "LogHistogram":
        a, b = self.logc, other.logc
        if a.size > b.size:
            a, b = b, a
        out = np.full(a.size + b.size - 1, -np.inf)
        for i in range(a.size):
            if a[i] > -np.inf:
                seg = out[i:i + b.size]
                np.logaddexp(seg, a[i] + b, out=seg)
        return LogHistogram(self.start + other.start, self.shift + other.shift, self.h, out)

    def scaled(self, log_factor: float) -> "LogHistogram":
        return LogHistogram(self.start, self.shift, self.h, self.logc + log_factor)

    def total(self) -> float:
        return float(logsumexp(self.logc))

    def window(self, lo: float, hi: float) -> float:
        r = self.reps
        sel = (r >= lo) & (r <= hi)
        return float(logsumexp(self.logc[sel])) if sel.any() else -math.inf


def _keyed_logsumexp(keys: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    k, v = keys[order], vals[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    mx = np.maximum.reduceat(v, starts)
    rep = np.repeat(mx, np.diff(np.r_[starts, k.size]))
    return k[starts], mx + np.log(np.add.reduceat(np.exp(v - rep), starts))


def _binned(L: np.ndarray, logc: np.ndarray, h: float) -> LogHistogram:
    keys = np.floor(L / h).astype(np.int64)
    uk, lv = _keyed_logsumexp(keys, logc)
    dense = np.full(int(uk[-1] - uk[0]) + 1, -np.inf)
    dense[uk - uk[0]] = lv
    return LogHistogram(int(uk[0]), 0.5, h, dense)


def _merge(hists: list[LogHistogram]) -> LogHistogram:
    shift, h = hists[0].shift, hists[0].h
    lo = min(x.start for x in hists)
    hi = max(x.start + x.logc.size for x in hists)
    out = np.full(hi - lo, -np.inf)
    for x in hists:
        seg = out[x.start - lo:x.start - lo + x.logc.size]
        np.logaddexp(seg, x.logc, out=seg)
    return LogHistogram(lo, shift, h, out)


def _log_binom(m, k):
    return gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)


@lru_cache(maxsize=1 << 16)
def composition_histogram(log_w: tuple[float, ...], m: int, h: float) -> LogHistogram:
    """Histogram of sum_j log w_{i_j} over all b^m index strings of length m."""
    lw = np.asarray(log_w)
    b = lw.size
    if m == 0:
        return _binned(np.zeros(1), np.zeros(1), h)
    if b == 1:
        return _binned(np.array([m * lw[0]]), np.zeros(1), h)
    if b == 2:
        k = np.arange(m + 1, dtype=float)
        return _binned(k * lw[0] + (m - k) * lw[1], _log_binom(m, k), h)
    if b == 3:
        keys_all, vals_all, parts = [], [], []
        pending = 0
        lg_m = gammaln(m + 1)
        for k0 in range(m + 1):
            k1 = np.arange(m - k0 + 1, dtype=float)
            k2 = m - k0 - k1
            L = k0 * lw[0] + k1 * lw[1] + k2 * lw[2]
            keys_all.append(np.floor(L / h).astype(np.int64))
            vals_all.append(lg_m - gammaln(k0 + 1) - gammaln(k1 + 1) - gammaln(k2 + 1))
            pending += k1.size
            if pending > 1 << 21 or k0 == m:
                uk, lv = _keyed_logsumexp(np.concatenate(keys_all), np.concatenate(vals_all))
                dense = np.full(int(uk[-1] - uk[0]) + 1, -np.inf)
                dense[uk - uk[0]] = lv
                parts.append(LogHistogram(int(uk[0]), 0.5, h, dense))
                keys_all, vals_all, pending = [], [], 0
        return _merge(parts)
    # four or more branches: split the sorted weights into two halves and
    # sum over how many levels fall in the first half
    srt = tuple(sorted(log_w))
    left, right = srt[: b // 2], srt[b // 2:]
    parts = [
        composition_histogram(left, j, h).convolve(composition_histogram(right, m - j, h)).scaled(
            float(_log_binom(m, j)))
        for j in range(m + 1)
    ]
    return _merge(parts)


def level_histogram(spec: MeasureSpec, n: int, h: float) -> LogHistogram:
    """Histogram of log mu(J_sigma) over sigma in D_n at bin width h."""
    counts = spec.regime_counts(n)
    hs = [composition_histogram(tuple(map(float, reg.log_weights)), c, h)
          for c, reg in zip(counts, spec.regimes)]
    return _level_histogram_cached(spec, n, h, hs[0], hs[1])


@lru_cache(maxsize=256)
def _level_histogram_cached(spec, n, h, h0, h1):
    return h0.convolve(h1)


@dataclass(frozen=True)
class LevelSetCount:
    alpha: float
    eps: float
    n: int
    log_count: float
    exponent: float

    @property
    def count(self) -> int | None:
        """Integer count when it fits comfortably in a double, else None."""
        if self.log_count == -math.inf:
            return 0
        if self.log_count > 700:
            return None
        return int(round(math.exp(self.log_count)))


def bin_width(spec: MeasureSpec, n: int, eps: float) -> float:
    return min(eps, EPS_FLOOR) / 10 * -spec.log_diameter(n)


def coarse_level_set(spec: MeasureSpec, alpha: float, eps: float, n: int) -> LevelSetCount:
    """Words at depth n whose local exponent lies in [alpha - eps, alpha + eps]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    D = -spec.log_diameter(n)
    hist = level_histogram(spec, n, bin_width(spec, n, eps))
    lc = hist.window(-(alpha + eps) * D, -(alpha - eps) * D)
    return LevelSetCount(alpha, eps, n, lc, lc / D if lc > -math.inf else -math.inf)


@dataclass(frozen=True)
class LevelSetEstimate:
    alpha: float
    lower: float
    upper: float
    eps: float
    stable: bool
    readings: tuple[tuple[float, float, float], ...]
    depths: tuple[int, ...]


def _close(x: float, y: float, tol: float) -> bool:
    if math.isinf(x) or math.isinf(y):
        return x == y
    return abs(x - y) <= tol


def default_depths(spec: MeasureSpec, max_depth: int, warmup: int = 4, max_points: int = 12) -> list[int]:
    """Phase-flip depths past the warm-up; geometric thinning when flips are dense."""
    flips = [d for d in spec.flip_depths(max_depth + 1) if d >= warmup]
    if len(flips) <= max_points:
        return flips
    targets = np.geomspace(max(warmup, flips[0]), flips[-1], max_points)
    return sorted({flips[int(np.argmin(np.abs(np.array(flips) - t)))] for t in targets})


def exponent_step(spec: MeasureSpec, n: int) -> float:
    """Largest change in local exponent from altering one letter of a depth-n word."""
    counts = spec.regime_counts(n)
    span = max(float(np.ptp(r.log_weights)) for c, r in zip(counts, spec.regimes) if c)
    return span / -spec.log_diameter(n)


def resolvable(spec: MeasureSpec, n: int, eps: float) -> bool:
    """Whether eps-windows at depth n are wider than the exponent lattice spacing."""
    return exponent_step(spec, n) <= 2 * eps


def level_set_spectrum(spec: MeasureSpec, alpha: float, eps_schedule: Sequence[float] = EPS_SCHEDULE,
                       depth_schedule: Sequence[int] | None = None, max_depth: int = 5039) -> LevelSetEstimate:
    """liminf/limsup of the coarse exponent over the depth subsequence, per eps.

    For each eps only depths where the window can resolve single-letter
    changes are read; an eps with no such depth is skipped.
    """
    eps_list = sorted(set(float(e) for e in eps_schedule), reverse=True)
    if not eps_list:
        raise ValueError("eps schedule is empty")
    depths = list(depth_schedule) if depth_schedule is not None else default_depths(spec, max_depth)
    if not depths:
        raise ValueError("depth schedule is empty")
    readings = []
    for eps in eps_list:
        usable = [n for n in depths if resolvable(spec, n, eps)]
        if not usable:
            continue
        ex = [coarse_level_set(spec, alpha, eps, n).exponent for n in usable]
        readings.append((eps, min(ex), max(ex)))
    if not readings:
        raise InsufficientDepthsError(f"no depth in {depths} resolves eps >= {eps_list[-1]}")
    for i in range(len(readings) - 1, 0, -1):
        e, lo, up = readings[i]
        _, lo_p, up_p = readings[i - 1]
        if _close(lo, lo_p, STABILITY_TOL) and _close(up, up_p, STABILITY_TOL):
            return LevelSetEstimate(alpha, lo, up, e, True, tuple(readings), tuple(depths))
    e, lo, up = readings[-1]
    return LevelSetEstimate(alpha, lo, up, e, len(readings) == 1, tuple(readings), tuple(depths))
