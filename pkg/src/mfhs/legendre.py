"""Numerical Legendre transforms chi*(alpha) = inf_q (alpha q + chi(q)).

Grid minima are refined by bounded golden-section search when the curve
carries a closed-form evaluator.  A minimiser stuck at a grid end is probed
outward geometrically; persistent descent is reported as ``-inf``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import UnboundedBelowError
from .spectra import SpectrumCurve

NEG_INF = -math.inf
PROBE_DOUBLINGS = 40
DIVERGENCE_SLOPE = 1e-9
KINK_TOL = 1e-6


@dataclass
class TransformCurve:
    alpha_grid: np.ndarray
    values: np.ndarray
    source_label: str

    def __post_init__(self):
        self.alpha_grid = np.asarray(self.alpha_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.alpha_grid.shape != self.values.shape:
            raise ValueError("alpha grid and values differ in length")
        if np.any(np.diff(self.alpha_grid) <= 0):
            raise ValueError("alpha grid must be strictly increasing")

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def support_is_interval(self) -> bool:
        idx = np.flatnonzero(self.finite)
        return idx.size == 0 or idx[-1] - idx[0] + 1 == idx.size

    def max_second_difference(self) -> float:
        """Largest discrete second difference over finite, evenly spaced triples."""
        a, v = self.alpha_grid, self.values
        worst = -math.inf
        for i in range(1, a.size - 1):
            if not (np.isfinite(v[i - 1]) and np.isfinite(v[i]) and np.isfinite(v[i + 1])):
                continue
            h1, h2 = a[i] - a[i - 1], a[i + 1] - a[i]
            # divided second difference scaled to a unit-spacing stencil
            d2 = ((v[i + 1] - v[i]) / h2 - (v[i] - v[i - 1]) / h1) * 0.5 * (h1 + h2)
            worst = max(worst, d2)
        return worst

    def __call__(self, alpha: float) -> float:
        """Linear interpolation on the finite part; -inf outside it."""
        f = self.finite
        if not f.any():
            return NEG_INF
        a, v = self.alpha_grid[f], self.values[f]
        if alpha < a[0] or alpha > a[-1]:
            return NEG_INF
        return float(np.interp(alpha, a, v))

    def write_csv(self, path: Path, footer: str | None = None) -> None:
        write_transforms_csv(path, [self], footer)


def write_transforms_csv(path: Path, curves, footer: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "value", "source_label"])
        for c in curves:
            for a, v in zip(c.alpha_grid, c.values):
                w.writerow([repr(float(a)), repr(float(v)), c.source_label])
        if footer:
            fh.write(footer + "\n")


def _grid_step(fn: SpectrumCurve) -> float:
    return float(np.min(np.diff(fn.q_grid)))


def _outward_slopes(fn: SpectrumCurve, alpha: float) -> tuple[float, float]:
    """Slopes of g(q) = alpha q + fn(q) moving outward from each grid end."""
    q, v = fn.q_grid, fn.values
    h = _grid_step(fn)
    if fn.evaluator is not None:
        left = -(alpha + float(one_sided_derivatives(fn, q[0], h)[0]))
        right = alpha + float(one_sided_derivatives(fn, q[-1], h)[1])
    else:
        left = -(alpha + (v[1] - v[0]) / (q[1] - q[0]))
        right = alpha + (v[-1] - v[-2]) / (q[-1] - q[-2])
    return left, right


def _probe(fn: SpectrumCurve, alpha: float, q0: float, direction: int) -> float:
    """Follow g outward from the grid end; -inf if it keeps falling."""
    ev = fn.evaluator
    h = _grid_step(fn)
    g = lambda t: alpha * t + float(ev(t))
    ts = [q0]
    gs = [g(q0)]
    for k in range(PROBE_DOUBLINGS):
        t = q0 + direction * h * 2.0**k
        ts.append(t)
        gs.append(g(t))
        if gs[-1] > gs[-2]:
            lo, hi = sorted((ts[-3] if len(ts) > 2 else q0, t))
            res = minimize_scalar(g, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            return min(float(res.fun), min(gs))
    slope = (gs[-1] - gs[-2]) / abs(ts[-1] - ts[-2])
    if slope < -DIVERGENCE_SLOPE:
        return NEG_INF
    return min(gs)


def legendre_at(fn: SpectrumCurve, alpha: float) -> float:
    q, v = fn.q_grid, fn.values
    g = alpha * q + v
    i = int(np.argmin(g))
    best = float(g[i])
    left, right = _outward_slopes(fn, alpha)
    tol = DIVERGENCE_SLOPE
    if left < -tol and right < -tol:
        raise UnboundedBelowError(f"alpha={alpha}: alpha*q + {fn.label}(q) falls at both grid ends")
    at_end = i == 0 or i == q.size - 1
    if not at_end:
        if fn.evaluator is None:
            return best
        ev = fn.evaluator
        res = minimize_scalar(lambda t: alpha * t + float(ev(t)), bounds=(q[i - 1], q[i + 1]),
                              method="bounded", options={"xatol": 1e-12})
        return min(best, float(res.fun))
    direction = -1 if i == 0 else 1
    slope = left if i == 0 else right
    if fn.evaluator is None:
        return NEG_INF if slope < -tol else best
    return min(best, _probe(fn, alpha, float(q[i]), direction))


def one_sided_derivatives(fn: SpectrumCurve, q: float, step: float | None = None) -> tuple[float, float]:
    """Left and right derivatives by Richardson extrapolation over h, h/2, h/4."""
    h = _grid_step(fn) if step is None else step
    if fn.evaluator is None:
        return _grid_derivatives(fn, q)
    f = lambda t: float(fn.evaluator(t))
    f0 = f(q)

    def richardson(sign: int) -> float:
        d = [(f(q + sign * s) - f0) / (sign * s) for s in (h, h / 2, h / 4)]
        r1 = [2 * d[1] - d[0], 2 * d[2] - d[1]]
        return (4 * r1[1] - r1[0]) / 3

    return richardson(-1), richardson(1)


def _grid_derivatives(fn: SpectrumCurve, q: float) -> tuple[float, float]:
    grid, v = fn.q_grid, fn.values
    i = int(np.argmin(np.abs(grid - q)))
    # second-order one-sided stencils where room allows
    if i >= 2:
        left = (3 * v[i] - 4 * v[i - 1] + v[i - 2]) / (2 * (grid[i] - grid[i - 1]))
    elif i == 1:
        left = (v[1] - v[0]) / (grid[1] - grid[0])
    else:
        left = (v[1] - v[0]) / (grid[1] - grid[0])
    n = grid.size
    if i <= n - 3:
        right = (-3 * v[i] + 4 * v[i + 1] - v[i + 2]) / (2 * (grid[i + 1] - grid[i]))
    elif i == n - 2:
        right = (v[-1] - v[-2]) / (grid[-1] - grid[-2])
    else:
        right = (v[-1] - v[-2]) / (grid[-1] - grid[-2])
    return float(left), float(right)


def is_differentiable(fn: SpectrumCurve, q: float, tol: float = KINK_TOL) -> bool:
    left, right = one_sided_derivatives(fn, q)
    return abs(left - right) <= tol


def alpha_range(fn: SpectrumCurve) -> tuple[float, float]:
    """[-right derivative at q_max, -left derivative at q_min]."""
    lo = -one_sided_derivatives(fn, float(fn.q_grid[-1]))[1]
    hi = -one_sided_derivatives(fn, float(fn.q_grid[0]))[0]
    return lo, hi


def spectrum_curve(fn: SpectrumCurve, alpha_grid=None, n_alpha: int = 201) -> TransformCurve:
    if alpha_grid is None:
        lo, hi = alpha_range(fn)
        if hi - lo <= 1e-12:
            alpha_grid = np.array([0.5 * (lo + hi)])
        else:
            alpha_grid = np.linspace(lo, hi, n_alpha)
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    vals = np.array([legendre_at(fn, float(a)) for a in alpha_grid])
    return TransformCurve(alpha_grid, vals, fn.label)


def inverse_transform(tc: TransformCurve, q: float) -> float:
    """sup_alpha (chi*(alpha) - alpha q) over the finite part of the curve."""
    f = tc.finite
    return float(np.max(tc.values[f] - tc.alpha_grid[f] * q))


def alpha_bounds(fn: SpectrumCurve) -> tuple[float, float]:
    """(sup_{q>0} -b(q)/q, inf_{q<0} -b(q)/q) over the grid."""
    q, v = fn.q_grid, fn.values
    pos, neg = q > 0, q < 0
    lo = float(np.max(-v[pos] / q[pos])) if pos.any() else NEG_INF
    hi = float(np.min(-v[neg] / q[neg])) if neg.any() else math.inf
    return lo, hi
