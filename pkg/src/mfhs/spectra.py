"""Closed-form dimension functions of the example families.

All functions accept scalar or array ``q``.  Sums of powers are evaluated as
log-sum-exp so that large |q| never overflows.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import BracketError
from .measures import (
    FibonacciMoran,
    FourLetter,
    MeasureSpec,
    NonRegularMoran,
    SwitchedBernoulli,
    YuanSwitching,
    level_log_measures,
)
from .symbolic import ETA, letter_frequency

LOG2 = math.log(2.0)
LOG4 = math.log(4.0)


def default_q_grid(q_min: float = -5.0, q_max: float = 5.0, step: float = 0.05) -> np.ndarray:
    n = int(round((q_max - q_min) / step))
    return np.round(q_min + step * np.arange(n + 1), 12)


def log_power_sum(q, weights) -> np.ndarray | float:
    """log sum_i w_i^q, vectorised over q; exactly 0 at q = 1 for probability vectors."""
    w = np.asarray(weights, dtype=float)
    lw = np.log(w)
    qa = np.asarray(q, dtype=float)
    out = logsumexp(qa[..., None] * lw, axis=-1)
    if abs(math.fsum(w) - 1.0) <= 1e-12:
        out = np.where(qa == 1.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ Fibonacci Moran


def beta_k_fibonacci(q, k: int, spec: FibonacciMoran):
    n_a, _ = letter_frequency(k)
    rho = (k - n_a) / n_a
    num = -log_power_sum(q, spec.P_a) - rho * log_power_sum(q, spec.P_b)
    return num / (math.log(spec.r_a) + rho * math.log(spec.r_b))


def beta_fibonacci(q, spec: FibonacciMoran):
    num = -log_power_sum(q, spec.P_a) - ETA * log_power_sum(q, spec.P_b)
    return num / (math.log(spec.r_a) + ETA * math.log(spec.r_b))


def log_partition_factored(spec: MeasureSpec, k: int, q: float) -> float:
    if q == 1:
        return 0.0
    counts = spec.regime_counts(k)
    return float(sum(c * reg.log_moment(q) for c, reg in zip(counts, spec.regimes) if c))


def beta_k(spec: MeasureSpec, q, k: int):
    """Closed form -log S_k(q) / log|J_k| for any level-product family."""
    counts = spec.regime_counts(k)
    num = sum(c * log_power_sum(q, r.weights) for c, r in zip(counts, spec.regimes) if c)
    return -num / spec.log_diameter(k)


def beta_k_bisection(spec: MeasureSpec, q: float, k: int, oracle: bool = False,
                     tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of F(beta) = log sum_sigma mu^q |J_sigma|^beta, by bisection.

    ``oracle=True`` sums over the enumerated level instead of the factorised
    product.  Diameters are homogeneous at each depth, so |J_sigma| = |J_k|.
    """
    if oracle:
        log_s = float(logsumexp(q * level_log_measures(spec, k)))
    else:
        log_s = log_partition_factored(spec, k, q)
    log_j = spec.log_diameter(k)

    def F(beta):
        return log_s + beta * log_j

    lo, hi = -64.0, 64.0
    while F(lo) * F(hi) > 0:
        if hi >= 1e3:
            raise BracketError(f"no sign change of F on [{lo}, {hi}]")
        lo, hi = 2 * lo, 2 * hi
    if F(lo) == 0:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if abs(fm) <= tol or hi - lo < 1e-15:
            return mid
        if (fm > 0) == (F(lo) > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ------------------------------------------------------------ non-regular Moran


def _nonregular_combo(q, spec: NonRegularMoran, x: float):
    num = x * log_power_sum(q, spec.p_a) + (1 - x) * log_power_sum(q, spec.p_b)
    return -num / (x * math.log(spec.r_a) + (1 - x) * math.log(spec.r_b))


def beta_bounds_nonregular(q, spec: NonRegularMoran):
    c1, c2 = _nonregular_combo(q, spec, 1 / 3), _nonregular_combo(q, spec, 2 / 3)
    return np.minimum(c1, c2), np.maximum(c1, c2)


# ------------------------------------------------------------ switched Bernoulli


def tau_switched(q, which: str, spec: SwitchedBernoulli):
    p = {"lower": spec.p, "upper": spec.p_hat}[which]
    return log_power_sum(q, (p, 1 - p)) / LOG2


def tau_derivative(q, p: float):
    """d/dq log2(p^q + (1-p)^q) = s log2 p + (1 - s) log2(1 - p)."""
    q = np.asarray(q, dtype=float)
    s = 1.0 / (1.0 + np.exp(q * (math.log(1 - p) - math.log(p))))
    out = (s * math.log(p) + (1 - s) * math.log(1 - p)) / LOG2
    return float(out) if out.ndim == 0 else out


def b_B_switched(q, spec: SwitchedBernoulli):
    lo, up = tau_switched(q, "lower", spec), tau_switched(q, "upper", spec)
    return np.minimum(lo, up), np.maximum(lo, up)


def switched_case(q: float) -> str:
    """Which branch realises b and B, following the case table for p < p_hat."""
    if q in (0.0, 1.0):
        return "b = B"
    if 0 < q < 1:
        return "b = tau_lower < tau_upper = B"
    return "b = tau_upper < tau_lower = B"


def entropy_H(s: float) -> float:
    if not 0 < s < 1:
        raise ValueError(f"entropy needs 0 < s < 1, got {s}")
    return (-s * math.log(s) + (s - 1) * math.log1p(-s)) / LOG2


def mixed_entropy_h(p_hat: float, p: float) -> float:
    if not 0 <= p_hat <= 1 or not 0 < p < 1:
        raise ValueError(f"mixed entropy needs p_hat in [0,1], p in (0,1); got {p_hat}, {p}")
    return (-p_hat * math.log(p) - (1 - p_hat) * math.log1p(-p)) / LOG2


def switched_window(spec: SwitchedBernoulli) -> tuple[float, float]:
    """(-tau_upper'(+inf), -tau_upper'(-inf)) = (h(0, p_hat), h(1, p_hat))."""
    return mixed_entropy_h(0.0, spec.p_hat), mixed_entropy_h(1.0, spec.p_hat)


def switched_kink_intervals(spec: SwitchedBernoulli) -> list[tuple[float, float]]:
    """Alpha intervals where the q = 0 and q = 1 kinks of b and B sit."""
    p, ph = spec.p, spec.p_hat
    at0 = sorted((mixed_entropy_h(0.5, p), mixed_entropy_h(0.5, ph)))
    at1 = sorted((mixed_entropy_h(p, p), mixed_entropy_h(ph, ph)))
    return [tuple(at0), tuple(at1)]


# ------------------------------------------------------------ four-letter tree


def b_B_fourletter(q, spec: FourLetter):
    la, lb = log_power_sum(q, spec.a) / LOG4, log_power_sum(q, spec.b) / LOG4
    return np.minimum(la, lb), np.maximum(la, lb)


# ------------------------------------------------------------ Yuan model


def yuan_betas(q, spec: YuanSwitching):
    b1 = log_power_sum(q, (spec.p, 1 - spec.p)) / math.log(spec.A)
    b2 = log_power_sum(q, (spec.p_tilde, 1 - spec.p_tilde)) / math.log(spec.B)
    return b1, b2


# ------------------------------------------------------------ dispatch


def analytic_curves(spec: MeasureSpec) -> dict[str, Callable]:
    """Label -> vectorised closed form, including b, B and Delta."""
    if isinstance(spec, FibonacciMoran):
        beta = lambda q: beta_fibonacci(q, spec)
        return {"beta": beta, "b": beta, "B": beta, "Delta": beta}
    if isinstance(spec, NonRegularMoran):
        lo = lambda q: beta_bounds_nonregular(q, spec)[0]
        up = lambda q: beta_bounds_nonregular(q, spec)[1]
        return {
            "beta_lower": lo, "beta_upper": up,
            "beta_1/3": lambda q: _nonregular_combo(q, spec, 1 / 3),
            "beta_2/3": lambda q: _nonregular_combo(q, spec, 2 / 3),
            "b": lo, "B": up, "Delta": up,
        }
    if isinstance(spec, SwitchedBernoulli):
        return {
            "tau_lower": lambda q: tau_switched(q, "lower", spec),
            "tau_upper": lambda q: tau_switched(q, "upper", spec),
            "b": lambda q: b_B_switched(q, spec)[0],
            "B": lambda q: b_B_switched(q, spec)[1],
            "Delta": lambda q: b_B_switched(q, spec)[1],
        }
    if isinstance(spec, FourLetter):
        return {
            "tau_a": lambda q: log_power_sum(q, spec.a) / LOG4,
            "tau_b": lambda q: log_power_sum(q, spec.b) / LOG4,
            "b": lambda q: b_B_fourletter(q, spec)[0],
            "B": lambda q: b_B_fourletter(q, spec)[1],
            "Delta": lambda q: b_B_fourletter(q, spec)[1],
        }
    if isinstance(spec, YuanSwitching):
        return {
            "beta1": lambda q: yuan_betas(q, spec)[0],
            "beta2": lambda q: yuan_betas(q, spec)[1],
            "b": lambda q: np.minimum(*yuan_betas(q, spec)),
            "B": lambda q: np.maximum(*yuan_betas(q, spec)),
            "Delta": lambda q: np.maximum(*yuan_betas(q, spec)),
        }
    raise TypeError(f"no closed forms for {type(spec).__name__}")


# Labels whose curves are convex by construction (maxima or single branches).
BRANCH_LABELS = {"beta", "beta_upper", "beta_1/3", "beta_2/3", "tau_lower", "tau_upper",
                 "tau_a", "tau_b", "beta1", "beta2", "B", "Delta"}


@dataclass
class SpectrumCurve:
    q_grid: np.ndarray
    values: np.ndarray
    label: str
    evaluator: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.q_grid = np.asarray(self.q_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.q_grid.shape != self.values.shape:
            raise ValueError("grid and values differ in length")
        if np.any(np.diff(self.q_grid) <= 0):
            raise ValueError("q grid must be strictly increasing")

    @classmethod
    def from_function(cls, label: str, fn: Callable, q_grid=None) -> "SpectrumCurve":
        q = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float)
        return cls(q, np.asarray(fn(q), dtype=float), label, fn)

    def __call__(self, q):
        if self.evaluator is not None:
            return self.evaluator(q)
        return np.interp(q, self.q_grid, self.values)

    def rows(self):
        return [(repr(float(q)), repr(float(v)), self.label) for q, v in zip(self.q_grid, self.values)]


def write_curves_csv(path: Path, curves, footer: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "value", "label"])
        for c in curves:
            w.writerows(c.rows())
        if footer:
            fh.write(footer + "\n")


def read_curves_csv(path: Path) -> dict[str, SpectrumCurve]:
    data: dict[str, tuple[list, list]] = {}
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    for q, v, label in rows[1:]:
        qs, vs = data.setdefault(label, ([], []))
        qs.append(float(q))
        vs.append(float(v))
    return {k: SpectrumCurve(np.array(q), np.array(v), k) for k, (q, v) in data.items()}
