"""The five cascade measure families and their level-wise evaluators.

Every family is a product measure over levels: level j picks one of two
regimes, each regime fixing a probability vector (one weight per branch)
and a contraction ratio.  All arithmetic is done on natural logs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, Iterator

import numpy as np
from scipy.special import logsumexp

from .errors import CapExceededError, ConstraintError, InvalidBranchError
from .symbolic import (
    MoranSpec,
    Schedule,
    Word,
    as_word,
    fibonacci_a_count,
    phase_flip_depths,
    schedule_flip_depths,
)

ENUM_CAP = 2**26
PROB_TOL = 1e-12


@dataclass(frozen=True)
class Regime:
    label: str
    weights: tuple[float, ...]
    ratio: float

    @cached_property
    def log_weights(self) -> np.ndarray:
        return np.log(np.asarray(self.weights, dtype=float))

    @property
    def branching(self) -> int:
        return len(self.weights)

    def log_moment(self, q: float) -> float:
        """log sum_i w_i^q; exactly 0 at q = 1."""
        if q == 1:
            return 0.0
        return float(logsumexp(q * self.log_weights))


def _check_prob(name: str, vec, size: int | None = None) -> tuple[float, ...]:
    v = tuple(float(x) for x in vec)
    if size is not None and len(v) != size:
        raise ConstraintError(name, f"{name} must have {size} entries, got {len(v)}")
    if any(not x > 0 for x in v):
        raise ConstraintError(name, f"{name} = {v} must be strictly positive")
    s = math.fsum(v)
    if abs(s - 1.0) > PROB_TOL:
        raise ConstraintError(name, f"{name} = {v} sums to {s!r}, not 1")
    return v


def _check(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ConstraintError(name, message)


@dataclass(frozen=True)
class MeasureSpec:
    """Shared behaviour; subclasses define ``regimes`` and ``regime_of``."""

    family: ClassVar[str] = ""
    ultrametric: ClassVar[bool] = False

    @property
    def regimes(self) -> tuple[Regime, Regime]:
        raise NotImplementedError

    def regime_of(self, j: int) -> int:
        raise NotImplementedError

    def regime_counts(self, n: int) -> tuple[int, int]:
        first = sum(1 for j in range(1, n + 1) if self.regime_of(j) == 0)
        return first, n - first

    def level_regime(self, j: int) -> Regime:
        return self.regimes[self.regime_of(j)]

    def branching(self, j: int) -> int:
        return self.level_regime(j).branching

    def ratio(self, j: int) -> float:
        return self.level_regime(j).ratio

    def moran(self) -> MoranSpec:
        return MoranSpec(branching=self.branching, ratio=self.ratio)

    def log_diameter(self, n: int) -> float:
        counts = self.regime_counts(n)
        return sum(c * math.log(r.ratio) for c, r in zip(counts, self.regimes))

    def flip_depths(self, max_depth: int) -> list[int]:
        return phase_flip_depths(self.regime_of, max_depth)

    def params(self) -> dict:
        raise NotImplementedError


# ------------------------------------------------------------------ families


@dataclass(frozen=True)
class FibonacciMoran(MeasureSpec):
    """Moran set driven by the Fibonacci word: letter a -> 2 branches, b -> 3."""

    r_a: float = 0.4
    r_b: float = 0.3
    P_a: tuple[float, ...] = (0.3, 0.7)
    P_b: tuple[float, ...] = (0.2, 0.3, 0.5)
    family: ClassVar[str] = "FibonacciMoran"

    def __post_init__(self):
        _check(0 < self.r_a < 0.5, "r_a", f"r_a = {self.r_a} violates 0 < r_a < 1/2")
        _check(0 < self.r_b < 1 / 3, "r_b", f"r_b = {self.r_b} violates 0 < r_b < 1/3")
        object.__setattr__(self, "P_a", _check_prob("P_a", self.P_a, 2))
        object.__setattr__(self, "P_b", _check_prob("P_b", self.P_b, 3))

    @cached_property
    def regimes(self):
        return (Regime("a", self.P_a, self.r_a), Regime("b", self.P_b, self.r_b))

    def regime_of(self, j: int) -> int:
        return 0 if fibonacci_a_count(j) - fibonacci_a_count(j - 1) == 1 else 1

    def regime_counts(self, n: int) -> tuple[int, int]:
        a = fibonacci_a_count(n)
        return a, n - a

    def params(self):
        return {"r_a": self.r_a, "r_b": self.r_b, "P_a": self.P_a, "P_b": self.P_b}


@dataclass(frozen=True)
class NonRegularMoran(MeasureSpec):
    """Level 1 uses letter a; afterwards odd schedule phases use b, even use a."""

    r_a: float = 0.4
    r_b: float = 0.3
    p_a: tuple[float, ...] = (0.3, 0.7)
    p_b: tuple[float, ...] = (0.2, 0.3, 0.5)
    schedule: Schedule = field(default_factory=lambda: Schedule("doubling"))
    family: ClassVar[str] = "NonRegularMoran"

    def __post_init__(self):
        _check(0 < self.r_a < 0.5, "r_a", f"r_a = {self.r_a} violates 0 < r_a < 1/2")
        _check(0 < self.r_b < 1 / 3, "r_b", f"r_b = {self.r_b} violates 0 < r_b < 1/3")
        object.__setattr__(self, "p_a", _check_prob("p_a", self.p_a, 2))
        object.__setattr__(self, "p_b", _check_prob("p_b", self.p_b, 3))

    @cached_property
    def regimes(self):
        return (Regime("a", self.p_a, self.r_a), Regime("b", self.p_b, self.r_b))

    def regime_of(self, j: int) -> int:
        if j == 1:
            return 0
        return 1 if self.schedule.phase(j) % 2 == 1 else 0

    def regime_counts(self, n: int) -> tuple[int, int]:
        if n < 1:
            return 0, 0
        b = self.schedule.phase_count(n, odd=True) - (1 if self.schedule.phase(1) % 2 == 1 else 0)
        return n - b, b

    def flip_depths(self, max_depth: int) -> list[int]:
        return phase_flip_depths(self.regime_of, min(max_depth, 2)) + [
            d for d in schedule_flip_depths(self.schedule, max_depth) if d >= 2
        ]

    def params(self):
        return {"r_a": self.r_a, "r_b": self.r_b, "p_a": self.p_a, "p_b": self.p_b, "schedule": self.schedule}


@dataclass(frozen=True)
class SwitchedBernoulli(MeasureSpec):
    """Dyadic measure: weight p on [t_{2k-1}, t_{2k}), p_hat on [t_{2k}, t_{2k+1}).

    Branch 1 is the digit 0 and carries the small weight.
    """

    p: float = 0.2
    p_hat: float = 0.4
    schedule: Schedule = field(default_factory=lambda: Schedule("factorial"))
    family: ClassVar[str] = "SwitchedBernoulli"

    def __post_init__(self):
        _check(0 < self.p < self.p_hat <= 0.5, "p_hat" if self.p_hat > 0.5 or self.p_hat <= self.p else "p",
               f"p = {self.p}, p_hat = {self.p_hat} violates 0<p<p_hat<=1/2")

    @cached_property
    def regimes(self):
        return (Regime("p", (self.p, 1 - self.p), 0.5), Regime("p_hat", (self.p_hat, 1 - self.p_hat), 0.5))

    def regime_of(self, j: int) -> int:
        return 0 if self.schedule.phase(j) % 2 == 1 else 1

    def regime_counts(self, n: int) -> tuple[int, int]:
        first = self.schedule.phase_count(n, odd=True)
        return first, n - first

    def flip_depths(self, max_depth: int) -> list[int]:
        return schedule_flip_depths(self.schedule, max_depth)

    def params(self):
        return {"p": self.p, "p_hat": self.p_hat, "schedule": self.schedule}


@dataclass(frozen=True)
class FourLetter(MeasureSpec):
    """Measure on the 4-ary tree: weights a on odd phases, b on even phases.

    The ambient metric is 4^{-|w ^ v|}, so the ratio is 1/4 at every level.
    """

    a: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    b: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    schedule: Schedule = field(default_factory=lambda: Schedule("factorial"))
    family: ClassVar[str] = "FourLetter"
    ultrametric: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "a", _check_prob("a", self.a, 4))
        object.__setattr__(self, "b", _check_prob("b", self.b, 4))

    @cached_property
    def regimes(self):
        return (Regime("a", self.a, 0.25), Regime("b", self.b, 0.25))

    def regime_of(self, j: int) -> int:
        return 0 if self.schedule.phase(j) % 2 == 1 else 1

    def regime_counts(self, n: int) -> tuple[int, int]:
        first = self.schedule.phase_count(n, odd=True)
        return first, n - first

    def flip_depths(self, max_depth: int) -> list[int]:
        return schedule_flip_depths(self.schedule, max_depth)

    def params(self):
        return {"a": self.a, "b": self.b, "schedule": self.schedule}


@dataclass(frozen=True)
class YuanSwitching(MeasureSpec):
    """Binary Moran measure: (1/A, p) on (N_{2k}, N_{2k+1}], (1/B, p_tilde) on (N_{2k+1}, N_{2k+2}].

    N_0 = 0 and N_k (k >= 1) are the schedule values.
    """

    A: float = 5.0
    B: float = 3.0
    p: float = 0.2
    p_tilde: float = 0.4
    schedule: Schedule = field(default_factory=lambda: Schedule("factorial"))
    validate: bool = field(default=True, compare=False, repr=False)
    family: ClassVar[str] = "YuanSwitching"

    def __post_init__(self):
        if self.validate:
            _check(self.A > self.B > 2, "A" if self.A <= self.B else "B", f"A = {self.A}, B = {self.B} violates A>B>2")
        _check(0 < self.p <= 0.5, "p", f"p = {self.p} violates 0<p<=1/2")
        _check(0 < self.p_tilde <= 0.5, "p_tilde", f"p_tilde = {self.p_tilde} violates 0<p_tilde<=1/2")

    @cached_property
    def regimes(self):
        return (
            Regime("A", (self.p, 1 - self.p), 1.0 / self.A),
            Regime("B", (self.p_tilde, 1 - self.p_tilde), 1.0 / self.B),
        )

    def regime_of(self, i: int) -> int:
        # N_k < i <= N_{k+1}  <=>  t_k <= i - 1 < t_{k+1} with t_0 := N_0 = 0
        return 0 if self.schedule.phase(i - 1) % 2 == 0 else 1

    def regime_counts(self, n: int) -> tuple[int, int]:
        if n < 1:
            return 0, 0
        # shift by one: i in [1, n] <-> j = i - 1 in [0, n - 1]; j = 0 is phase 0 (even)
        odd = self.schedule.phase_count(n - 1, odd=True) if n > 1 else 0
        return n - odd, odd

    def flip_depths(self, max_depth: int) -> list[int]:
        return [t for t in self.schedule.prefix_upto(max_depth) if t < max_depth]

    def params(self):
        return {"A": self.A, "B": self.B, "p": self.p, "p_tilde": self.p_tilde, "schedule": self.schedule}


FAMILIES = {cls.family: cls for cls in (FibonacciMoran, NonRegularMoran, SwitchedBernoulli, FourLetter, YuanSwitching)}


# ---------------------------------------------------------------- evaluators


@dataclass(frozen=True)
class WeightedCylinder:
    word: Word
    log_measure: float
    log_diameter: float


def cylinder_measure(spec: MeasureSpec, word) -> float:
    word = as_word(word)
    total = 0.0
    for j, idx in enumerate(word.indices, start=1):
        reg = spec.level_regime(j)
        if idx > reg.branching:
            raise InvalidBranchError(f"index {idx} at level {j} exceeds {reg.branching} branches")
        total += reg.log_weights[idx - 1]
    return float(total)


def level_size(spec: MeasureSpec, n: int) -> int:
    size = 1
    for j in range(1, n + 1):
        size *= spec.branching(j)
    return size


def level_log_measures(spec: MeasureSpec, n: int, cap: int = ENUM_CAP) -> np.ndarray:
    """log mu(J_sigma) for every sigma in D_n, lexicographic order, by brute force."""
    size = level_size(spec, n)
    if size > cap:
        raise CapExceededError(f"|D_{n}| = {size} exceeds enumeration cap {cap}")
    out = np.zeros(1)
    for j in range(1, n + 1):
        out = (out[:, None] + spec.level_regime(j).log_weights[None, :]).ravel()
    return out


def iter_level_chunks(spec: MeasureSpec, n: int, chunk: int = 2**22) -> Iterator[np.ndarray]:
    """Stream all depth-n log-measures in blocks, fixing a prefix per block."""
    size = level_size(spec, n)
    split = 0
    tail = size
    while tail > chunk and split < n:
        split += 1
        tail //= spec.branching(split)
    heads = level_log_measures(spec, split, cap=2**40)
    tail_vals = np.zeros(1)
    for j in range(split + 1, n + 1):
        tail_vals = (tail_vals[:, None] + spec.level_regime(j).log_weights[None, :]).ravel()
    for h in heads:
        yield h + tail_vals


def level(spec: MeasureSpec, n: int, cap: int = ENUM_CAP) -> Iterator[WeightedCylinder]:
    size = level_size(spec, n)
    if size > cap:
        raise CapExceededError(f"|D_{n}| = {size} exceeds enumeration cap {cap}; use factored evaluations")
    log_diam = spec.log_diameter(n)

    def rec(prefix: tuple[int, ...], logm: float):
        j = len(prefix) + 1
        if j > n:
            yield WeightedCylinder(Word(prefix), logm, log_diam)
            return
        lw = spec.level_regime(j).log_weights
        for i in range(lw.size):
            yield from rec(prefix + (i + 1,), logm + lw[i])

    yield from rec((), 0.0)


def local_exponent(spec: MeasureSpec, word) -> float:
    word = as_word(word)
    if word.depth < 1:
        raise ValueError("local exponent needs depth >= 1")
    return cylinder_measure(spec, word) / spec.log_diameter(word.depth)


def _sample_indices(spec: MeasureSpec, depth: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, depth) array of 0-based branch choices, sampled level by level."""
    u = rng.random((size, depth))
    out = np.empty((size, depth), dtype=np.int64)
    for j in range(1, depth + 1):
        cdf = np.cumsum(spec.level_regime(j).weights)
        cdf[-1] = 1.0
        out[:, j - 1] = np.searchsorted(cdf, u[:, j - 1], side="right")
    return out


def sample_word(spec: MeasureSpec, depth: int, seed: int) -> Word:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    idx = _sample_indices(spec, depth, np.random.default_rng(seed), 1)[0]
    return Word(tuple(int(i) + 1 for i in idx))


def sample_log_measure_paths(spec: MeasureSpec, depth: int, n_samples: int, seed: int) -> np.ndarray:
    """Running log mu(J_{x|n}) for n = 1..depth along mu-distributed words.

    Levels are grouped by regime so deep paths stay cheap.
    """
    rng = np.random.default_rng(seed)
    regs = np.array([spec.regime_of(j) for j in range(1, depth + 1)])
    u = rng.random((n_samples, depth))
    incr = np.empty((n_samples, depth))
    for r, reg in enumerate(spec.regimes):
        cols = regs == r
        if not cols.any():
            continue
        cdf = np.cumsum(reg.weights)
        cdf[-1] = 1.0
        choice = np.searchsorted(cdf, u[:, cols], side="right")
        incr[:, cols] = reg.log_weights[choice]
    return np.cumsum(incr, axis=1)
