"""Words, homogeneous Moran geometry, Fibonacci words and switching schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import CapExceededError, DegenerateGapError, InvalidBranchError, ScheduleOverflowError

FIB_CAP = 10**7
INT64_MAX = 2**63 - 1
ETA = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Word:
    """Finite address in the Moran tree; branch indices are 1-based."""

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if any(i < 1 for i in self.indices):
            raise InvalidBranchError(f"branch indices are 1-based, got {self.indices}")

    @property
    def depth(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def child(self, j: int) -> "Word":
        return Word(self.indices + (j,))

    def prefix(self, k: int) -> "Word":
        return Word(self.indices[:k])


@dataclass(frozen=True)
class MoranSpec:
    """Branching n_k and contraction c_k as functions of the level k >= 1."""

    branching: Callable[[int], int]
    ratio: Callable[[int], float]

    @classmethod
    def constant(cls, n: int, c: float) -> "MoranSpec":
        return cls(branching=lambda k: n, ratio=lambda k: c)

    def check_level(self, k: int) -> None:
        n, c = self.branching(k), self.ratio(k)
        if n < 2 or not 0.0 < c < 1.0 or n * c > 1.0 + 1e-12:
            raise ValueError(f"level {k}: need n>=2, 0<c<1, n*c<=1 (got n={n}, c={c})")

    def gap(self, k: int) -> float:
        """Interior gap at level k as a fraction of the parent length."""
        n, c = self.branching(k), self.ratio(k)
        return (1.0 - n * c) / (n - 1)


@dataclass(frozen=True)
class CylinderGeom:
    left: float
    length: float

    @property
    def right(self) -> float:
        return self.left + self.length


def validate_word(word: Word, spec: MoranSpec) -> None:
    for k, j in enumerate(word.indices, start=1):
        if j > spec.branching(k):
            raise InvalidBranchError(f"index {j} at level {k} exceeds n_{k}={spec.branching(k)}")


def children(word: Word, spec: MoranSpec) -> list[Word]:
    n = spec.branching(word.depth + 1)
    return [word.child(j) for j in range(1, n + 1)]


def embed(word: Word, spec: MoranSpec) -> CylinderGeom:
    """Place J_word inside [0, 1]: flush ends, equal interior gaps."""
    validate_word(word, spec)
    left, length = 0.0, 1.0
    for k, j in enumerate(word.indices, start=1):
        spec.check_level(k)
        n, c = spec.branching(k), spec.ratio(k)
        if n * c >= 1.0 - 1e-12:
            raise DegenerateGapError(f"level {k}: n*c = {n * c} leaves no gap between siblings")
        gap = (1.0 - n * c) / (n - 1)
        left += (j - 1) * (c + gap) * length
        length *= c
    return CylinderGeom(left, length)


def level_intervals(spec: MoranSpec, n: int, cap: int = 2**26) -> tuple[np.ndarray, float]:
    """Left endpoints (sorted) and common length of all depth-n cylinders.

    Zero gaps are allowed here: touching siblings simply form longer runs.
    """
    lefts = np.zeros(1)
    length = 1.0
    for k in range(1, n + 1):
        nk, c = spec.branching(k), spec.ratio(k)
        if lefts.size * nk > cap:
            raise CapExceededError(f"depth {n} needs more than {cap} cylinders")
        step = (c + max(0.0, (1.0 - nk * c) / (nk - 1))) * length
        lefts = (lefts[:, None] + step * np.arange(nk)[None, :]).ravel()
        length *= c
    return lefts, length


# ---------------------------------------------------------------- Fibonacci


def fibonacci_word(n: int, cap: int = FIB_CAP) -> str:
    """Length-n prefix of the fixed point of a -> ab, b -> a."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > cap:
        raise CapExceededError(f"n={n} exceeds cap {cap}")
    prev, cur = "a", "ab"
    if n == 1:
        return "a"
    while len(cur) < n:
        prev, cur = cur, cur + prev
    return cur[:n]


def letter_frequency(n: int) -> tuple[int, float]:
    count = fibonacci_word(n).count("a")
    return count, count / n


def fibonacci_a_count(n: int) -> int:
    """|omega_n|_a in closed form, floor((n + 1) * eta), in exact integer arithmetic."""
    m = n + 1
    return (math.isqrt(5 * m * m) - m) // 2


def fibonacci_a_counts(n: int) -> np.ndarray:
    """Cumulative a-counts for prefixes of length 0..n, read off the word itself."""
    w = np.frombuffer(fibonacci_word(n).encode(), dtype=np.uint8)
    out = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(w == ord("a"), out=out[1:])
    return out


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Schedule:
    """Strictly increasing integer sequence t_1 < t_2 < ...

    kinds: ``doubling`` (1, 3, 6, 12, ...), ``factorial`` (k!), ``custom``.
    A custom list is treated as ending in an infinite final phase.
    """

    kind: str = "factorial"
    values: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("doubling", "factorial", "custom"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if self.kind == "custom":
            v = self.values
            if not v or any(b <= a for a, b in zip(v, v[1:])) or v[0] < 1:
                raise ValueError("custom schedule must be a non-empty strictly increasing list of positive integers")

    def value(self, k: int) -> int:
        if k < 1:
            raise ValueError("schedule index starts at 1")
        if self.kind == "doubling":
            t = 1 if k == 1 else 3 * 2 ** (k - 2)
        elif self.kind == "factorial":
            t = math.factorial(k)
        else:
            if k > len(self.values):
                raise IndexError(f"custom schedule has only {len(self.values)} values")
            t = self.values[k - 1]
        if t > INT64_MAX:
            raise ScheduleOverflowError(f"t_{k} = {t} exceeds the int64 range")
        return t

    def prefix_upto(self, j: int) -> list[int]:
        """All t_k <= j, plus the first value exceeding j when it exists."""
        return list(_prefix_upto(self, j))

    def phase(self, j: int) -> int:
        """k with t_k <= j < t_{k+1}; 0 when j < t_1."""
        vals = self.prefix_upto(j)
        k = 0
        for v in vals:
            if v <= j:
                k += 1
            else:
                break
        return k

    def phase_count(self, n: int, odd: bool = True) -> int:
        """How many j in [1, n] fall in odd (or even) phases."""
        vals = self.prefix_upto(n)
        total = 0
        bounds = [1] + vals  # phase k covers [bounds[k], bounds[k+1])
        for k in range(len(bounds)):
            lo = bounds[k]
            hi = bounds[k + 1] if k + 1 < len(bounds) else n + 1
            lo, hi = max(lo, 1), min(hi, n + 1)
            if hi > lo and (k % 2 == 1) == odd:
                total += hi - lo
        return total


@lru_cache(maxsize=4096)
def _prefix_upto(s: Schedule, j: int) -> tuple[int, ...]:
    out = []
    k = 1
    while True:
        try:
            t = s.value(k)
        except IndexError:
            break
        out.append(t)
        if t > j:
            break
        k += 1
    return tuple(out)


def schedule_value(s: Schedule, k: int) -> int:
    return s.value(k)


def regime_letter(s: Schedule, j: int) -> str:
    """'b' on odd phases [t_{2k-1}, t_{2k}), 'a' on even phases.

    Letters follow the non-regular Moran construction, whose odd phases use
    three branches (letter b).
    """
    if j < 1:
        raise ValueError("index starts at 1")
    return "b" if s.phase(j) % 2 == 1 else "a"


def phase_flip_depths(regime_of: Callable[[int], int], max_depth: int) -> list[int]:
    """Depths d < max_depth after which the governing regime changes."""
    return [d for d in range(1, max_depth) if regime_of(d) != regime_of(d + 1)]


def schedule_flip_depths(s: Schedule, max_depth: int) -> list[int]:
    """t_k - 1 for every t_k in (1, max_depth]; cheap for huge depths."""
    return [t - 1 for t in s.prefix_upto(max_depth) if 1 < t <= max_depth]


def enumerate_words(spec: MoranSpec, n: int, cap: int = 2**26) -> np.ndarray:
    """All depth-n words as an (count, n) array of 1-based indices, lexicographic."""
    total = 1
    for k in range(1, n + 1):
        total *= spec.branching(k)
    if total > cap:
        raise CapExceededError(f"|D_{n}| = {total} exceeds cap {cap}")
    grids = [np.arange(1, spec.branching(k) + 1) for k in range(1, n + 1)]
    if not grids:
        return np.zeros((1, 0), dtype=np.int64)
    mesh = np.meshgrid(*grids, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def as_word(indices: Sequence[int] | Word) -> Word:
    return indices if isinstance(indices, Word) else Word(tuple(indices))
