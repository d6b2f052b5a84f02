"""Receive-antenna activation patterns and pattern-set selection.

A pattern marks which of a user's ``n_r`` antennas carry information
symbols in a channel use. A pattern set holds the ``n_c = 2**k_ssk``
patterns that the spatial bits of a user index into.

Patterns are stored in canonical order: lexicographically ascending
tuples of (0-based) active antenna indices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "EnumerationCapError",
    "Pattern",
    "PatternSet",
    "PatternSpace",
    "count_combinations",
    "spatial_bits",
    "throughput",
    "enumerate_patterns",
    "mean_pattern",
    "set_cost",
    "optimize_pattern_set",
    "optimize_pattern_set_exhaustive",
    "random_pattern_set",
    "DEFAULT_ENUMERATION_CAP",
]

DEFAULT_ENUMERATION_CAP = 10**6
# Guard against building absurdly large integers in count_combinations.
_MAX_COMBINATIONS = 2**63 - 1


class EnumerationCapError(ValueError):
    """Raised when the number of candidate pattern sets exceeds the cap."""


def count_combinations(n_r: int, n_iba: int) -> int:
    """Number of ways to pick ``n_iba`` active antennas out of ``n_r``."""
    if n_r < 1:
        raise ValueError(f"n_r must be >= 1, got {n_r}")
    if not 1 <= n_iba <= n_r:
        raise ValueError(f"n_iba must satisfy 1 <= n_iba <= n_r={n_r}, got {n_iba}")
    c = math.comb(n_r, n_iba)
    if c > _MAX_COMBINATIONS:
        raise OverflowError(f"C({n_r}, {n_iba}) exceeds the representable range")
    return c


def spatial_bits(c_t: int) -> int:
    """floor(log2(c_t)) using integer arithmetic only."""
    if c_t < 1:
        raise ValueError(f"c_t must be >= 1, got {c_t}")
    return c_t.bit_length() - 1


def _log2_exact(m: int) -> int:
    if m < 2 or m & (m - 1):
        raise ValueError(f"modulation order must be a power of 2 and >= 2, got {m}")
    return m.bit_length() - 1


def throughput(k: int, k_ssk: int, n_iba: int, m: int) -> int:
    """Bits per channel use delivered to all ``k`` users."""
    return k * (k_ssk + n_iba * _log2_exact(m))


@dataclass(frozen=True, order=True)
class Pattern:
    """Binary activation vector over a user's receive antennas.

    Parameters
    ----------
    n_r : int
        Number of receive antennas of the user.
    active : tuple of int
        Strictly increasing 0-based indices of the information-bearing
        antennas.
    """

    n_r: int
    active: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(i) for i in self.active)
        object.__setattr__(self, "active", a)
        if not a:
            raise ValueError("a pattern needs at least one active antenna")
        if any(j <= i for i, j in zip(a, a[1:])):
            raise ValueError(f"active indices must be strictly increasing: {a}")
        if a[0] < 0 or a[-1] >= self.n_r:
            raise ValueError(f"active indices {a} out of range for n_r={self.n_r}")

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "Pattern":
        bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"pattern entries must be 0 or 1: {bits}")
        return cls(len(bits), tuple(i for i, b in enumerate(bits) if b))

    @property
    def n_iba(self) -> int:
        return len(self.active)

    @property
    def bits(self) -> np.ndarray:
        q = np.zeros(self.n_r, dtype=np.int64)
        q[list(self.active)] = 1
        return q

    def one_based(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in self.active)


@dataclass(frozen=True)
class PatternSet:
    """Ordered set of distinct patterns sharing ``n_r`` and ``n_iba``.

    The patterns are sorted into canonical order on construction, so the
    position of a pattern in ``patterns`` is the value its spatial bits
    encode.
    """

    patterns: tuple[Pattern, ...]

    def __post_init__(self):
        pats = tuple(sorted(self.patterns, key=lambda p: p.active))
        if not pats:
            raise ValueError("pattern set is empty")
        n_r, n_iba = pats[0].n_r, pats[0].n_iba
        for p in pats:
            if p.n_r != n_r or p.n_iba != n_iba:
                raise ValueError("all patterns of a set must share n_r and n_iba")
        if len({p.active for p in pats}) != len(pats):
            raise ValueError("patterns of a set must be pairwise distinct")
        n_c = len(pats)
        if n_c & (n_c - 1):
            raise ValueError(f"pattern set size must be a power of 2, got {n_c}")
        object.__setattr__(self, "patterns", pats)

    @classmethod
    def from_tuples(cls, n_r: int, tuples: Sequence[Sequence[int]], one_based: bool = True) -> "PatternSet":
        off = 1 if one_based else 0
        return cls(tuple(Pattern(n_r, tuple(i - off for i in t)) for t in tuples))

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def __getitem__(self, i):
        return self.patterns[i]

    @property
    def n_r(self) -> int:
        return self.patterns[0].n_r

    @property
    def n_iba(self) -> int:
        return self.patterns[0].n_iba

    @property
    def n_c(self) -> int:
        return len(self.patterns)

    @cached_property
    def matrix(self) -> np.ndarray:
        """``(n_r, n_c)`` 0/1 matrix whose columns are the patterns."""
        return np.stack([p.bits for p in self.patterns], axis=1)

    @cached_property
    def active_indices(self) -> np.ndarray:
        """``(n_c, n_iba)`` integer array of active antennas per pattern."""
        return np.array([p.active for p in self.patterns], dtype=np.intp)

    @property
    def mean(self) -> np.ndarray:
        return mean_pattern(self)

    def mean_exact(self) -> list[Fraction]:
        counts = self.matrix.sum(axis=1)
        return [Fraction(int(c), self.n_c) for c in counts]

    def one_based(self) -> list[tuple[int, ...]]:
        return [p.one_based() for p in self.patterns]


def enumerate_patterns(n_r: int, n_iba: int) -> list[Pattern]:
    """All ``C(n_r, n_iba)`` patterns in canonical order."""
    count_combinations(n_r, n_iba)
    return [Pattern(n_r, c) for c in itertools.combinations(range(n_r), n_iba)]


def mean_pattern(pset: PatternSet) -> np.ndarray:
    """Average activation per antenna over the patterns of ``pset``."""
    return pset.matrix.sum(axis=1) / pset.n_c


def set_cost(pset: PatternSet, g) -> float:
    """Energy cost ``g . mean_pattern(pset)`` of transmitting with ``pset``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (pset.n_r,):
        raise ValueError(f"g must have shape ({pset.n_r},), got {g.shape}")
    return float(g @ pset.matrix.sum(axis=1)) / pset.n_c


@dataclass(frozen=True)
class PatternSpace:
    """Combinatorial characteristics of a (n_r, n_iba) configuration."""

    n_r: int
    n_iba: int

    def __post_init__(self):
        count_combinations(self.n_r, self.n_iba)

    @property
    def c_t(self) -> int:
        return count_combinations(self.n_r, self.n_iba)

    @property
    def k_ssk(self) -> int:
        return spatial_bits(self.c_t)

    @property
    def n_c(self) -> int:
        return 1 << self.k_ssk

    @property
    def l(self) -> int:
        return math.comb(self.c_t, self.n_c)

    def rate(self, k: int, m: int) -> int:
        return throughput(k, self.k_ssk, self.n_iba, m)

    def patterns(self) -> list[Pattern]:
        return enumerate_patterns(self.n_r, self.n_iba)

    def check_cap(self, cap: int = DEFAULT_ENUMERATION_CAP):
        if self.l > cap:
            raise EnumerationCapError(
                f"L={self.l} candidate sets for n_r={self.n_r}, n_iba={self.n_iba} "
                f"exceeds the enumeration cap {cap}"
            )

    def candidate_index_tuples(self):
        """Canonical candidate sets, as tuples of pattern indices."""
        return itertools.combinations(range(self.c_t), self.n_c)

    def set_at(self, index: int) -> PatternSet:
        """Candidate set number ``index`` in canonical set order.

        Uses the combinatorial number system, so no enumeration is needed.
        """
        if not 0 <= index < self.l:
            raise IndexError(f"set index {index} out of range [0, {self.l})")
        pats = self.patterns()
        chosen = []
        start, remaining = 0, index
        for slots in range(self.n_c, 0, -1):
            for c in range(start, self.c_t):
                block = math.comb(self.c_t - c - 1, slots - 1)
                if remaining < block:
                    chosen.append(c)
                    start = c + 1
                    break
                remaining -= block
        return PatternSet(tuple(pats[c] for c in chosen))

    def index_of(self, pset: PatternSet) -> int:
        """Inverse of :meth:`set_at`."""
        if pset.n_r != self.n_r or pset.n_iba != self.n_iba or pset.n_c != self.n_c:
            raise ValueError("pattern set does not belong to this pattern space")
        lookup = {p.active: i for i, p in enumerate(self.patterns())}
        idx = [lookup[p.active] for p in pset]
        rank, prev = 0, -1
        for slot, c in enumerate(idx):
            slots_left = self.n_c - slot
            for skipped in range(prev + 1, c):
                rank += math.comb(self.c_t - skipped - 1, slots_left - 1)
            prev = c
        return rank


def optimize_pattern_set(g, space: PatternSpace, cap: int = DEFAULT_ENUMERATION_CAP) -> PatternSet:
    """Minimum-cost pattern set, picked pattern by pattern.

    The cost of a set is the mean of the per-pattern costs ``g . q``, so
    the optimum is made of the ``n_c`` cheapest patterns. Ties go to the
    lower canonical pattern index, which reproduces the smallest canonical
    set index among all optimal sets.
    """
    space.check_cap(cap)
    g = np.asarray(g, dtype=float)
    if g.shape != (space.n_r,):
        raise ValueError(f"g must have shape ({space.n_r},), got {g.shape}")
    pats = space.patterns()
    costs = np.array([g[list(p.active)].sum() for p in pats])
    order = np.lexsort((np.arange(len(pats)), costs))
    return PatternSet(tuple(pats[i] for i in sorted(order[: space.n_c])))


def optimize_pattern_set_exhaustive(g, space: PatternSpace, cap: int = DEFAULT_ENUMERATION_CAP) -> PatternSet:
    """Minimum-cost pattern set by scoring every one of the ``L`` candidates."""
    space.check_cap(cap)
    g = np.asarray(g, dtype=float)
    if g.shape != (space.n_r,):
        raise ValueError(f"g must have shape ({space.n_r},), got {g.shape}")
    pats = space.patterns()
    pat_matrix = np.stack([p.bits for p in pats])  # (c_t, n_r)
    best_cost, best = np.inf, None
    chunk = 1 << 14
    it = space.candidate_index_tuples()
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        idx = np.array(block, dtype=np.intp)
        counts = pat_matrix[idx].sum(axis=1)  # (chunk, n_r) integer activation counts
        cost = counts @ g / space.n_c
        j = int(np.argmin(cost))  # argmin returns the first minimum
        if cost[j] < best_cost:
            best_cost, best = cost[j], block[j]
    return PatternSet(tuple(pats[i] for i in best))


def random_pattern_set(space: PatternSpace, rng: np.random.Generator,
                       cap: int = DEFAULT_ENUMERATION_CAP) -> PatternSet:
    """Uniform draw among the ``L`` candidate pattern sets."""
    space.check_cap(cap)
    return space.set_at(int(rng.integers(space.l)))
